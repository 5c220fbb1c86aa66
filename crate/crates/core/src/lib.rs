//! Matching kernels for zero-shot novel-object instance segmentation.
//!
//! Proposals and object templates are described by a class embedding plus a
//! grid of patch embeddings. Each proposal is scored against every object by
//! combining
//!
//! - a semantic score: the top-k mean class-token cosine over the object's
//!   templates,
//! - an appearance score: the best, over templates, average best-match patch
//!   similarity, where crop patches whose roundtrip match (crop -> template ->
//!   crop) lands more than `delta_ct` grid cells away contribute zero,
//! - the proposal's own box/mask confidence as a multiplicative weight.
//!
//! Labels come from a row-wise argmax of the resulting score matrix, followed
//! by score thresholding and mask NMS. [`evaluation`] implements the
//! mask-IoU average precision protocol used to grade the detections.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the synthetic
//! benchmark generator and the command line live in the `noctis` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod assignment;
pub mod descriptor;
pub mod error;
pub mod evaluation;
#[cfg(any(test, feature = "oracle"))]
pub mod reference_oracle;
pub mod rle;
pub mod scoring;
pub mod similarity;

pub use assignment::{
    assign_labels, confidence_filter, mask_nms, prefilter_proposals, run_matching, Assignment,
    AssignmentConfig, DetectionResult,
};
pub use descriptor::{
    BBox, Embedding, GridPos, ObjectTemplates, PatchGridDescriptor, ProposalRecord,
    SceneProposals, TemplateLibrary,
};
pub use error::{Error, Result};
pub use evaluation::{average_precision, bop_iou_thresholds, ApReport, GroundTruthAnnotation};
pub use rle::{mask_iou, rle_decode, rle_encode, BinaryMask, RleMask};
pub use scoring::{
    appearance_score, instance_score_matrix, instance_score_matrix_with_stats,
    object_matching_score, proposal_confidence, semantic_score, sub_appearance_score,
    InstanceScoreMatrix, ScoreConfig, ScoringStats,
};
