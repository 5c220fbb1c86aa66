use noctis_core::similarity::pairwise_patch_similarity;
use noctis_core::{
    appearance_score, average_precision, bop_iou_thresholds, instance_score_matrix, mask_iou,
    object_matching_score, rle_encode, run_matching, semantic_score, sub_appearance_score,
    AssignmentConfig, BBox, BinaryMask, DetectionResult, Embedding, GroundTruthAnnotation,
    ObjectTemplates, PatchGridDescriptor, ProposalRecord, RleMask, SceneProposals, ScoreConfig,
    TemplateLibrary,
};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn vector(rng: &mut ChaCha8Rng, dim: usize, nonneg: bool) -> Vec<f32> {
    let lo = if nonneg { 0.01 } else { -1.0 };
    (0..dim).map(|_| rng.random_range(lo..1.0f32)).collect()
}

fn descriptor(rng: &mut ChaCha8Rng, grid: usize, dim: usize, nonneg: bool) -> PatchGridDescriptor {
    let mut cells: Vec<usize> = (0..grid * grid).collect();
    cells.shuffle(rng);
    let n = rng.random_range(1..=cells.len().min(24));
    let patches: Vec<_> = cells[..n]
        .iter()
        .map(|&c| (((c / grid) as u16, (c % grid) as u16), vector(rng, dim, nonneg)))
        .collect();
    let cls = Embedding::new(vector(rng, dim, nonneg)).unwrap();
    PatchGridDescriptor::from_valid_patches(grid, cls, &patches).unwrap()
}

fn strip(c0: u32, c1: u32) -> RleMask {
    rle_encode(&BinaryMask::from_fn(1, 100, |_, c| c >= c0 && c < c1))
}

fn scene(rng: &mut ChaCha8Rng, n: usize, grid: usize, dim: usize) -> SceneProposals {
    let proposals = (0..n)
        .map(|_| {
            let c0 = rng.random_range(0..90);
            let c1 = rng.random_range(c0 + 1..=100);
            ProposalRecord {
                bbox: BBox::new(c0 as f64, 0.0, (c1 - c0) as f64, 1.0),
                mask: strip(c0, c1),
                box_conf: rng.random_range(0.0..=1.0),
                mask_conf: rng.random_range(0.0..=1.0),
                descriptor: descriptor(rng, grid, dim, false),
            }
        })
        .collect();
    SceneProposals { scene_id: 1, image_id: 1, image_size: (100, 1), proposals }
}

fn library(rng: &mut ChaCha8Rng, n_obj: usize, grid: usize, dim: usize) -> TemplateLibrary {
    let objects = (1..=n_obj as u32)
        .map(|id| {
            let n_t = rng.random_range(1..=7);
            ObjectTemplates {
                object_id: id,
                templates: (0..n_t).map(|_| descriptor(rng, grid, dim, false)).collect(),
            }
        })
        .collect();
    TemplateLibrary::new(objects).unwrap()
}

fn det(score: f64, mask: RleMask) -> DetectionResult {
    DetectionResult {
        scene_id: 0,
        image_id: 0,
        object_id: 1,
        score,
        bbox: BBox::new(0.0, 0.0, 1.0, 1.0),
        mask,
        proposal_index: 0,
    }
}

fn gt(mask: RleMask) -> GroundTruthAnnotation {
    GroundTruthAnnotation { scene_id: 0, image_id: 0, object_id: 1, mask, ignore: false }
}

fn random_eval(rng: &mut ChaCha8Rng) -> (Vec<DetectionResult>, Vec<GroundTruthAnnotation>) {
    let gts: Vec<_> = (0..rng.random_range(1..4))
        .map(|i| gt(strip(i * 30, i * 30 + 20)))
        .collect();
    let dets = (0..rng.random_range(0..6))
        .map(|_| {
            let c0 = rng.random_range(0..90);
            let c1 = rng.random_range(c0 + 1..=100);
            det(rng.random_range(0.0..1.0), strip(c0, c1))
        })
        .collect();
    (dets, gts)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn semantic_score_ignores_template_order(seed in any::<u64>(), k in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = Embedding::new(vector(&mut rng, 16, false)).unwrap();
        let mut ts: Vec<Embedding> = (0..rng.random_range(1..9))
            .map(|_| Embedding::new(vector(&mut rng, 16, false)).unwrap())
            .collect();
        let a = semantic_score(&p, &ts.iter().collect::<Vec<_>>(), k).unwrap();
        ts.shuffle(&mut rng);
        let b = semantic_score(&p, &ts.iter().collect::<Vec<_>>(), k).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
        prop_assert!((-1.0..=1.0).contains(&a));
    }

    #[test]
    fn appearance_is_order_free_max_of_subscores(seed in any::<u64>(), delta in 0.0f64..6.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let crop = descriptor(&mut rng, 6, 8, false);
        let mut ts: Vec<_> = (0..rng.random_range(1..6)).map(|_| descriptor(&mut rng, 6, 8, false)).collect();
        let a = appearance_score(&crop, &ts, delta).unwrap();
        for t in &ts {
            prop_assert!(a >= sub_appearance_score(&crop, t, delta).unwrap());
        }
        ts.shuffle(&mut rng);
        prop_assert_eq!(a, appearance_score(&crop, &ts, delta).unwrap());
    }

    #[test]
    fn sub_appearance_grows_with_delta(seed in any::<u64>(), d1 in 0.0f64..8.0, d2 in 0.0f64..8.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let crop = descriptor(&mut rng, 8, 8, true);
        let tpl = descriptor(&mut rng, 8, 8, true);
        let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
        prop_assert!(sub_appearance_score(&crop, &tpl, lo).unwrap() <= sub_appearance_score(&crop, &tpl, hi).unwrap());
    }

    #[test]
    fn wide_delta_disables_the_filter(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let crop = descriptor(&mut rng, 16, 8, false);
        let tpl = descriptor(&mut rng, 16, 8, false);
        let m = pairwise_patch_similarity(&crop, &tpl).unwrap();
        let unfiltered: f64 = (0..m.rows)
            .map(|i| (0..m.cols).map(|j| m.get(i, j)).fold(f64::NEG_INFINITY, f64::max))
            .sum::<f64>()
            / m.rows as f64;
        prop_assert!((sub_appearance_score(&crop, &tpl, 22.0).unwrap() - unfiltered).abs() < 1e-12);
    }

    #[test]
    fn clamped_object_score_is_bounded(s_sem in -1.0f64..=1.0, s_appe in -1.0f64..=1.0, conf in 0.0f64..=1.0) {
        let cfg = ScoreConfig::default();
        let s = object_matching_score(s_sem, s_appe, conf, &cfg).unwrap();
        prop_assert!((-0.5..=1.0).contains(&s));
        prop_assert_eq!(object_matching_score(s_sem, s_appe, 0.0, &cfg).unwrap(), 0.0);
    }

    #[test]
    fn batching_does_not_change_scores(seed in any::<u64>(), bp in 1usize..6, bo in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lib = library(&mut rng, 3, 5, 8);
        let sc = scene(&mut rng, 5, 5, 8);
        let base = instance_score_matrix(&sc, &lib, &ScoreConfig::default()).unwrap();
        let cfg = ScoreConfig { batch_proposals: bp, batch_objects: bo, ..ScoreConfig::default() };
        let other = instance_score_matrix(&sc, &lib, &cfg).unwrap();
        prop_assert_eq!(
            base.scores.iter().map(|s| s.to_bits()).collect::<Vec<_>>(),
            other.scores.iter().map(|s| s.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn matching_output_respects_nms(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lib = library(&mut rng, 2, 4, 6);
        let sc = scene(&mut rng, 8, 4, 6);
        let cfg = AssignmentConfig { conf_threshold: 0.0, min_proposal_conf: 0.0, ..AssignmentConfig::default() };
        let dets = run_matching(&sc, &lib, &ScoreConfig::default(), &cfg).unwrap();
        for w in dets.windows(2) {
            prop_assert!(w[0].score >= w[1].score);
        }
        for (i, a) in dets.iter().enumerate() {
            for b in &dets[i + 1..] {
                prop_assert!(mask_iou(&a.mask, &b.mask).unwrap() <= cfg.nms_iou);
            }
        }
    }

    #[test]
    fn ap_does_not_grow_with_threshold(seed in any::<u64>(), t1 in 0.05f64..=1.0, t2 in 0.05f64..=1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (dets, gts) = random_eval(&mut rng);
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let a_lo = average_precision(&dets, &gts, &[lo]).unwrap().mean_ap;
        let a_hi = average_precision(&dets, &gts, &[hi]).unwrap().mean_ap;
        prop_assert!(a_hi <= a_lo + 1e-12);
    }

    #[test]
    fn trailing_false_positive_never_helps(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut dets, gts) = random_eval(&mut rng);
        let t = bop_iou_thresholds();
        let before = average_precision(&dets, &gts, &t).unwrap().mean_ap;
        // Columns 95..100 are never covered by a ground-truth strip.
        dets.push(det(-1.0, strip(95, 100)));
        prop_assert!(average_precision(&dets, &gts, &t).unwrap().mean_ap <= before + 1e-12);
    }

    #[test]
    fn repeated_thresholds_weight_the_mean(seed in any::<u64>(), t1 in 0.05f64..=1.0, t2 in 0.05f64..=1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (dets, gts) = random_eval(&mut rng);
        let a1 = average_precision(&dets, &gts, &[t1]).unwrap().mean_ap;
        let a2 = average_precision(&dets, &gts, &[t2]).unwrap().mean_ap;
        let mixed = average_precision(&dets, &gts, &[t1, t1, t2]).unwrap().mean_ap;
        prop_assert!((mixed - (2.0 * a1 + a2) / 3.0).abs() < 1e-12);
    }
}
