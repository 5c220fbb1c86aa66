fn main() {
    std::process::exit(noctis::cli::run(std::env::args_os()));
}
