fn main() {
    std::process::exit(sindex::harness::cli::run(std::env::args_os()));
}
