fn main() {
    std::process::exit(shelab::harness::cli::run_cli(std::env::args_os()));
}
