fn main() {
    std::process::exit(specsep_cli::run_cli(std::env::args_os()));
}
