fn main() {
    std::process::exit(stein_ebm_cli::run(std::env::args_os()));
}
