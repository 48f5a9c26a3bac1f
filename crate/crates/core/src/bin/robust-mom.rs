fn main() {
    std::process::exit(robust_mom::cli::cli_main(std::env::args_os()));
}
