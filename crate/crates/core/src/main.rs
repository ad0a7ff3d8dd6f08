fn main() {
    haps_deploy::cli::init_logging();
    std::process::exit(haps_deploy::cli::run_cli(std::env::args_os()));
}
