fn main() {
    std::process::exit(spde_msd::cli::run_from_args(std::env::args_os()));
}
