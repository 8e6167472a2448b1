fn main() {
    std::process::exit(airmcmc_cli::run(std::env::args_os()));
}
