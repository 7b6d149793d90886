fn main() {
    std::process::exit(marepo::cli::run(std::env::args_os()));
}
