fn main() {
    std::process::exit(dgp_rf::cli::run(std::env::args()));
}
