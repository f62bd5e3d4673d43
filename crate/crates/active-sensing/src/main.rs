fn main() {
    std::process::exit(active_sensing::cli::run(std::env::args()));
}
