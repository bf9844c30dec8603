fn main() {
    std::process::exit(infinifree::cli::run(std::env::args()));
}
