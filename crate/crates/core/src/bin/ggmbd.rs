fn main() {
    std::process::exit(ggmbd::cli::run(std::env::args()));
}
