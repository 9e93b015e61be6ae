fn main() {
    std::process::exit(lungseg::cli::run());
}
