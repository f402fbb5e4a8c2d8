fn main() {
    std::process::exit(zerolog::cli::run());
}
