fn main() {
    std::process::exit(liereduce::cli::run());
}
