fn main() {
    std::process::exit(grada::cli::run());
}
