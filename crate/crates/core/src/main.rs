fn main() {
    std::process::exit(overrel::cli::main());
}
