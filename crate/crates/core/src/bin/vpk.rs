fn main() {
    std::process::exit(vpk::cli::main());
}
