fn main() {
    std::process::exit(supcon::cli::main());
}
