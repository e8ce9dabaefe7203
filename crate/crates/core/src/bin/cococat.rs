fn main() {
    std::process::exit(cococat::cli::main());
}
