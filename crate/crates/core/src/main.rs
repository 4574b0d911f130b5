fn main() {
    std::process::exit(hgmda::cli::main());
}
