fn main() {
    std::process::exit(mfc_core::cli::main());
}
