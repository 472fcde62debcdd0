fn main() {
    std::process::exit(covfar::cli::main());
}
