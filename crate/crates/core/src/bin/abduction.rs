fn main() {
    std::process::exit(abduction::cli::main());
}
