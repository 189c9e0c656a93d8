fn main() {
    std::process::exit(wirelayout::cli::main());
}
