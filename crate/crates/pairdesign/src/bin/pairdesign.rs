fn main() {
    std::process::exit(pairdesign::cli::main());
}
