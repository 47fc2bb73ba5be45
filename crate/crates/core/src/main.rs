fn main() {
    std::process::exit(ctnet::cli::main());
}
