fn main() {
    std::process::exit(improvevolve::cli::main());
}
