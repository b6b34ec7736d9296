fn main() {
    std::process::exit(cprune::cli::main());
}
