fn main() {
    std::process::exit(tweak::cli::main());
}
