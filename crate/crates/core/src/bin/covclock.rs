fn main() {
    std::process::exit(covclock::cli::main_entry());
}
