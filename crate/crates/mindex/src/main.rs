fn main() {
    std::process::exit(mindex::cli::main_entry());
}
