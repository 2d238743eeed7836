fn main() {
    std::process::exit(stratagem::cli::main_entry());
}
