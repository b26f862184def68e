fn main() {
    std::process::exit(ccop::cli::main_entry());
}
