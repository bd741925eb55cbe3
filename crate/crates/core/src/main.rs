fn main() {
    std::process::exit(planwright_core::cli::main_entry());
}
