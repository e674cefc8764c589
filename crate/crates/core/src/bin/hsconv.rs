fn main() {
    std::process::exit(hsconv::cli::main_entry(std::env::args_os()));
}
