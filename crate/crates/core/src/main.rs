fn main() {
    std::process::exit(dpimap::cli::main_with(std::env::args_os()));
}
