fn main() {
    std::process::exit(errtrack::cli::main_with(std::env::args_os()));
}
