fn main() {
    std::process::exit(hho::cli::main_with_args(std::env::args_os()));
}
