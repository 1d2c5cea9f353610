fn main() {
    std::process::exit(vanish::cli::main_with_args(std::env::args_os()));
}
