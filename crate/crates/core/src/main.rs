fn main() {
    std::process::exit(mapforge::cli::main_with_args(std::env::args_os()));
}
