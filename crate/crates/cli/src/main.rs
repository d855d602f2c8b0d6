fn main() {
    std::process::exit(psr_cli::main_with_args(std::env::args_os()));
}
