fn main() {
    std::process::exit(brenier_cli::main_with_args(std::env::args_os()));
}
