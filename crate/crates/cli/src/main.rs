fn main() {
    std::process::exit(gamforge_cli::main_with_args(std::env::args_os()));
}
