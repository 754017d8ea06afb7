fn main() {
    std::process::exit(readinfo_cli::main_with_args(std::env::args_os()));
}
