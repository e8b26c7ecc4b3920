fn main() {
    std::process::exit(rwgrade_cli::main_with(std::env::args_os()));
}
