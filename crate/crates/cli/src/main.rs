fn main() {
    std::process::exit(civicsense_cli::main_with(std::env::args_os()));
}
