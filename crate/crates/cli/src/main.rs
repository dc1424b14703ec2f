fn main() {
    std::process::exit(expbound_cli::run(std::env::args_os()));
}
