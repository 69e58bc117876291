fn main() {
    std::process::exit(compose_cli::run(std::env::args_os()));
}
