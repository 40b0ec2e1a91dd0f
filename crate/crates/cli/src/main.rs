fn main() {
    std::process::exit(cert_cli::run(std::env::args_os()));
}
