fn main() {
    std::process::exit(toeplitz_forge_cli::run(std::env::args_os()));
}
