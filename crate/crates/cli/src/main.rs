fn main() {
    std::process::exit(polsum_cli::run(std::env::args_os()));
}
