fn main() {
    std::process::exit(cfrec_cli::run(std::env::args_os()));
}
