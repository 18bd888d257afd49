fn main() {
    std::process::exit(tcn_cli::run(std::env::args_os()));
}
