fn main() {
    std::process::exit(hmnn_cli::run_command(std::env::args_os()));
}
