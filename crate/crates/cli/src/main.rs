fn main() {
    std::process::exit(agebif_cli::run_command(std::env::args_os()));
}
