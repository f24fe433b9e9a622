fn main() {
    std::process::exit(lpr_cli::run(std::env::args_os()));
}
