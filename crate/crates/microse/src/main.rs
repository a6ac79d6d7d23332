fn main() {
    std::process::exit(microse::cli::run(std::env::args_os()));
}
