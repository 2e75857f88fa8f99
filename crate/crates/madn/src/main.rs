fn main() {
    std::process::exit(madn::cli::run(std::env::args_os()));
}
