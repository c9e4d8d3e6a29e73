fn main() {
    std::process::exit(neutral_host::cli::run(std::env::args_os()));
}
