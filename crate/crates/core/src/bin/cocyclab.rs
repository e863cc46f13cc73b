fn main() {
    std::process::exit(cocyclab::cli::run(std::env::args_os()));
}
