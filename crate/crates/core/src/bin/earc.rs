fn main() {
    std::process::exit(earc::cli::run(std::env::args_os()));
}
