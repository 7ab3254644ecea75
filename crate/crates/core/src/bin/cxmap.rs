fn main() {
    std::process::exit(cxmap::cli::run(std::env::args_os()));
}
