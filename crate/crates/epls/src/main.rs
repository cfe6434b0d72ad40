fn main() {
    std::process::exit(epls::cli::run(std::env::args_os()));
}
