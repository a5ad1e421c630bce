fn main() {
    std::process::exit(sslr::cli::run(std::env::args_os()));
}
