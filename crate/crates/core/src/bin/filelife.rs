fn main() {
    std::process::exit(filelife::cli::run(std::env::args_os()));
}
