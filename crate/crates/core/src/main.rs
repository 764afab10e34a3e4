fn main() {
    std::process::exit(thumbforge::cli::run(std::env::args_os()));
}
