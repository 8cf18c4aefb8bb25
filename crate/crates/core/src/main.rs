fn main() {
    std::process::exit(dyrect::cli::run(std::env::args_os()));
}
