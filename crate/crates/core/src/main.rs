fn main() {
    std::process::exit(npbdaa::cli::run(std::env::args_os()));
}
