fn main() {
    std::process::exit(joulemark::cli::run(std::env::args_os()));
}
