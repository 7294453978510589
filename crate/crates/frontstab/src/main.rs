fn main() {
    std::process::exit(frontstab::cli::run(std::env::args_os()));
}
