fn main() {
    std::process::exit(pulsesort::cli::run(std::env::args_os()));
}
