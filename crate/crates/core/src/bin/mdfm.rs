fn main() {
    std::process::exit(mdfm::cli::run(std::env::args_os()));
}
