fn main() {
    std::process::exit(subjscan::cli::run(std::env::args_os()));
}
