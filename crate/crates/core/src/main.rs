fn main() {
    std::process::exit(kahler_flow::cli::run(std::env::args_os()));
}
