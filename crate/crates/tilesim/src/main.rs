fn main() {
    std::process::exit(tilesim::cli::main_with(std::env::args_os()));
}
