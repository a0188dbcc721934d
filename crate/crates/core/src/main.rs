fn main() {
    std::process::exit(shapekg::cli::run(std::env::args_os()));
}
