fn main() {
    std::process::exit(coarsekit::cli::main_with(std::env::args_os()));
}
