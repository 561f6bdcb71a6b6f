fn main() {
    std::process::exit(maxplus_hjb::cli::main_with_args(std::env::args_os()));
}
