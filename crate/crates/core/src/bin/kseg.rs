fn main() {
    std::process::exit(kseg::cli::main_with_args(std::env::args_os()));
}
