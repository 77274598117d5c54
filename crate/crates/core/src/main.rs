fn main() {
    std::process::exit(rblab::cli::main_with_args(std::env::args_os()));
}
