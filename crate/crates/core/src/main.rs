fn main() {
    std::process::exit(mpskin::cli::main_with_args(std::env::args_os()));
}
