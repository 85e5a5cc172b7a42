fn main() {
    std::process::exit(wbohm::cli::main_with_args(std::env::args_os()));
}
