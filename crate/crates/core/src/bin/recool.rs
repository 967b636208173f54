fn main() {
    std::process::exit(recool::cli::main_with_args(std::env::args_os()));
}
