fn main() {
    std::process::exit(bubbly::cli::main_with_args(std::env::args_os()));
}
