fn main() {
    std::process::exit(sparse_lqr::cli::main_with_args(std::env::args_os()));
}
