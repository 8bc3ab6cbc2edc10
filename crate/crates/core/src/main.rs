fn main() {
    std::process::exit(mcbm::cli::dispatch(std::env::args_os()));
}
