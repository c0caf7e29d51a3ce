fn main() {
    std::process::exit(gammap::cli::dispatch(std::env::args_os()));
}
