fn main() {
    std::process::exit(semblance::cli::dispatch(std::env::args_os()));
}
