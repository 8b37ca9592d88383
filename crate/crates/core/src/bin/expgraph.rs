fn main() {
    std::process::exit(expgraph::cli::dispatch(std::env::args_os()));
}
