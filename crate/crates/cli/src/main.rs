fn main() {
    std::process::exit(mergeplan_cli::parse_and_dispatch(std::env::args_os()));
}
