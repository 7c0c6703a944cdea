fn main() {
    let code = impact_kam::cli::run_from(std::env::args_os());
    std::process::exit(code);
}
