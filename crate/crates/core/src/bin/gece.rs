fn main() {
    let argv: Vec<String> = std::env::args().collect();
    std::process::exit(gece::cli::run_command(&argv));
}
