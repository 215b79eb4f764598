fn main() {
    std::process::exit(stance_cli::run(std::env::args_os()));
}
