fn main() {
    std::process::exit(arbscope_cli::run(std::env::args_os()));
}
