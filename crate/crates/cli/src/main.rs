fn main() {
    std::process::exit(precnorm_cli::run_cli(std::env::args_os()));
}
