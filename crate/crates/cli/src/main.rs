fn main() {
    std::process::exit(ffm_cli::run(std::env::args_os()));
}
