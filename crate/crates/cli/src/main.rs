fn main() {
    std::process::exit(lengen_cli::run(std::env::args_os()));
}
