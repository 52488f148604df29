fn main() {
    std::process::exit(hopflab_cli::run(std::env::args_os()));
}
