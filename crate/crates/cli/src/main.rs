fn main() {
    std::process::exit(rnnlab_cli::run(std::env::args_os()));
}
