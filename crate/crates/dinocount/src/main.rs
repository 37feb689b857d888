fn main() {
    std::process::exit(dinocount::cli::run(std::env::args_os()));
}
