fn main() {
    std::process::exit(gwle::cli::run(std::env::args_os()));
}
