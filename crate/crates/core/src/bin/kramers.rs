fn main() {
    std::process::exit(kramers::cli::run(std::env::args_os()));
}
