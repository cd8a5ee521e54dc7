fn main() {
    std::process::exit(lediflow::cli::run(std::env::args_os()));
}
