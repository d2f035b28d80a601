fn main() {
    std::process::exit(scseg::cli::run(std::env::args_os()));
}
