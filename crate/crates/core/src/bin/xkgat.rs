fn main() {
    std::process::exit(xkgat::cli::run(std::env::args_os()));
}
