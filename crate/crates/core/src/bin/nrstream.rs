fn main() {
    std::process::exit(nrstream::cli::run(std::env::args_os()));
}
