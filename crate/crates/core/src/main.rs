fn main() {
    std::process::exit(ionmorph::cli::run(std::env::args_os()));
}
