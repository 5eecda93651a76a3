fn main() {
    std::process::exit(morphtag::cli::run(std::env::args_os()));
}
