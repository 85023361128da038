fn main() {
    std::process::exit(twcorr::cli::run(std::env::args_os()));
}
