fn main() {
    std::process::exit(cfexplain::cli::run(std::env::args_os()));
}
