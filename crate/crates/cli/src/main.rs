fn main() {
    std::process::exit(impressions_cli::run(std::env::args_os()));
}
