fn main() {
    std::process::exit(sdsbm::cli::cli_main(std::env::args_os()));
}
