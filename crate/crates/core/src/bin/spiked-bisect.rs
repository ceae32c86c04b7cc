fn main() {
    std::process::exit(spiked_bisect::experiments::cli_main(std::env::args_os()));
}
