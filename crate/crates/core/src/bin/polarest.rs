fn main() {
    std::process::exit(polarest::bench::cli::cli_main(std::env::args_os()));
}
