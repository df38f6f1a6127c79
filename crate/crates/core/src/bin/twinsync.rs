fn main() {
    std::process::exit(twinsync::experiments::cli(std::env::args_os()));
}
