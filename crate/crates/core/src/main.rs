fn main() {
    std::process::exit(netprobe::cli::run(std::env::args_os()));
}
