fn main() {
    std::process::exit(gsd_cli::run(std::env::args_os()));
}
