fn main() {
    std::process::exit(shrubmap_cli::run(std::env::args_os()));
}
