fn main() {
    std::process::exit(trafficast_cli::run(std::env::args_os()));
}
