fn main() {
    std::process::exit(sensoralloc_cli::run(std::env::args_os()));
}
