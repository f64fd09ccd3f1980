fn main() {
    std::process::exit(tgi_monitor::cli::run(std::env::args_os()));
}
