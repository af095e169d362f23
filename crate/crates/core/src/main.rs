fn main() {
    std::process::exit(equisteer::cli::run(std::env::args_os()));
}
