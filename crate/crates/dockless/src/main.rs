fn main() {
    std::process::exit(dockless::cli::run(std::env::args_os()));
}
