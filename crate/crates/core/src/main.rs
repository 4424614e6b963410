fn main() {
    std::process::exit(holonomy::cli::run_command(std::env::args_os()));
}
