fn main() {
    std::process::exit(sandmine::cli::cli_main(std::env::args_os()));
}
