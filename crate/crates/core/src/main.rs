fn main() {
    std::process::exit(lpsur::cli::cli_main(std::env::args_os()));
}
