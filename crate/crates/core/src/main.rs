fn main() {
    std::process::exit(logsync::shell::cli_main(std::env::args_os()));
}
