fn main() {
    std::process::exit(chatact_cli::run(std::env::args_os()));
}
