fn main() {
    std::process::exit(cmpagg_cli::run(std::env::args_os()));
}
