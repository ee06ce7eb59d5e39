fn main() {
    std::process::exit(matsketch_cli::run(std::env::args_os()));
}
