fn main() {
    std::process::exit(mecanum_cli::run(std::env::args_os()));
}
