fn main() {
    std::process::exit(ma_lab::cli::run(std::env::args_os()));
}
