fn main() {
    std::process::exit(dot_curriculum::cli::run(std::env::args_os()));
}
