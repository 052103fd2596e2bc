fn main() {
    std::process::exit(hashsphere::cli::main_with_args(std::env::args_os()));
}
