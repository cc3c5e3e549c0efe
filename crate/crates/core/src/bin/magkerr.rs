fn main() {
    std::process::exit(magnon_kerr::cli::main_with_args(std::env::args_os()));
}
