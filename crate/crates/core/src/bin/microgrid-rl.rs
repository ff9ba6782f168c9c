fn main() {
    std::process::exit(microgrid_rl::cli::main_with_args(std::env::args_os()));
}
