fn main() {
    std::process::exit(csi_sense::cli::main_from_args(std::env::args_os()));
}
