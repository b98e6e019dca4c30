fn main() {
    std::process::exit(hdlcnn_core::cli::run(std::env::args_os()));
}
