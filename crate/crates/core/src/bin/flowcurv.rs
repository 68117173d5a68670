fn main() {
    std::process::exit(flowcurv::cli::run(std::env::args_os()));
}
