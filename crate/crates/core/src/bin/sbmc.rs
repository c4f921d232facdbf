fn main() {
    std::process::exit(sbm_consensus::bench::cli::run(std::env::args_os()));
}
