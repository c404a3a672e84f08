use uds_cascade::cli;

fn main() {
    std::process::exit(cli::run(std::env::args().collect()));
}
