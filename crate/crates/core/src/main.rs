fn main() {
    std::process::exit(podsurge::pipeline::cli::run(std::env::args_os()));
}
