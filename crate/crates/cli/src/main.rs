fn main() {
    std::process::exit(topicflow_cli::run(std::env::args_os()));
}
