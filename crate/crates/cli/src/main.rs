fn main() {
    std::process::exit(obstacle_mg_cli::execute(std::env::args_os()));
}
