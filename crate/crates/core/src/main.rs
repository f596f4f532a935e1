fn main() {
    std::process::exit(torso_pose::cli::run(std::env::args_os().collect()));
}
