fn main() -> std::process::ExitCode {
    mangascribe::cli::run()
}
