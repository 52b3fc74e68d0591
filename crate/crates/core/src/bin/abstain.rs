fn main() -> std::process::ExitCode {
    abstain::cli::main()
}
