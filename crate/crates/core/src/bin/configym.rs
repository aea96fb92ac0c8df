fn main() -> std::process::ExitCode {
    configym::cli::main()
}
