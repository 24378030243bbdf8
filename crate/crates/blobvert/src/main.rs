fn main() -> std::process::ExitCode {
    blobvert::cli::main()
}
