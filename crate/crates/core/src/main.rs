fn main() -> std::process::ExitCode {
    icu_deterioration::cli::main()
}
