fn main() -> std::process::ExitCode {
    morlgen::cli::main_exit()
}
