fn main() {
    std::process::exit(mcp_cli::run());
}
