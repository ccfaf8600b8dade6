fn main() {
    std::process::exit(panelspec::cli::main());
}
