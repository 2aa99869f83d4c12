mod commands;

fn main() {
    let code = commands::run();
    std::process::exit(code);
}
