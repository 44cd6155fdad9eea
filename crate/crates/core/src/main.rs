use clap::Parser;

fn main() {
    let cli = proxlab::cli::Cli::parse();
    match proxlab::cli::execute(cli) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(2);
        }
    }
}
