use clap::Parser;

fn main() {
    let cli = segscan::cli::Cli::parse();
    match segscan::cli::run(cli) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
