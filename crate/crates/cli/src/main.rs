use clap::Parser;
use impulse_cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(message) => println!("{message}"),
        Err(err) => {
            let payload = serde_json::json!({
                "error": err.message(),
                "exit": err.exit_code(),
            });
            eprintln!("{payload}");
            std::process::exit(err.exit_code());
        }
    }
}
