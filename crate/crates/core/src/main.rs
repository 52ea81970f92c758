use clap::Parser;
use sequifilt::cli::{self, Cli};

fn main() {
    let args = Cli::parse();
    match cli::run(&args) {
        Ok(lines) => {
            for line in lines {
                println!("{line}");
            }
        }
        Err(err) => {
            eprintln!("sequifilt {}: {err}", args.command.name());
            std::process::exit(cli::exit_code(&err));
        }
    }
}
