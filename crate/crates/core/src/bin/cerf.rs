use clap::Parser;

use cerf::commands::{exit_code, run, split_overrides, Cli};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let (args, overrides) = split_overrides(std::env::args_os());
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return;
        }
        Err(e) => {
            let text = e.to_string();
            let line = text.lines().next().unwrap_or("invalid arguments");
            eprintln!("cerf: {}", line.trim_start_matches("error: "));
            std::process::exit(1);
        }
    };
    if let Err(e) = run(cli, &overrides) {
        eprintln!("cerf: {e}");
        std::process::exit(exit_code(&e));
    }
}
