mod cli;

use clap::Parser;

fn main() {
    let parsed = cli::Cli::parse();
    // A panic inside a command is an internal invariant breach, reported with
    // its own exit code so callers can tell it apart from relation failures.
    let outcome = std::panic::catch_unwind(|| cli::run(parsed));
    match outcome {
        Ok(Ok(())) => {}
        Ok(Err(failure)) => {
            eprintln!("{}", failure.render());
            std::process::exit(failure.exit);
        }
        Err(_) => std::process::exit(cli::EXIT_INTERNAL),
    }
}
