use clap::Parser;
use hashscope_cli::{execute, serve, Cli, Command};

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Command::Serve { addr, console } = &cli.command {
        let rt = tokio::runtime::Runtime::new()?;
        return rt.block_on(serve(&cli.workspace, *addr, console.clone()));
    }
    execute(&cli, &mut std::io::stdout().lock())
}
