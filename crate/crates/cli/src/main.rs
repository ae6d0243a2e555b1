use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = stvg_cli::app::Cli::parse();
    std::process::exit(stvg_cli::app::execute(cli));
}
