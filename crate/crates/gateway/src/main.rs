use clap::Parser;

fn main() {
    let cli = edgeai_gateway::cli::Cli::parse();
    std::process::exit(edgeai_gateway::cli::execute(cli));
}
