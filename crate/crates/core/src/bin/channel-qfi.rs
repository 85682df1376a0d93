use clap::Parser;

fn main() {
    let cli = channel_qfi::cli::Cli::parse();
    std::process::exit(channel_qfi::cli::run(cli));
}
