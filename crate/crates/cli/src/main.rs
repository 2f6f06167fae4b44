use clap::Parser;

fn main() {
    let args = hts_lab::Args::parse();
    std::process::exit(hts_lab::execute(&args));
}
