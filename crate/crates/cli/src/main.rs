// SPDX-License-Identifier: Apache-2.0

use clap::Parser;
use f2fplace_cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    let code = run(&cli, &mut std::io::stdout(), &mut std::io::stderr());
    std::process::exit(code);
}
