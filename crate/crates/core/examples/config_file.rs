//! Layers a config file and command-line style overrides over the defaults.
//!
//! `cargo run --example config_file`

use vgan::RunConfig;

fn main() {
    let text = "# shorter run\nrounds = 5\nrollouts = 8\n";
    let mut cfg = RunConfig::parse(text).expect("valid config");
    cfg.set("lr", "0.0005").expect("known key");
    println!("{}", cfg.render());
    match RunConfig::parse("rollouts = 0\n") {
        Ok(_) => println!("unexpectedly accepted"),
        Err(e) => println!("rejected: {e}"),
    }
}
