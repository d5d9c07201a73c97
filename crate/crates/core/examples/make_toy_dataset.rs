//! Writes the bundled toy corpus as PNGs and degrades it into HR/LR pairs.
//!
//! Usage: `cargo run --example make_toy_dataset -- [out_dir] [scale]`

mod support;

use std::path::PathBuf;

use sornet::Error;

fn main() -> sornet::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "toy_data".into()));
    let scale: usize = match args.next() {
        Some(s) => s.parse().map_err(|_| Error::Config(format!("bad scale '{s}'")))?,
        None => 2,
    };
    support::toy_dataset(&out, scale)?;
    Ok(())
}
