//! Super-resolves one PNG with a trained checkpoint.
//!
//! Usage: `cargo run --release --example upscale -- <checkpoint> <input.png> <output.png>`

use std::path::Path;

use sornet::cli::cmd_sr;
use sornet::Error;

fn main() -> sornet::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let [ckpt, input, output] = args.as_slice() else {
        return Err(Error::Config("usage: upscale <checkpoint> <input.png> <output.png>".into()));
    };
    let sr = cmd_sr(Path::new(ckpt), Path::new(input), Path::new(output))?;
    let s = sr.shape();
    println!("wrote {output} ({}x{})", s.w(), s.h());
    Ok(())
}
