//! Parameter counts of the reference configurations.

use sornet::cli::{cmd_count_params_table1, thousands};
use sornet::{count_params, ModelSpec};

fn main() -> sornet::Result<()> {
    print!("{}", cmd_count_params_table1()?);
    for (label, spec) in [
        ("edsr baseline x2", ModelSpec::edsr(16, 64, 2)),
        ("hybrid x2", ModelSpec::hybrid(2)),
        ("selfonn 8(64) x4", ModelSpec::selfonn(8, 64, 3, 4)),
    ] {
        println!("{label}: {}", thousands(count_params(&spec)?));
    }
    Ok(())
}
