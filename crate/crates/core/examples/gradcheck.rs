//! Finite-difference check of every differentiable op and block, plus a
//! deliberately wrong backward rule that must be flagged.

use sornet::verify::{broken_case, run_gradcheck, standard_cases, GRADCHECK_EPS, GRADCHECK_TOL};

fn main() -> sornet::Result<()> {
    let report = run_gradcheck(&standard_cases(), GRADCHECK_EPS, GRADCHECK_TOL)?;
    print!("{}", report.to_table());
    println!("all passed: {}", report.all_passed());

    let broken = run_gradcheck(&[broken_case()], GRADCHECK_EPS, GRADCHECK_TOL)?;
    print!("{}", broken.to_table());
    Ok(())
}
