//! Runs one verification suite and prints its report.
//!
//! cargo run --release --example verification_suites -- rademacher 7

use koopman_bounds::suite::{run_suite, Suite};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let suite: Suite = args.next().as_deref().unwrap_or("all").parse()?;
    let seed: u64 = args.next().map_or(Ok(0), |s| s.parse())?;
    let t = std::time::Instant::now();
    let report = run_suite(suite, seed)?;
    println!("{report}");
    println!("elapsed {:.1}s", t.elapsed().as_secs_f64());
    Ok(())
}
