//! Trains the three-dimensional regression model with the bound as a
//! regularizer and writes one CSV per run.
//!
//! cargo run --release --example synthetic_training -- 3 out/

use std::path::PathBuf;

use koopman_bounds::train::{emit_plot_data, run_paths, run_synthetic, spearman, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let runs: usize = args.next().map_or(Ok(3), |s| s.parse())?;
    let out = PathBuf::from(args.next().unwrap_or_else(|| ".".into()));
    std::fs::create_dir_all(&out)?;
    let cfg = TrainConfig::synthetic();
    for (k, path) in run_paths(&out.join("synthetic.csv"), runs).iter().enumerate() {
        let log = run_synthetic(&cfg.for_run(k))?;
        emit_plot_data(&log, path)?;
        let last = log.last().unwrap();
        let rho = spearman(&log.column(|r| r.gap), &log.column(|r| r.regularizer));
        println!(
            "run {k}: gap {:.5} r {:.5} bound {:.3e} spearman {rho:.3} -> {}",
            last.gap,
            last.regularizer,
            last.bound,
            path.display()
        );
    }
    Ok(())
}
