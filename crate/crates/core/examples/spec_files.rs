//! Reads a JSON network file, moves a weight into a binary sidecar, and
//! reads it back.
//!
//! cargo run --release --example spec_files

use koopman_bounds::linalg::Matrix;
use koopman_bounds::network::{read_kbw, write_kbw, NetworkSpec, SpecFile};
use std::path::Path;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let toy = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/data/orthogonal_toy.json");
    let spec = NetworkSpec::load(&toy)?;
    println!("{} layers, input dim {}", spec.depth(), spec.input_dim());

    let dir = std::env::temp_dir().join("koopman-bounds-spec-files");
    std::fs::create_dir_all(&dir)?;
    let w = Matrix::from_rows(&[vec![0.6, -0.8], vec![0.8, 0.6]])?;
    write_kbw(&dir.join("w1.kbw"), &w)?;
    assert_eq!(read_kbw(&dir.join("w1.kbw"))?, w);

    let text = r#"{
      "input_domain": {"lower": [-1, -1], "upper": [1, 1]},
      "layers": [
        {"kind": "dense", "weights": {"file": "w1.kbw"}, "bias": [0, 0], "activation": {"kind": "tanh"}},
        {"kind": "dense", "weights": {"rows": 2, "cols": 2, "data": [1, 0, 0, 1]}, "bias": [0, 0]}
      ],
      "final": {"kind": "gaussian_bump", "w3": 1.0}
    }"#;
    let spec = SpecFile::from_json(text)?.into_spec(Some(&dir))?;
    println!("{}", spec.to_json()?);
    Ok(())
}
