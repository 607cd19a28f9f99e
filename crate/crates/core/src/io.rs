//! Field tables and CSV output.
//!
//! A field is stored as a CSV table `index,x0,...,value` next to a JSON
//! sidecar `<path>.space.json` carrying the space config. Values print
//! through the shortest round-trip float formatting, so save/load is
//! bit-exact (NaN mask entries included).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::space::{ModelSpace, SpaceConfig};

fn sidecar_path(path: &Path) -> PathBuf {
    let mut os = path.as_os_str().to_owned();
    os.push(".space.json");
    PathBuf::from(os)
}

/// Writes the field table and its space sidecar.
pub fn save_field(path: &Path, field: &ScalarField) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let space = field.space();
    let n = space.ndim();
    let mut out = String::new();
    out.push_str("index");
    for d in 0..n {
        out.push_str(&format!(",x{d}"));
    }
    out.push_str(",value\n");
    for p in 0..space.num_nodes() {
        out.push_str(&p.to_string());
        for c in space.grid.coords(p) {
            out.push(',');
            out.push_str(&c.to_string());
        }
        out.push(',');
        out.push_str(&field.get(p).to_string());
        out.push('\n');
    }
    fs::write(path, out)?;
    let sidecar = serde_json::to_string_pretty(&space.config)?;
    fs::write(sidecar_path(path), sidecar)?;
    Ok(())
}

/// Reads a field table together with its sidecar, reconstructing the
/// space.
pub fn load_field(path: &Path) -> Result<ScalarField> {
    let sidecar = fs::read_to_string(sidecar_path(path))
        .map_err(|e| Error::FieldFile(format!("missing sidecar for {}: {e}", path.display())))?;
    let config: SpaceConfig = serde_json::from_str(&sidecar)?;
    let space = Arc::new(ModelSpace::from_config(config)?);
    let text = fs::read_to_string(path)?;
    let mut values = vec![f64::NAN; space.num_nodes()];
    let mut seen = 0usize;
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 {
            continue; // header
        }
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let index: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::FieldFile(format!("bad index on line {}", lineno + 1)))?;
        let value_str = parts
            .next_back()
            .ok_or_else(|| Error::FieldFile(format!("missing value on line {}", lineno + 1)))?;
        let value: f64 = value_str
            .parse()
            .map_err(|_| Error::FieldFile(format!("bad value on line {}", lineno + 1)))?;
        if index >= values.len() {
            return Err(Error::FieldFile(format!(
                "index {index} outside the grid on line {}",
                lineno + 1
            )));
        }
        values[index] = value;
        seen += 1;
    }
    if seen != space.num_nodes() {
        return Err(Error::FieldFile(format!(
            "expected {} rows, found {seen}",
            space.num_nodes()
        )));
    }
    Ok(ScalarField::masked(space, values))
}

/// Writes a CSV table from a header and rows of already-formatted cells.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let mut file = fs::File::create(path)?;
    writeln!(file, "{}", header.join(","))?;
    for row in rows {
        writeln!(file, "{}", row.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{DensityPreset, SpaceConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn field_round_trip_is_bit_exact() {
        let space = Arc::new(
            ModelSpace::from_config(SpaceConfig::cylinder(
                1.0,
                0.25,
                vec![1.0],
                0.25,
                DensityPreset::Gaussian,
            ))
            .unwrap(),
        );
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut values: Vec<f64> = (0..space.num_nodes())
            .map(|_| (rng.random::<f64>() - 0.5) * 1e3)
            .collect();
        values[3] = f64::NAN;
        values[7] = 1.0 / 3.0;
        let field = ScalarField::masked(space, values.clone());
        let dir = std::env::temp_dir().join("driftlab-io-test");
        let path = dir.join("field.csv");
        save_field(&path, &field).unwrap();
        let loaded = load_field(&path).unwrap();
        for (a, b) in values.iter().zip(loaded.values()) {
            assert!(a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()));
        }
        assert_eq!(loaded.space().config, field.space().config);
    }
}
