//! Key-value config parsing for spaces, nonlinearities, initial guesses,
//! regions, and tolerance overrides.
//!
//! Grammar: one `key = value` pair per line, `#` starts a comment, blank
//! lines ignored. Recognized space keys:
//!
//! ```text
//! family       = weighted_line | flat_box | cylinder | warped_product
//! n            = <integer dimension>
//! T            = <axis extent>
//! h            = <spacing> | <comma list, one per direction>
//! fiber_lengths = <comma list> (cylinder / warped_product)
//! density      = zero | gaussian | linear_slope <k> | poly <c0,c1,...>
//! warp_lambda  = <comma list of λ coefficients> (warped_product)
//! ```

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::nonlin::Nonlinearity;
use crate::rigidity::ToleranceSet;
use crate::solve::InitialGuess;
use crate::space::{DensityPreset, Family, ModelSpace, Region, SpaceConfig};

fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::config(
                format!("line {}", lineno + 1),
                "expected `key = value`",
            ));
        };
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

fn parse_f64(key: &str, s: &str) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|_| Error::config(key, format!("not a number: `{s}`")))
}

fn parse_list(key: &str, s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|part| parse_f64(key, part.trim()))
        .collect()
}

/// Parses the space declaration grammar into a [`SpaceConfig`].
pub fn parse_space_config(text: &str) -> Result<SpaceConfig> {
    let map = parse_pairs(text)?;
    let family_str = map
        .get("family")
        .ok_or_else(|| Error::config("family", "missing"))?;
    let family = Family::parse(family_str)
        .ok_or_else(|| Error::config("family", format!("unknown family `{family_str}`")))?;
    let dimension = map
        .get("n")
        .ok_or_else(|| Error::config("n", "missing"))?
        .parse::<usize>()
        .map_err(|_| Error::config("n", "not an integer"))?;
    let axis_extent = parse_f64("T", map.get("T").ok_or_else(|| Error::config("T", "missing"))?)?;
    let spacing_raw = parse_list("h", map.get("h").ok_or_else(|| Error::config("h", "missing"))?)?;
    let spacing = if spacing_raw.len() == 1 {
        vec![spacing_raw[0]; dimension]
    } else {
        spacing_raw
    };
    let fiber_lengths = match map.get("fiber_lengths") {
        Some(s) => parse_list("fiber_lengths", s)?,
        None => vec![],
    };
    let density = match map.get("density").map(String::as_str) {
        None | Some("zero") => DensityPreset::Zero,
        Some("gaussian") => DensityPreset::Gaussian,
        Some(other) => {
            if let Some(rest) = other.strip_prefix("linear_slope") {
                DensityPreset::LinearSlope(parse_f64("density", rest.trim())?)
            } else if let Some(rest) = other.strip_prefix("poly") {
                DensityPreset::Polynomial(parse_list("density", rest.trim())?)
            } else {
                return Err(Error::config("density", format!("unknown preset `{other}`")));
            }
        }
    };
    let warp_lambda = match map.get("warp_lambda") {
        Some(s) => parse_list("warp_lambda", s)?,
        None => vec![],
    };
    for key in map.keys() {
        if !matches!(
            key.as_str(),
            "family" | "n" | "T" | "h" | "fiber_lengths" | "density" | "warp_lambda"
        ) {
            return Err(Error::config(key, "unknown key"));
        }
    }
    Ok(SpaceConfig {
        family,
        dimension,
        axis_extent,
        spacing,
        fiber_lengths,
        density,
        warp_lambda,
    })
}

/// Parses and constructs the space in one step.
pub fn space_from_text(text: &str) -> Result<ModelSpace> {
    ModelSpace::from_config(parse_space_config(text)?)
}

/// `allen-cahn | linear:<μ> | poly:<c0,c1,...> | zero`.
pub fn parse_nonlinearity(spec: &str) -> Result<Nonlinearity> {
    let nl = if spec == "allen-cahn" {
        Nonlinearity::AllenCahn
    } else if spec == "zero" {
        Nonlinearity::Zero
    } else if let Some(mu) = spec.strip_prefix("linear:") {
        Nonlinearity::Linear(parse_f64("nl", mu)?)
    } else if let Some(coeffs) = spec.strip_prefix("poly:") {
        Nonlinearity::Polynomial(parse_list("nl", coeffs)?)
    } else {
        return Err(Error::config("nl", format!("unknown nonlinearity `{spec}`")));
    };
    nl.validate()?;
    Ok(nl)
}

/// `tanh | tanh:<shift> | const:<c> | random:<seed>,<amplitude>`.
pub fn parse_initial_guess(spec: &str) -> Result<InitialGuess> {
    if spec == "tanh" {
        return Ok(InitialGuess::Tanh);
    }
    if let Some(shift) = spec.strip_prefix("tanh:") {
        return Ok(InitialGuess::TanhShift(parse_f64("init", shift)?));
    }
    if let Some(c) = spec.strip_prefix("const:") {
        return Ok(InitialGuess::Constant(parse_f64("init", c)?));
    }
    if let Some(rest) = spec.strip_prefix("random:") {
        let parts: Vec<&str> = rest.split(',').collect();
        if parts.len() != 2 {
            return Err(Error::config("init", "random takes `seed,amplitude`"));
        }
        let seed = parts[0]
            .trim()
            .parse::<u64>()
            .map_err(|_| Error::config("init", "seed must be an integer"))?;
        return Ok(InitialGuess::Random {
            seed,
            amplitude: parse_f64("init", parts[1].trim())?,
        });
    }
    Err(Error::config("init", format!("unknown preset `{spec}`")))
}

/// `ball:r=<radius>` or `full`.
pub fn parse_region(spec: &str, space: &ModelSpace) -> Result<Region> {
    if spec == "full" {
        return Ok(Region::FullDomain);
    }
    if let Some(rest) = spec.strip_prefix("ball:r=") {
        let r = parse_f64("region", rest)?;
        return Ok(Region::ball_at_center(space, r));
    }
    Err(Error::config(
        "region",
        format!("unknown region spec `{spec}` (expected `ball:r=<R>` or `full`)"),
    ))
}

/// Tolerance override file: `name = value` per line, names matching
/// [`ToleranceSet`] fields.
pub fn parse_tolerances(text: &str) -> Result<ToleranceSet> {
    let mut tols = ToleranceSet::default();
    for (key, value) in parse_pairs(text)? {
        tols.set(&key, parse_f64(&key, &value)?)?;
    }
    Ok(tols)
}

#[cfg(test)]
mod tests {
    use super::*;

    const CYLINDER: &str = "\
# anchor scenario
family = cylinder
n = 2
T = 12
h = 0.02
fiber_lengths = 1.28
density = zero
";

    #[test]
    fn parses_cylinder_config() {
        let config = parse_space_config(CYLINDER).unwrap();
        assert_eq!(config.family, Family::Cylinder);
        assert_eq!(config.dimension, 2);
        assert_eq!(config.spacing, vec![0.02, 0.02]);
        let space = ModelSpace::from_config(config).unwrap();
        assert_eq!(space.grid.shape, vec![1201, 64]);
    }

    #[test]
    fn reports_field_paths_on_errors() {
        let err = parse_space_config("family = cylinder\nn = 2\nT = twelve\nh = 0.1").unwrap_err();
        assert!(err.to_string().contains("`T`"), "{err}");
        let err = parse_space_config(&format!("{CYLINDER}\nbogus = 1")).unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
    }

    #[test]
    fn parses_density_presets() {
        for (text, expect) in [
            ("density = gaussian", DensityPreset::Gaussian),
            ("density = linear_slope 0.3", DensityPreset::LinearSlope(0.3)),
            (
                "density = poly 0,0,-1",
                DensityPreset::Polynomial(vec![0.0, 0.0, -1.0]),
            ),
        ] {
            let full = format!("family = weighted_line\nn = 1\nT = 4\nh = 0.1\n{text}");
            let config = parse_space_config(&full).unwrap();
            assert_eq!(config.density, expect);
        }
    }

    #[test]
    fn parses_nonlinearities_and_guesses() {
        assert_eq!(
            parse_nonlinearity("allen-cahn").unwrap(),
            Nonlinearity::AllenCahn
        );
        assert_eq!(
            parse_nonlinearity("linear:-2.5").unwrap(),
            Nonlinearity::Linear(-2.5)
        );
        assert!(matches!(
            parse_nonlinearity("poly:0,1,0,-1").unwrap(),
            Nonlinearity::Polynomial(_)
        ));
        assert!(parse_nonlinearity("cubic").is_err());
        assert_eq!(parse_initial_guess("tanh").unwrap(), InitialGuess::Tanh);
        assert_eq!(
            parse_initial_guess("const:0.5").unwrap(),
            InitialGuess::Constant(0.5)
        );
        assert_eq!(
            parse_initial_guess("random:7,0.2").unwrap(),
            InitialGuess::Random {
                seed: 7,
                amplitude: 0.2
            }
        );
    }

    #[test]
    fn parses_tolerance_overrides() {
        let tols = parse_tolerances("umbilicity = 1e-3\nk_stdev = 0.01").unwrap();
        assert_eq!(tols.umbilicity, 1e-3);
        assert_eq!(tols.k_stdev, 0.01);
        assert!(parse_tolerances("nope = 1").is_err());
    }
}
