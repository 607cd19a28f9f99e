//! Property-based invariants: measure additivity/monotonicity, adjoint
//! exactness under random fields, cutoff continuity, and field-file
//! round-trips under random data.

use std::collections::BTreeSet;
use std::sync::Arc;

use proptest::prelude::*;

use driftlab::profile::{log_cutoff, log_cutoff_gradient_sq};
use driftlab::{
    drift_laplacian, weighted_dirichlet, weighted_inner, weighted_volume, DensityPreset,
    ModelSpace, Region, ScalarField, SpaceConfig,
};

fn small_space() -> Arc<ModelSpace> {
    Arc::new(
        ModelSpace::from_config(SpaceConfig::cylinder(
            2.0,
            0.25,
            vec![1.0],
            0.25,
            DensityPreset::Gaussian,
        ))
        .unwrap(),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn weighted_volume_additive_and_monotone(split_mask in proptest::collection::vec(any::<bool>(), 68)) {
        let space = small_space();
        let n = space.num_nodes();
        let all: Vec<usize> = (0..n).collect();
        let a: BTreeSet<usize> = all.iter().copied().filter(|&p| split_mask[p % split_mask.len()]).collect();
        let b: BTreeSet<usize> = all.iter().copied().filter(|&p| !split_mask[p % split_mask.len()]).collect();
        let va = weighted_volume(&space, &Region::NodeSet(a.clone())).unwrap();
        let vb = weighted_volume(&space, &Region::NodeSet(b)).unwrap();
        let vfull = weighted_volume(&space, &Region::FullDomain).unwrap();
        // Additivity over a disjoint split of the domain.
        prop_assert!((va + vb - vfull).abs() <= 1e-12 * vfull);
        // Monotonicity under set inclusion.
        let mut bigger = a.clone();
        bigger.extend((0..n).step_by(7));
        let vbig = weighted_volume(&space, &Region::NodeSet(bigger)).unwrap();
        prop_assert!(va <= vbig + 1e-15);
    }

    #[test]
    fn adjoint_identity_under_random_fields(seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let space = small_space();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let u = ScalarField::new(
            space.clone(),
            (0..space.num_nodes()).map(|_| rng.random::<f64>() - 0.5).collect(),
        )
        .unwrap();
        let mut hv: Vec<f64> = (0..space.num_nodes()).map(|_| rng.random::<f64>() - 0.5).collect();
        for p in 0..space.num_nodes() {
            if space.grid.on_truncation_boundary(p) {
                hv[p] = 0.0;
            }
        }
        let h = ScalarField::new(space.clone(), hv).unwrap();
        let lhs = weighted_dirichlet(&h, &u).unwrap();
        let rhs = -weighted_inner(&h, &drift_laplacian(&u)).unwrap();
        let scale = (weighted_dirichlet(&h, &h).unwrap() * weighted_dirichlet(&u, &u).unwrap())
            .sqrt()
            .max(1e-30);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * scale);
    }

    #[test]
    fn dirichlet_form_is_positive_semidefinite(seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let space = small_space();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let u = ScalarField::new(
            space.clone(),
            (0..space.num_nodes()).map(|_| rng.random::<f64>() - 0.5).collect(),
        )
        .unwrap();
        prop_assert!(weighted_dirichlet(&u, &u).unwrap() >= 0.0);
    }

    #[test]
    fn cutoff_continuous_at_knots(radius in 1.0001f64..1e7) {
        // Values at the knots are exactly 1 and 0; approaching them from
        // inside the annulus converges to the knot values.
        prop_assert_eq!(log_cutoff(radius, radius.sqrt()).unwrap(), 1.0);
        prop_assert_eq!(log_cutoff(radius, radius).unwrap(), 0.0);
        let eps = (radius - radius.sqrt()) * 1e-9;
        let inner = log_cutoff(radius, radius.sqrt() + eps).unwrap();
        let outer = log_cutoff(radius, radius - eps).unwrap();
        prop_assert!((inner - 1.0).abs() < 1e-6);
        prop_assert!(outer.abs() < 1e-6);
        // Gradient-square matches the squared difference quotient.
        let mid = (radius.sqrt() + radius) * 0.5;
        let d = mid * 1e-6;
        let fd = (log_cutoff(radius, mid + d).unwrap() - log_cutoff(radius, mid - d).unwrap()) / (2.0 * d);
        let g = log_cutoff_gradient_sq(radius, mid).unwrap();
        prop_assert!((fd * fd - g).abs() <= 1e-6 * g.max(1e-300));
    }

    #[test]
    fn field_table_round_trip(seed in any::<u64>(), scale in -12i32..12) {
        use rand::{Rng, SeedableRng};
        let space = Arc::new(
            ModelSpace::from_config(SpaceConfig::line(1.0, 0.25, DensityPreset::Zero)).unwrap(),
        );
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let factor = 10f64.powi(scale);
        let values: Vec<f64> = (0..space.num_nodes())
            .map(|_| (rng.random::<f64>() - 0.5) * factor)
            .collect();
        let field = ScalarField::new(space, values.clone()).unwrap();
        let dir = std::env::temp_dir().join(format!("driftlab-prop-{seed}"));
        let path = dir.join("field.csv");
        driftlab::io::save_field(&path, &field).unwrap();
        let loaded = driftlab::io::load_field(&path).unwrap();
        for (a, b) in values.iter().zip(loaded.values()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
        let _ = std::fs::remove_dir_all(dir);
    }
}
