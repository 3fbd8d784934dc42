//! Exact Euclidean projections onto the feasible control set: unit
//! simplexes for routing splits and fixed-budget nonnegative profiles for
//! departures.
//!
//! Both are instances of projecting g onto {x >= 0, sum x = b}: the result
//! is x_j = max(0, g_j + zeta) with the multiplier zeta found exactly by
//! ranking the coordinates and interpolating on the crossing segment, so no
//! iterative tolerance is involved.

use crate::control::ControlTrajectory;
use crate::error::{Error, Result};
use crate::scenario::Network;

/// Projects onto {x >= 0, sum x = budget}. O(n log n).
pub fn project_nonneg_sum(g: &[f64], budget: f64) -> Vec<f64> {
    assert!(!g.is_empty(), "empty projection input");
    assert!(budget > 0.0, "budget must be positive");
    assert!(g.iter().all(|v| v.is_finite()), "non-finite projection input");

    let mut sorted: Vec<f64> = g.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());

    // With the top l coordinates active, zeta = (budget - prefix_l) / l.
    // The correct l is the largest one keeping the l-th coordinate active.
    let mut prefix = 0.0;
    let mut active = sorted.len();
    let mut zeta = 0.0;
    for (l, &v) in sorted.iter().enumerate() {
        prefix += v;
        let z = (budget - prefix) / (l + 1) as f64;
        if v + z > 0.0 {
            active = l + 1;
            zeta = z;
        } else {
            break;
        }
    }
    debug_assert!(active >= 1);
    let _ = active;
    g.iter().map(|&v| (v + zeta).max(0.0)).collect()
}

/// Projects a routing split block onto the unit simplex.
pub fn project_routing_simplex(g: &[f64]) -> Result<Vec<f64>> {
    if g.is_empty() {
        return Err(Error::Invalid("empty routing split block".into()));
    }
    Ok(project_nonneg_sum(g, 1.0))
}

/// Projects a departure profile onto {rates >= 0, sum rates = budget}.
/// `budget` is in rate-sum units: total vehicles divided by dt.
pub fn project_demand_budget(d: &[f64], budget: f64) -> Vec<f64> {
    project_nonneg_sum(d, budget)
}

/// Restores feasibility of a full control trajectory: every routing block
/// of every step onto its simplex, every departure profile onto its budget.
pub fn project_controls(net: &Network, ctrl: &ControlTrajectory) -> ControlTrajectory {
    let mut out = ctrl.clone();
    for k in 0..net.n_steps {
        let slice = out.routing_slice_mut(net, k);
        for block in &net.blocks {
            let range = block.offset..block.offset + block.options.len();
            let projected = project_nonneg_sum(&slice[range.clone()], 1.0);
            slice[range].copy_from_slice(&projected);
        }
    }
    for (r, row) in net.demand_rows.iter().enumerate() {
        out.departures[r] = project_demand_budget(&out.departures[r], row.total / net.dt);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Independent active-set oracle: enumerate supports, solve the
    /// equality-constrained problem on each, check KKT conditions.
    fn oracle(g: &[f64], budget: f64) -> Vec<f64> {
        let n = g.len();
        for mask in 1u32..(1 << n) {
            let support: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
            let sum: f64 = support.iter().map(|&i| g[i]).sum();
            let zeta = (budget - sum) / support.len() as f64;
            let feasible = support.iter().all(|&i| g[i] + zeta >= -1e-12);
            let optimal = (0..n)
                .filter(|i| mask & (1 << i) == 0)
                .all(|i| g[i] + zeta <= 1e-12);
            if feasible && optimal {
                let mut x = vec![0.0; n];
                for &i in &support {
                    x[i] = (g[i] + zeta).max(0.0);
                }
                return x;
            }
        }
        unreachable!("oracle found no KKT point");
    }

    #[test]
    fn feasible_point_is_fixed() {
        let p = project_routing_simplex(&[0.5, 0.5]).unwrap();
        assert_eq!(p, vec![0.5, 0.5]);
    }

    #[test]
    fn clips_to_vertex() {
        let p = project_routing_simplex(&[2.0, 0.0]).unwrap();
        assert!((p[0] - 1.0).abs() < 1e-15 && p[1] == 0.0, "{p:?}");
    }

    #[test]
    fn symmetric_case() {
        let p = project_routing_simplex(&[0.6, 0.6, 0.6]).unwrap();
        for &v in &p {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn budget_projection_examples() {
        // Already feasible.
        let p = project_demand_budget(&[1.0, 1.0], 2.0);
        assert_eq!(p, vec![1.0, 1.0]);
        // (3, 1) with budget 2 -> (2, 0).
        let p = project_demand_budget(&[3.0, 1.0], 2.0);
        assert!((p[0] - 2.0).abs() < 1e-15 && p[1] == 0.0, "{p:?}");
    }

    #[test]
    fn ties_match_oracle() {
        let g = [1.5, 1.5, -0.5, 1.5];
        let p = project_nonneg_sum(&g, 1.0);
        let o = oracle(&g, 1.0);
        for (a, b) in p.iter().zip(&o) {
            assert!((a - b).abs() < 1e-12, "{p:?} vs {o:?}");
        }
    }

    #[test]
    #[should_panic(expected = "empty")]
    fn empty_input_rejected() {
        project_nonneg_sum(&[], 1.0);
    }

    #[test]
    fn project_controls_is_fixed_point_on_feasible() {
        let cfg = crate::scenario::eight_region::eight_region();
        let net = crate::scenario::Network::compile(&cfg).unwrap();
        let ctrl = crate::control::ControlTrajectory::uniform(&net);
        let projected = project_controls(&net, &ctrl);
        for (a, b) in ctrl.routing.iter().zip(&projected.routing) {
            assert!((a - b).abs() < 1e-12);
        }
        for (ra, rb) in ctrl.departures.iter().zip(&projected.departures) {
            for (a, b) in ra.iter().zip(rb) {
                assert!((a - b).abs() < 1e-9);
            }
        }
        projected.check_feasible(&net, 1e-9).unwrap();
    }

    proptest! {
        #[test]
        fn matches_oracle(
            g in proptest::collection::vec(-10.0f64..10.0, 2..8),
            budget in 0.1f64..20.0,
        ) {
            let p = project_nonneg_sum(&g, budget);
            let o = oracle(&g, budget);
            for (a, b) in p.iter().zip(&o) {
                prop_assert!((a - b).abs() < 1e-10, "{:?} vs {:?}", p, o);
            }
        }

        #[test]
        fn idempotent(g in proptest::collection::vec(-10.0f64..10.0, 2..10)) {
            let p1 = project_nonneg_sum(&g, 1.0);
            let p2 = project_nonneg_sum(&p1, 1.0);
            for (a, b) in p1.iter().zip(&p2) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn non_expansive(
            g in proptest::collection::vec(-10.0f64..10.0, 2..10),
            h in proptest::collection::vec(-10.0f64..10.0, 2..10),
        ) {
            let n = g.len().min(h.len());
            let (g, h) = (&g[..n], &h[..n]);
            let pg = project_nonneg_sum(g, 1.0);
            let ph = project_nonneg_sum(h, 1.0);
            let d_in: f64 = g.iter().zip(h).map(|(a, b)| (a - b).powi(2)).sum();
            let d_out: f64 = pg.iter().zip(&ph).map(|(a, b)| (a - b).powi(2)).sum();
            prop_assert!(d_out.sqrt() <= d_in.sqrt() + 1e-12);
        }

        #[test]
        fn feasible_output(
            g in proptest::collection::vec(-10.0f64..10.0, 2..10),
            budget in 0.1f64..20.0,
        ) {
            let p = project_nonneg_sum(&g, budget);
            prop_assert!(p.iter().all(|&v| v >= 0.0));
            let sum: f64 = p.iter().sum();
            prop_assert!((sum - budget).abs() <= 1e-9 * budget.max(1.0));
        }

        #[test]
        fn permutation_equivariant(
            g in proptest::collection::vec(-10.0f64..10.0, 2..10),
            seed in 0u64..1000,
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
            let mut perm: Vec<usize> = (0..g.len()).collect();
            perm.shuffle(&mut rng);
            let permuted: Vec<f64> = perm.iter().map(|&i| g[i]).collect();
            let p_then = project_nonneg_sum(&permuted, 1.0);
            let base = project_nonneg_sum(&g, 1.0);
            let then_p: Vec<f64> = perm.iter().map(|&i| base[i]).collect();
            for (a, b) in p_then.iter().zip(&then_p) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
