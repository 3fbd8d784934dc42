//! Built-in eight-region test network: an abstraction of a metropolitan
//! area with a congested core (R5) fed by suburban regions over a four-hour
//! morning peak.

use std::collections::BTreeMap;

use crate::scenario::{
    trapezoid_profile, DemandEntry, DemandSpec, FlowModel, MfdCurve, OriginBuffer, OriginModel,
    PenaltySpec, ScenarioConfig,
};

const REGIONS: [&str; 8] = ["R1", "R2", "R3", "R4", "R5", "R6", "R7", "R8"];

/// Undirected neighbour pairs; each yields two directed edges.
const LINKS: [(&str, &str); 15] = [
    ("R1", "R2"),
    ("R1", "R4"),
    ("R1", "R7"),
    ("R2", "R3"),
    ("R2", "R4"),
    ("R2", "R5"),
    ("R3", "R5"),
    ("R3", "R6"),
    ("R4", "R5"),
    ("R4", "R7"),
    ("R5", "R6"),
    ("R5", "R7"),
    ("R5", "R8"),
    ("R6", "R8"),
    ("R7", "R8"),
];

/// OD shares in percent of the raw table; they sum to 92 and are rescaled
/// so that the grand total is exactly `TOTAL_TRIPS`.
const OD_SHARES: [(&str, &str, f64); 19] = [
    ("R1", "R1", 2.0),
    ("R1", "R5", 10.0),
    ("R2", "R2", 2.0),
    ("R2", "R5", 9.0),
    ("R3", "R3", 2.0),
    ("R3", "R5", 8.0),
    ("R4", "R4", 2.0),
    ("R4", "R5", 7.0),
    ("R5", "R1", 4.0),
    ("R5", "R2", 3.0),
    ("R5", "R5", 15.0),
    ("R5", "R6", 3.0),
    ("R5", "R7", 2.0),
    ("R6", "R5", 6.0),
    ("R6", "R6", 2.0),
    ("R7", "R5", 6.0),
    ("R7", "R7", 2.0),
    ("R8", "R5", 5.0),
    ("R8", "R8", 2.0),
];

pub const TOTAL_TRIPS: f64 = 150_000.0;

/// Departure horizon T: 06:00 to 10:00.
pub const HORIZON: f64 = 14_400.0;

/// Simulation end t_f, one extra hour to drain the network.
pub const FINAL_TIME: f64 = 18_000.0;

fn curve_for(region: &str) -> MfdCurve {
    // Core region is slower and shorter; inner ring slower than the suburbs.
    let (v_f, length) = match region {
        "R5" => (10.0, 10_000.0),
        "R4" | "R6" => (14.0, 15_000.0),
        _ => (24.0, 15_000.0),
    };
    MfdCurve::from_speed(v_f, length, 3000.0, 12_000.0)
}

/// Supply splits calibrated to free-flow shortest-path usage. Uniform
/// splits would starve heavily used approaches (notably the origin feeds),
/// since an inflow never receives more than its fixed share of the
/// downstream supply. A 5% floor keeps alternative approaches usable for
/// rerouting.
fn calibrated_splits() -> BTreeMap<String, f64> {
    let idx = |name: &str| REGIONS.iter().position(|&r| r == name).unwrap();
    let theta: Vec<f64> = REGIONS.iter().map(|&r| curve_for(r).free_flow_time()).collect();
    let mut succ: Vec<Vec<usize>> = vec![Vec::new(); REGIONS.len()];
    for (a, b) in LINKS {
        succ[idx(a)].push(idx(b));
        succ[idx(b)].push(idx(a));
    }

    // usage[(from, to)] in veh/s averaged over the horizon; the buffer feed
    // of region r is keyed (usize::MAX, r).
    let mut usage: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let share_sum: f64 = OD_SHARES.iter().map(|&(_, _, s)| s).sum();
    for (o, d, share) in OD_SHARES {
        let (o, d) = (idx(o), idx(d));
        let rate = TOTAL_TRIPS * share / share_sum / HORIZON;
        *usage.entry((usize::MAX, o)).or_default() += rate;
        if o == d {
            continue;
        }
        // Dijkstra with node traversal costs; a trip exits to d from any
        // predecessor of d without traversing d itself.
        let n = REGIONS.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut prev = vec![usize::MAX; n];
        dist[o] = theta[o];
        let mut done = vec![false; n];
        loop {
            let u = match (0..n).filter(|&u| !done[u] && dist[u].is_finite()).min_by(|&a, &b| {
                dist[a].partial_cmp(&dist[b]).unwrap()
            }) {
                Some(u) => u,
                None => break,
            };
            done[u] = true;
            for &v in &succ[u] {
                if v != d && dist[u] + theta[v] < dist[v] {
                    dist[v] = dist[u] + theta[v];
                    prev[v] = u;
                }
            }
        }
        // Best feeder: a predecessor of d with the smallest distance.
        let feeder = succ[d]
            .iter()
            .copied()
            .filter(|&u| dist[u].is_finite())
            .min_by(|&a, &b| dist[a].partial_cmp(&dist[b]).unwrap())
            .expect("destination reachable");
        let mut v = feeder;
        while prev[v] != usize::MAX {
            *usage.entry((prev[v], v)).or_default() += rate;
            v = prev[v];
        }
    }

    // Per receiving region: usage share with a floor, normalised to 1.
    let mut splits = BTreeMap::new();
    for (j, &region) in REGIONS.iter().enumerate() {
        let mut keys: Vec<(String, f64)> = Vec::new();
        for (a, b) in LINKS {
            for (from, to) in [(a, b), (b, a)] {
                if idx(to) == j {
                    let u = usage.get(&(idx(from), j)).copied().unwrap_or(0.0);
                    keys.push((format!("{from}->{to}"), u));
                }
            }
        }
        keys.push((format!("@{region}->{region}"), usage.get(&(usize::MAX, j)).copied().unwrap_or(0.0)));
        let total: f64 = keys.iter().map(|(_, u)| u).sum();
        let floor = if total > 0.0 { 0.05 * total } else { 1.0 };
        let denom: f64 = keys.iter().map(|(_, u)| u + floor).sum();
        for (key, u) in keys {
            splits.insert(key, (u + floor) / denom);
        }
    }
    splits
}

/// Builds the full-size scenario (150,000 trips, dt = 5 s). Use
/// `ScenarioConfig::scale` for reduced-demand variants.
pub fn eight_region() -> ScenarioConfig {
    let mut edges = Vec::new();
    for (a, b) in LINKS {
        edges.push((a.to_string(), b.to_string()));
        edges.push((b.to_string(), a.to_string()));
    }

    let mfd: BTreeMap<String, MfdCurve> =
        REGIONS.iter().map(|&r| (r.to_string(), curve_for(r))).collect();

    // Buffer outflow saturates at the region capacity; the ramp threshold
    // sets the CFL bound (about 21 s at full scale).
    let buffers: BTreeMap<String, OriginBuffer> = REGIONS
        .iter()
        .map(|&r| {
            (r.to_string(), OriginBuffer { ramp_threshold: 100.0, max_outflow: curve_for(r).capacity })
        })
        .collect();

    // Seven desired arrival slots, every 15 min from 08:00 to 09:30.
    let arrival_times: Vec<f64> = (0..7).map(|i| 7200.0 + 900.0 * i as f64).collect();

    // Trapezoidal departures, peak 07:00 to 09:00.
    let profile = trapezoid_profile(1.0, [0.0, 3600.0, 10_800.0, HORIZON]).unwrap();
    let share_sum: f64 = OD_SHARES.iter().map(|&(_, _, s)| s).sum();
    let mut entries = Vec::new();
    for (o, d, share) in OD_SHARES {
        let pair_total = TOTAL_TRIPS * share / share_sum;
        for &ta in &arrival_times {
            entries.push(DemandEntry {
                origin: o.to_string(),
                destination: d.to_string(),
                arrival_time: ta,
                total: pair_total / arrival_times.len() as f64,
                profile: profile.clone(),
            });
        }
    }

    ScenarioConfig {
        name: "eight-region".into(),
        regions: REGIONS.iter().map(|&r| r.to_string()).collect(),
        edges,
        mfd,
        buffers,
        demand: DemandSpec {
            horizon: HORIZON,
            final_time: FINAL_TIME,
            arrival_times,
            entries,
        },
        penalties: PenaltySpec {
            early_rate: 0.5,
            late_rate: 2.0,
            on_time_halfwidth: 0.0,
            terminal_weights: REGIONS.iter().map(|&r| (r.to_string(), 0.01)).collect(),
            ..Default::default()
        },
        strada_splits: calibrated_splits(),
        max_pair_flows: BTreeMap::new(),
        exit_supplies: BTreeMap::new(),
        dest_exit_supplies: BTreeMap::new(),
        flow_model: FlowModel::Strada,
        origin_model: OriginModel::Buffer,
        dt: 5.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::Network;

    #[test]
    fn scenario_is_valid() {
        let cfg = eight_region();
        assert_eq!(cfg.validate_scenario(), Vec::<String>::new());
    }

    #[test]
    fn totals_and_capacities() {
        let cfg = eight_region();
        let total: f64 = cfg.demand.entries.iter().map(|e| e.total).sum();
        assert!((total - TOTAL_TRIPS).abs() < 1e-6);
        assert_eq!(cfg.mfd["R1"].capacity, 4.8);
        assert_eq!(cfg.mfd["R4"].capacity, 2.8);
        assert_eq!(cfg.mfd["R5"].capacity, 3.0);
    }

    #[test]
    fn scaled_down_still_valid() {
        let mut cfg = eight_region();
        cfg.scale(0.1);
        assert_eq!(cfg.validate_scenario(), Vec::<String>::new());
        let total: f64 = cfg.demand.entries.iter().map(|e| e.total).sum();
        assert!((total - 15_000.0).abs() < 1e-6);
    }

    #[test]
    fn compiles_with_expected_layout() {
        let cfg = eight_region();
        let net = Network::compile(&cfg).unwrap();
        assert_eq!(net.n_regions, 8);
        assert_eq!(net.n_nodes(), 16); // 8 regions + 8 buffers
        assert_eq!(net.edges.len(), 38); // 30 directed links + 8 buffer feeds
        assert_eq!(net.n_classes(), 56); // 8 destinations x 7 arrival slots
        assert_eq!(net.demand_rows.len(), 133);
        assert!(net.routing_stride > 0);
    }
}
