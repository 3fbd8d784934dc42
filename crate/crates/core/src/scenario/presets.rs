//! Small deterministic test scenario: a bidirectional four-region chain
//! with two OD pairs and two desired arrival slots. Sized so a full run
//! takes 200 steps and stays in mild congestion.

use std::collections::BTreeMap;

use crate::scenario::{
    DemandEntry, DemandSpec, FlowModel, InflowProfile, MfdCurve, OriginBuffer, OriginModel,
    PenaltySpec, ScenarioConfig,
};

pub fn four_region_chain() -> ScenarioConfig {
    let regions: Vec<String> = (1..=4).map(|i| format!("C{i}")).collect();
    let mut edges = Vec::new();
    for i in 0..3 {
        edges.push((regions[i].clone(), regions[i + 1].clone()));
        edges.push((regions[i + 1].clone(), regions[i].clone()));
    }

    // Capacity 0.4 veh/s, free-flow traversal 100 s.
    let curve = MfdCurve { critical_accumulation: 40.0, jam_accumulation: 160.0, capacity: 0.4, trip_length: 400.0 };
    let mfd: BTreeMap<String, MfdCurve> =
        regions.iter().map(|r| (r.clone(), curve)).collect();
    let buffers: BTreeMap<String, OriginBuffer> = regions
        .iter()
        .map(|r| (r.clone(), OriginBuffer { ramp_threshold: 10.0, max_outflow: 0.4 }))
        .collect();

    let arrival_times = vec![400.0, 700.0];
    let mut entries = Vec::new();
    for (o, d, total) in [("C1", "C4", 80.0), ("C4", "C1", 60.0)] {
        for &ta in &arrival_times {
            entries.push(DemandEntry {
                origin: o.into(),
                destination: d.into(),
                arrival_time: ta,
                total: total / 2.0,
                profile: InflowProfile::Uniform { window: [0.0, 500.0] },
            });
        }
    }

    ScenarioConfig {
        name: "four-region-chain".into(),
        regions,
        edges,
        mfd,
        buffers,
        demand: DemandSpec { horizon: 500.0, final_time: 1000.0, arrival_times, entries },
        penalties: PenaltySpec {
            early_rate: 0.1,
            late_rate: 0.4,
            terminal_weights: (1..=4).map(|i| (format!("C{i}"), 0.05)).collect(),
            ..Default::default()
        },
        strada_splits: BTreeMap::new(),
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
    fn chain_is_valid_and_has_free_blocks() {
        let cfg = four_region_chain();
        assert_eq!(cfg.validate_scenario(), Vec::<String>::new());
        let net = Network::compile(&cfg).unwrap();
        assert_eq!(net.n_steps, 200);
        assert_eq!(net.horizon_steps, 100);
        // Interior regions offer a real route choice for each class.
        assert!(net.routing_stride > 0, "expected free routing blocks");
        assert_eq!(net.demand_rows.len(), 4);
    }
}
