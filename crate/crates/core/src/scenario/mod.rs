//! Scenario definition: regional network, MFD curves, origin buffers,
//! demand with desired arrival times, penalty weights and validation.

mod curves;
mod network;
mod profile;

pub mod eight_region;
pub mod presets;

pub use curves::{MfdCurve, OriginBuffer};
pub use network::{
    ClassInfo, DemandRow, Edge, ExitEdge, Network, Node, NodeCurve, NodeKind, RouteOption,
    Routing, RoutingBlock,
};
pub use profile::{trapezoid_peak_rate, trapezoid_profile, InflowProfile};

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowModel {
    Strada,
    KktOptimization,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OriginModel {
    Buffer,
    HomogeneousQueue,
}

/// One (origin, destination, desired arrival time) demand triple.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemandEntry {
    pub origin: String,
    pub destination: String,
    /// Desired arrival time in seconds since simulation start; must be a
    /// member of `DemandSpec::arrival_times`.
    pub arrival_time: f64,
    /// Total vehicles of this triple (the budget of its departure profile).
    pub total: f64,
    pub profile: InflowProfile,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemandSpec {
    /// End of the departure window T (s); inflow is zero for t >= T.
    pub horizon: f64,
    /// End of the simulation t_f > T; the network should be near empty by then.
    pub final_time: f64,
    pub arrival_times: Vec<f64>,
    pub entries: Vec<DemandEntry>,
}

impl DemandSpec {
    pub fn total_demand(&self) -> f64 {
        self.entries.iter().map(|e| e.total).sum()
    }
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PenaltySpec {
    /// Cost per second of early arrival.
    pub early_rate: f64,
    /// Cost per second of late arrival.
    pub late_rate: f64,
    /// Half-width of the zero-penalty plateau around each t_a (s).
    #[serde(default)]
    pub on_time_halfwidth: f64,
    /// Per-region TTS weights c_i; absent regions default to 1.
    #[serde(default)]
    pub tts_weights: BTreeMap<String, f64>,
    /// Scaling s applied to arrival flows, per destination; default 1.
    #[serde(default)]
    pub arrival_weights: BTreeMap<String, f64>,
    /// Default arrival weight for destinations not listed above.
    #[serde(default = "one")]
    pub default_arrival_weight: f64,
    /// Terminal weights mu_i; absent regions default to 0.
    #[serde(default)]
    pub terminal_weights: BTreeMap<String, f64>,
}

impl PenaltySpec {
    /// Schedule-delay cost L(t_a, t) per vehicle.
    pub fn arrival_penalty(&self, t_a: f64, t: f64) -> f64 {
        let w = self.on_time_halfwidth;
        self.early_rate * (t_a - w - t).max(0.0) + self.late_rate * (t - t_a - w).max(0.0)
    }

    pub fn tts_weight(&self, region: &str) -> f64 {
        self.tts_weights.get(region).copied().unwrap_or(1.0)
    }

    pub fn arrival_weight(&self, dest: &str) -> f64 {
        self.arrival_weights
            .get(dest)
            .copied()
            .unwrap_or(self.default_arrival_weight)
    }

    pub fn terminal_weight(&self, region: &str) -> f64 {
        self.terminal_weights.get(region).copied().unwrap_or(0.0)
    }
}

impl Default for PenaltySpec {
    fn default() -> Self {
        PenaltySpec {
            early_rate: 0.0,
            late_rate: 0.0,
            on_time_halfwidth: 0.0,
            tts_weights: BTreeMap::new(),
            arrival_weights: BTreeMap::new(),
            default_arrival_weight: 1.0,
            terminal_weights: BTreeMap::new(),
        }
    }
}

/// Complete scenario file. Edge-keyed maps use `"A->B"` keys; buffer-feed
/// edges are keyed `"@A->A"`. Times are seconds since simulation start,
/// accumulations vehicles, rates vehicles/second.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: String,
    pub regions: Vec<String>,
    pub edges: Vec<(String, String)>,
    pub mfd: BTreeMap<String, MfdCurve>,
    pub buffers: BTreeMap<String, OriginBuffer>,
    pub demand: DemandSpec,
    #[serde(default)]
    pub penalties: PenaltySpec,
    /// STRADA split coefficients per inbound edge; missing edges default to
    /// a uniform split over the receiving region's inbound edges.
    #[serde(default)]
    pub strada_splits: BTreeMap<String, f64>,
    /// Per-pair maximum flows q_{li,x} for the KKT merge model; missing
    /// edges default to the receiving region's capacity.
    #[serde(default)]
    pub max_pair_flows: BTreeMap<String, f64>,
    /// Exit supplies per (feeder region -> destination) pair; default +inf.
    #[serde(default)]
    pub exit_supplies: BTreeMap<String, f64>,
    /// Total exit supply per destination, used by the KKT merge at sinks.
    #[serde(default)]
    pub dest_exit_supplies: BTreeMap<String, f64>,
    pub flow_model: FlowModel,
    pub origin_model: OriginModel,
    /// Simulation time step (s); must satisfy the CFL bound.
    pub dt: f64,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serialisation")
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    /// Homothetic rescale: demand, accumulations and rate parameters are all
    /// multiplied by `factor`, leaving speeds and travel times unchanged.
    pub fn scale(&mut self, factor: f64) {
        for curve in self.mfd.values_mut() {
            curve.critical_accumulation *= factor;
            curve.jam_accumulation *= factor;
            curve.capacity *= factor;
        }
        for buf in self.buffers.values_mut() {
            buf.ramp_threshold *= factor;
            buf.max_outflow *= factor;
        }
        for entry in &mut self.demand.entries {
            entry.total *= factor;
            if let InflowProfile::Sampled { rates } = &mut entry.profile {
                for r in rates {
                    *r *= factor;
                }
            }
        }
        for v in self.max_pair_flows.values_mut() {
            *v *= factor;
        }
        for v in self.exit_supplies.values_mut() {
            *v *= factor;
        }
        for v in self.dest_exit_supplies.values_mut() {
            *v *= factor;
        }
    }

    /// Largest time step allowed by the CFL bound: the inverse of the
    /// steepest demand slope, supply slope and origin-buffer ramp slope.
    pub fn cfl_timestep(&self) -> f64 {
        let mut bound = f64::INFINITY;
        for curve in self.mfd.values() {
            bound = bound.min(curve.critical_accumulation / curve.capacity);
            bound = bound
                .min((curve.jam_accumulation - curve.critical_accumulation) / curve.capacity);
        }
        if self.origin_model == OriginModel::Buffer {
            for buf in self.buffers.values() {
                bound = bound.min(buf.ramp_threshold / buf.max_outflow);
            }
        }
        bound
    }

    fn region_set(&self) -> BTreeSet<&str> {
        self.regions.iter().map(|s| s.as_str()).collect()
    }

    /// Set of regions that appear as demand origins.
    pub fn origin_regions(&self) -> BTreeSet<String> {
        self.demand.entries.iter().map(|e| e.origin.clone()).collect()
    }

    /// Set of regions that appear as demand destinations.
    pub fn destination_regions(&self) -> BTreeSet<String> {
        self.demand.entries.iter().map(|e| e.destination.clone()).collect()
    }

    pub fn horizon_steps(&self) -> usize {
        (self.demand.horizon / self.dt).round() as usize
    }

    pub fn n_steps(&self) -> usize {
        (self.demand.final_time / self.dt).round() as usize
    }

    /// Returns the list of violated invariants; empty means valid.
    pub fn validate_scenario(&self) -> Vec<String> {
        let mut findings = Vec::new();
        let regions = self.region_set();

        if self.regions.is_empty() {
            findings.push("no regions declared".to_string());
        }
        let mut seen = BTreeSet::new();
        for r in &self.regions {
            if !seen.insert(r.as_str()) {
                findings.push(format!("duplicate region id {r}"));
            }
        }

        let mut edge_set = BTreeSet::new();
        for (a, b) in &self.edges {
            for end in [a, b] {
                if !regions.contains(end.as_str()) {
                    findings.push(format!("edge {a}->{b}: unknown region {end}"));
                }
            }
            if a == b {
                findings.push(format!("edge {a}->{b}: self-loops are not allowed"));
            }
            if !edge_set.insert((a.as_str(), b.as_str())) {
                findings.push(format!("duplicate edge {a}->{b}"));
            }
        }

        for region in &self.regions {
            match self.mfd.get(region) {
                Some(curve) => curve.check(region, &mut findings),
                None => findings.push(format!("region {region}: missing MFD curve")),
            }
        }
        for key in self.mfd.keys() {
            if !regions.contains(key.as_str()) {
                findings.push(format!("mfd entry for unknown region {key}"));
            }
        }

        // Timing.
        if !(self.dt > 0.0) {
            findings.push("dt must be positive".to_string());
        }
        if self.demand.final_time <= self.demand.horizon {
            findings.push("final_time t_f must exceed the departure horizon T".to_string());
        }
        if self.dt > 0.0 {
            for (label, t) in [("horizon T", self.demand.horizon), ("final_time", self.demand.final_time)] {
                let steps = t / self.dt;
                if (steps - steps.round()).abs() > 1e-9 * steps.max(1.0) {
                    findings.push(format!("{label} must be an integer multiple of dt"));
                }
            }
            let bound = self.cfl_timestep();
            if self.dt > bound + 1e-12 {
                findings.push(format!(
                    "time step dt={} exceeds the CFL bound {bound}",
                    self.dt
                ));
            }
        }

        // Demand entries.
        let ta_set: Vec<f64> = self.demand.arrival_times.clone();
        if ta_set.is_empty() && !self.demand.entries.is_empty() {
            findings.push("demand declares entries but no arrival times".to_string());
        }
        let steps_t = if self.dt > 0.0 { self.horizon_steps() } else { 0 };
        for (idx, e) in self.demand.entries.iter().enumerate() {
            let loc = format!("demand[{idx}] {}->{} @{}", e.origin, e.destination, e.arrival_time);
            for r in [&e.origin, &e.destination] {
                if !regions.contains(r.as_str()) {
                    findings.push(format!("{loc}: unknown region {r}"));
                }
            }
            if !ta_set.iter().any(|&t| (t - e.arrival_time).abs() < 1e-9) {
                findings.push(format!("{loc}: arrival time not in the declared set"));
            }
            if e.total < 0.0 {
                findings.push(format!("{loc}: negative total demand"));
            }
            e.profile.check(self.demand.horizon, &mut findings, &loc);
            if self.dt > 0.0 && e.total > 0.0 {
                let rates = match &e.profile {
                    InflowProfile::Sampled { rates } => {
                        if rates.len() != steps_t {
                            findings.push(format!(
                                "{loc}: sampled profile has {} steps, expected {steps_t}",
                                rates.len()
                            ));
                            continue;
                        }
                        if rates.iter().any(|&r| r < 0.0) {
                            findings.push(format!("{loc}: negative inflow rate"));
                        }
                        rates.clone()
                    }
                    p => p.rates(e.total, self.dt, steps_t),
                };
                let mass: f64 = rates.iter().sum::<f64>() * self.dt;
                if (mass - e.total).abs() > 1e-9 * e.total.max(1.0) {
                    findings.push(format!(
                        "{loc}: demand budget mismatch (profile integrates to {mass}, total {})",
                        e.total
                    ));
                }
            }
        }

        // Buffers must exist for every origin (buffer origin model).
        if self.origin_model == OriginModel::Buffer {
            for origin in self.origin_regions() {
                match self.buffers.get(&origin) {
                    Some(buf) => buf.check(&origin, &mut findings),
                    None => findings.push(format!("origin {origin}: missing buffer parameters")),
                }
            }
        }
        for key in self.buffers.keys() {
            if !regions.contains(key.as_str()) {
                findings.push(format!("buffer entry for unknown region {key}"));
            }
        }

        // OD connectivity on the physical graph.
        let index: BTreeMap<&str, usize> =
            self.regions.iter().enumerate().map(|(i, r)| (r.as_str(), i)).collect();
        let mut succ = vec![Vec::new(); self.regions.len()];
        for (a, b) in &self.edges {
            if let (Some(&ia), Some(&ib)) = (index.get(a.as_str()), index.get(b.as_str())) {
                succ[ia].push(ib);
            }
        }
        for e in &self.demand.entries {
            if e.total <= 0.0 {
                continue;
            }
            let (o, d) = match (index.get(e.origin.as_str()), index.get(e.destination.as_str())) {
                (Some(&o), Some(&d)) => (o, d),
                _ => continue,
            };
            if o == d {
                continue; // internal trip: buffer -> region -> self-exit
            }
            let mut reached = vec![false; self.regions.len()];
            let mut queue = VecDeque::from([o]);
            reached[o] = true;
            while let Some(u) = queue.pop_front() {
                for &v in &succ[u] {
                    if !reached[v] {
                        reached[v] = true;
                        queue.push_back(v);
                    }
                }
            }
            if !reached[d] {
                findings.push(format!(
                    "no directed path from {} to {} for a positive-demand OD pair",
                    e.origin, e.destination
                ));
            }
        }

        // STRADA splits and KKT caps.
        let valid_edge_key = |key: &str, findings: &mut Vec<String>, what: &str| {
            let ok = match key.split_once("->") {
                Some((from, to)) => {
                    let from_ok = if let Some(buf) = from.strip_prefix('@') {
                        buf == to && regions.contains(buf)
                    } else {
                        edge_set.contains(&(from, to))
                    };
                    from_ok && regions.contains(to)
                }
                None => false,
            };
            if !ok {
                findings.push(format!("{what} key {key}: unknown edge"));
            }
        };
        for (key, &beta) in &self.strada_splits {
            valid_edge_key(key, &mut findings, "strada_splits");
            if !(beta > 0.0) {
                findings.push(format!("strada split {key}: must be positive"));
            }
        }
        for (key, &cap) in &self.max_pair_flows {
            valid_edge_key(key, &mut findings, "max_pair_flows");
            if !(cap > 0.0) {
                findings.push(format!("max_pair_flow {key}: must be positive"));
            }
        }
        for (key, &s) in &self.exit_supplies {
            if let Some((from, to)) = key.split_once("->") {
                let self_exit = from == to;
                if !(regions.contains(from)
                    && regions.contains(to)
                    && (self_exit || edge_set.contains(&(from, to))))
                {
                    findings.push(format!("exit_supplies key {key}: unknown exit pair"));
                }
            } else {
                findings.push(format!("exit_supplies key {key}: malformed"));
            }
            if s < 0.0 {
                findings.push(format!("exit supply {key}: must be nonnegative"));
            }
        }

        // Penalties.
        if self.penalties.early_rate < 0.0 || self.penalties.late_rate < 0.0 {
            findings.push("arrival penalty rates must be nonnegative".to_string());
        }
        for (r, &c) in &self.penalties.tts_weights {
            if !(c > 0.0) {
                findings.push(format!("tts weight for {r} must be positive"));
            }
        }
        for (r, &m) in &self.penalties.terminal_weights {
            if m < 0.0 {
                findings.push(format!("terminal weight for {r} must be nonnegative"));
            }
        }

        findings
    }

    pub fn validate(&self) -> Result<()> {
        let findings = self.validate_scenario();
        if findings.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(findings))
        }
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn two_region() -> ScenarioConfig {
        let mfd = MfdCurve::from_speed(10.0, 10_000.0, 3000.0, 12_000.0);
        ScenarioConfig {
            name: "two-region".into(),
            regions: vec!["A".into(), "B".into()],
            edges: vec![("A".into(), "B".into())],
            mfd: [("A".into(), mfd), ("B".into(), mfd)].into(),
            buffers: [("A".into(), OriginBuffer { ramp_threshold: 60.0, max_outflow: 6.0 })].into(),
            demand: DemandSpec {
                horizon: 3600.0,
                final_time: 7200.0,
                arrival_times: vec![3000.0],
                entries: vec![DemandEntry {
                    origin: "A".into(),
                    destination: "B".into(),
                    arrival_time: 3000.0,
                    total: 1800.0,
                    profile: InflowProfile::Uniform { window: [0.0, 3600.0] },
                }],
            },
            penalties: PenaltySpec { early_rate: 0.002, late_rate: 0.005, ..Default::default() },
            strada_splits: BTreeMap::new(),
            max_pair_flows: BTreeMap::new(),
            exit_supplies: BTreeMap::new(),
            dest_exit_supplies: BTreeMap::new(),
            flow_model: FlowModel::Strada,
            origin_model: OriginModel::Buffer,
            dt: 10.0,
        }
    }

    #[test]
    fn valid_scenario_has_no_findings() {
        assert_eq!(two_region().validate_scenario(), Vec::<String>::new());
    }

    #[test]
    fn unknown_region_reported() {
        let mut cfg = two_region();
        cfg.edges.push(("A".into(), "R9".into()));
        let findings = cfg.validate_scenario();
        assert!(findings.iter().any(|f| f.contains("unknown region R9")), "{findings:?}");
    }

    #[test]
    fn budget_mismatch_reported() {
        let mut cfg = two_region();
        let steps = cfg.horizon_steps();
        // 0.9x the declared total.
        cfg.demand.entries[0].profile =
            InflowProfile::Sampled { rates: vec![0.9 * 1800.0 / 3600.0; steps] };
        let findings = cfg.validate_scenario();
        assert!(findings.iter().any(|f| f.contains("demand budget mismatch")), "{findings:?}");
    }

    #[test]
    fn cfl_violation_reported() {
        let mut cfg = two_region();
        cfg.dt = 20.0; // buffer slope 6/60 = 0.1 -> bound 10 s
        let findings = cfg.validate_scenario();
        assert!(findings.iter().any(|f| f.contains("CFL bound")), "{findings:?}");
    }

    #[test]
    fn missing_path_reported() {
        let mut cfg = two_region();
        cfg.edges.clear();
        let findings = cfg.validate_scenario();
        assert!(findings.iter().any(|f| f.contains("no directed path")), "{findings:?}");
    }

    #[test]
    fn cfl_examples() {
        let mut cfg = two_region();
        cfg.buffers.clear();
        cfg.demand.entries.clear();
        // demand slope 3/3000 -> 1000 s, supply slope 3/9000 -> 3000 s
        assert_eq!(cfg.cfl_timestep(), 1000.0);
        cfg.buffers.insert("A".into(), OriginBuffer { ramp_threshold: 100.0, max_outflow: 10.0 });
        assert_eq!(cfg.cfl_timestep(), 10.0);
    }

    #[test]
    fn json_round_trip() {
        let cfg = two_region();
        let parsed = ScenarioConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(parsed, cfg);
    }

    #[test]
    fn arrival_penalty_shape() {
        let p = PenaltySpec { early_rate: 0.005, late_rate: 0.01, ..Default::default() };
        assert_eq!(p.arrival_penalty(100.0, 100.0), 0.0);
        assert_eq!(p.arrival_penalty(0.0, 300.0), 3.0);
        assert_eq!(p.arrival_penalty(200.0, 0.0), 1.0);
    }
}
