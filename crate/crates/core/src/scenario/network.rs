//! Compiled scenario: index-based node/class/edge layout used by the
//! dynamics, adjoint and optimizer.
//!
//! Node layout: regions `0..n_regions`, then one buffer node per demand
//! origin. Classes are (destination, desired arrival time) pairs,
//! `class = dest_idx * n_arrivals + ta_idx`. Destination-bound traffic
//! leaves through exit edges attached to the physical predecessors of the
//! destination region (plus a self-exit for internal trips); it never
//! traverses the destination region itself.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::scenario::{
    FlowModel, InflowProfile, MfdCurve, OriginBuffer, OriginModel, PenaltySpec, ScenarioConfig,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeKind {
    Region,
    /// Buffer in front of `region`; its single out-edge feeds that region.
    Origin { region: usize },
}

#[derive(Clone, Copy, Debug)]
pub enum NodeCurve {
    Mfd(MfdCurve),
    Buffer(OriginBuffer),
}

#[derive(Clone, Debug)]
pub struct Node {
    pub kind: NodeKind,
    pub curve: NodeCurve,
    pub name: String,
    /// TTS weight c_i.
    pub tts_weight: f64,
    /// Terminal weight mu_i.
    pub terminal_weight: f64,
    pub out_edges: Vec<usize>,
    pub in_edges: Vec<usize>,
    /// Exit edges leaving this node (region nodes only).
    pub out_exits: Vec<usize>,
}

impl Node {
    /// Upper bound for the accumulation at this node; +inf for buffers.
    pub fn jam(&self) -> f64 {
        match self.curve {
            NodeCurve::Mfd(c) => c.jam_accumulation,
            NodeCurve::Buffer(_) => f64::INFINITY,
        }
    }

    pub fn demand(&self, n: f64) -> f64 {
        match self.curve {
            NodeCurve::Mfd(c) => c.demand(n),
            NodeCurve::Buffer(b) => b.demand(n),
        }
    }

    pub fn demand_slope(&self, n: f64) -> f64 {
        match self.curve {
            NodeCurve::Mfd(c) => c.demand_slope(n),
            NodeCurve::Buffer(b) => b.demand_slope(n),
        }
    }

    /// Inflow supply; buffers accept everything (inflow is exogenous).
    pub fn supply(&self, n: f64) -> f64 {
        match self.curve {
            NodeCurve::Mfd(c) => c.supply(n),
            NodeCurve::Buffer(_) => f64::INFINITY,
        }
    }

    pub fn supply_slope(&self, n: f64) -> f64 {
        match self.curve {
            NodeCurve::Mfd(c) => c.supply_slope(n),
            NodeCurve::Buffer(_) => 0.0,
        }
    }
}

/// Transfer edge between nodes. `beta` is the STRADA split of the receiving
/// node's supply; `cap` the per-pair maximum flow of the KKT merge.
#[derive(Clone, Debug)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub beta: f64,
    pub cap: f64,
}

/// Exit from a feeder region towards a destination (network sink).
#[derive(Clone, Debug)]
pub struct ExitEdge {
    pub from: usize,
    /// Destination region index (not a class).
    pub dest: usize,
    pub supply: f64,
}

/// One routing option of a (node, class) pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RouteOption {
    Edge(usize),
    Exit(usize),
}

/// Routing disposition of a (node, class) pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Routing {
    /// The class never occupies this node.
    Absent,
    /// Single option, coefficient fixed at 1.
    Forced(RouteOption),
    /// Two or more options; coefficients live in the control vector.
    Free { block: usize },
}

/// A controllable routing simplex: the options of one (node, class) pair.
#[derive(Clone, Debug)]
pub struct RoutingBlock {
    pub node: usize,
    pub class: usize,
    pub options: Vec<RouteOption>,
    /// Start of this block's coefficients within a per-step control slice.
    pub offset: usize,
}

#[derive(Clone, Debug)]
pub struct ClassInfo {
    pub dest: usize,
    pub arrival_time: f64,
    pub arrival_weight: f64,
}

/// One optimisable departure profile (an OD/arrival-time demand triple).
#[derive(Clone, Debug)]
pub struct DemandRow {
    pub origin_node: usize,
    pub class: usize,
    pub total: f64,
    /// Scenario-declared rates over the departure horizon, veh/s.
    pub base_rates: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct Network {
    pub nodes: Vec<Node>,
    pub n_regions: usize,
    pub edges: Vec<Edge>,
    pub exits: Vec<ExitEdge>,
    pub classes: Vec<ClassInfo>,
    pub dests: Vec<usize>,
    /// Joint exit supply per destination (indexed like `dests`); +inf when
    /// unconstrained. Only the KKT merge model reads it.
    pub dest_supply: Vec<f64>,
    pub arrival_times: Vec<f64>,
    /// routing[node * n_classes + class]
    pub routing: Vec<Routing>,
    pub blocks: Vec<RoutingBlock>,
    /// Routing coefficients per step (sum of block option counts).
    pub routing_stride: usize,
    pub demand_rows: Vec<DemandRow>,
    pub penalties: PenaltySpec,
    pub flow_model: FlowModel,
    pub origin_model: OriginModel,
    pub dt: f64,
    /// Steps in the departure horizon T.
    pub horizon_steps: usize,
    /// Steps in the full simulation [0, t_f).
    pub n_steps: usize,
}

impl Network {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn class_index(&self, dest: usize, ta_idx: usize) -> usize {
        let d = self.dests.iter().position(|&r| r == dest).expect("dest region");
        d * self.arrival_times.len() + ta_idx
    }

    pub fn routing_at(&self, node: usize, class: usize) -> Routing {
        self.routing[node * self.n_classes() + class]
    }

    pub fn region_name(&self, node: usize) -> &str {
        &self.nodes[node].name
    }

    /// Compiles a validated scenario. Call `config.validate()` first; this
    /// only fails on structural problems that validation already reports.
    pub fn compile(config: &ScenarioConfig) -> Result<Self> {
        let n_regions = config.regions.len();
        let region_idx: BTreeMap<&str, usize> =
            config.regions.iter().enumerate().map(|(i, r)| (r.as_str(), i)).collect();
        let lookup = |name: &str| -> Result<usize> {
            region_idx
                .get(name)
                .copied()
                .ok_or_else(|| Error::Invalid(format!("unknown region {name}")))
        };

        let mut nodes: Vec<Node> = Vec::new();
        for region in &config.regions {
            let curve = *config
                .mfd
                .get(region)
                .ok_or_else(|| Error::Invalid(format!("missing MFD for {region}")))?;
            nodes.push(Node {
                kind: NodeKind::Region,
                curve: NodeCurve::Mfd(curve),
                name: region.clone(),
                tts_weight: config.penalties.tts_weight(region),
                terminal_weight: config.penalties.terminal_weight(region),
                out_edges: Vec::new(),
                in_edges: Vec::new(),
                out_exits: Vec::new(),
            });
        }

        // Buffer nodes, one per demand origin, in region order.
        let mut origin_node: BTreeMap<usize, usize> = BTreeMap::new();
        for origin in config.origin_regions() {
            let r = lookup(&origin)?;
            let curve = match config.origin_model {
                OriginModel::Buffer => NodeCurve::Buffer(
                    *config
                        .buffers
                        .get(&origin)
                        .ok_or_else(|| Error::Invalid(format!("missing buffer for {origin}")))?,
                ),
                // The queue model needs no ramp curve; keep a stand-in so
                // buffer-node demand is well defined if queried.
                OriginModel::HomogeneousQueue => NodeCurve::Buffer(OriginBuffer {
                    ramp_threshold: 1.0,
                    max_outflow: f64::INFINITY,
                }),
            };
            origin_node.insert(r, nodes.len());
            nodes.push(Node {
                kind: NodeKind::Origin { region: r },
                curve,
                name: format!("@{origin}"),
                tts_weight: config.penalties.tts_weight(&origin),
                terminal_weight: config.penalties.terminal_weight(&origin),
                out_edges: Vec::new(),
                in_edges: Vec::new(),
                out_exits: Vec::new(),
            });
        }

        // Edges: physical region-to-region first, then buffer feeds.
        let mut edges: Vec<Edge> = Vec::new();
        let mut edge_key: BTreeMap<String, usize> = BTreeMap::new();
        for (a, b) in &config.edges {
            let (from, to) = (lookup(a)?, lookup(b)?);
            edge_key.insert(format!("{a}->{b}"), edges.len());
            edges.push(Edge { from, to, beta: 0.0, cap: 0.0 });
        }
        for (&r, &node) in &origin_node {
            edge_key.insert(format!("@{}->{}", config.regions[r], config.regions[r]), edges.len());
            edges.push(Edge { from: node, to: r, beta: 0.0, cap: 0.0 });
        }
        for (i, e) in edges.iter().enumerate() {
            nodes[e.from].out_edges.push(i);
            nodes[e.to].in_edges.push(i);
        }

        // Split and cap defaults: uniform split over the receiving region's
        // in-edges; cap equal to the receiving region's capacity.
        for j in 0..n_regions {
            let in_edges = nodes[j].in_edges.clone();
            let uniform = 1.0 / in_edges.len().max(1) as f64;
            let cap = match nodes[j].curve {
                NodeCurve::Mfd(c) => c.capacity,
                NodeCurve::Buffer(_) => unreachable!("region node"),
            };
            for e in in_edges {
                edges[e].beta = uniform;
                edges[e].cap = cap;
            }
        }
        // Buffer-feed keys may reference origins without demand; their
        // buffer nodes do not exist and the keys are ignored.
        for (key, &beta) in &config.strada_splits {
            match edge_key.get(key) {
                Some(&e) => edges[e].beta = beta,
                None if key.starts_with('@') => {}
                None => return Err(Error::Invalid(format!("unknown split edge {key}"))),
            }
        }
        for (key, &cap) in &config.max_pair_flows {
            match edge_key.get(key) {
                Some(&e) => edges[e].cap = cap,
                None if key.starts_with('@') => {}
                None => return Err(Error::Invalid(format!("unknown capped edge {key}"))),
            }
        }

        // Classes.
        let mut arrival_times = config.demand.arrival_times.clone();
        arrival_times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut dests: Vec<usize> = Vec::new();
        for d in config.destination_regions() {
            dests.push(lookup(&d)?);
        }
        dests.sort_unstable();
        let n_ta = arrival_times.len();
        let mut classes = Vec::with_capacity(dests.len() * n_ta);
        for &dest in &dests {
            for &ta in &arrival_times {
                classes.push(ClassInfo {
                    dest,
                    arrival_time: ta,
                    arrival_weight: config.penalties.arrival_weight(&config.regions[dest]),
                });
            }
        }
        let n_classes = classes.len();

        // Exit edges: from each physical predecessor of a destination, plus
        // the destination's self-exit for internal trips.
        let mut exits: Vec<ExitEdge> = Vec::new();
        let mut exit_of: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for &dest in &dests {
            let mut feeders: Vec<usize> = edges
                .iter()
                .filter(|e| e.to == dest && e.from < n_regions)
                .map(|e| e.from)
                .collect();
            feeders.push(dest);
            feeders.sort_unstable();
            feeders.dedup();
            for from in feeders {
                let key = format!("{}->{}", config.regions[from], config.regions[dest]);
                let supply = config.exit_supplies.get(&key).copied().unwrap_or(f64::INFINITY);
                exit_of.insert((from, dest), exits.len());
                nodes[from].out_exits.push(exits.len());
                exits.push(ExitEdge { from, dest, supply });
            }
        }

        // Reachability towards each destination over the physical graph.
        let mut reach = vec![vec![false; n_regions]; dests.len()];
        for (di, &dest) in dests.iter().enumerate() {
            let r = &mut reach[di];
            r[dest] = true;
            let mut frontier = vec![dest];
            while let Some(v) = frontier.pop() {
                for &e in &nodes[v].in_edges {
                    let u = edges[e].from;
                    if u < n_regions && !r[u] {
                        r[u] = true;
                        frontier.push(u);
                    }
                }
            }
        }

        // Routing table and free blocks.
        let mut routing = vec![Routing::Absent; nodes.len() * n_classes];
        let mut blocks: Vec<RoutingBlock> = Vec::new();
        let mut offset = 0usize;
        for node in 0..nodes.len() {
            for class in 0..n_classes {
                let dest = classes[class].dest;
                let di = dests.iter().position(|&d| d == dest).unwrap();
                let options: Vec<RouteOption> = match nodes[node].kind {
                    NodeKind::Origin { .. } => {
                        nodes[node].out_edges.iter().map(|&e| RouteOption::Edge(e)).collect()
                    }
                    NodeKind::Region if node == dest => {
                        vec![RouteOption::Exit(exit_of[&(dest, dest)])]
                    }
                    NodeKind::Region => {
                        let mut opts = Vec::new();
                        if let Some(&x) = exit_of.get(&(node, dest)) {
                            opts.push(RouteOption::Exit(x));
                        }
                        for &e in &nodes[node].out_edges {
                            let j = edges[e].to;
                            if j != dest && reach[di][j] {
                                opts.push(RouteOption::Edge(e));
                            }
                        }
                        opts
                    }
                };
                routing[node * n_classes + class] = match options.len() {
                    0 => Routing::Absent,
                    1 => Routing::Forced(options[0]),
                    n => {
                        blocks.push(RoutingBlock { node, class, options, offset });
                        offset += n;
                        Routing::Free { block: blocks.len() - 1 }
                    }
                };
            }
        }

        // Demand rows with discretised base rates.
        let horizon_steps = config.horizon_steps();
        let mut demand_rows = Vec::new();
        for entry in &config.demand.entries {
            if entry.total <= 0.0 {
                continue;
            }
            let origin = lookup(&entry.origin)?;
            let dest = lookup(&entry.destination)?;
            let ta_idx = arrival_times
                .iter()
                .position(|&t| (t - entry.arrival_time).abs() < 1e-9)
                .ok_or_else(|| Error::Invalid(format!("arrival time {}", entry.arrival_time)))?;
            let di = dests.iter().position(|&d| d == dest).unwrap();
            let base_rates = match &entry.profile {
                InflowProfile::Sampled { rates } => rates.clone(),
                p => p.rates(entry.total, config.dt, horizon_steps),
            };
            demand_rows.push(DemandRow {
                origin_node: origin_node[&origin],
                class: di * n_ta + ta_idx,
                total: entry.total,
                base_rates,
            });
        }

        let mut dest_supply = vec![f64::INFINITY; dests.len()];
        for (dest_name, &supply) in &config.dest_exit_supplies {
            let dest = lookup(dest_name)?;
            if let Some(di) = dests.iter().position(|&d| d == dest) {
                dest_supply[di] = supply;
            }
        }

        let net = Network {
            nodes,
            n_regions,
            edges,
            exits,
            classes,
            dests,
            dest_supply,
            arrival_times,
            routing,
            blocks,
            routing_stride: offset,
            demand_rows,
            penalties: config.penalties.clone(),
            flow_model: config.flow_model,
            origin_model: config.origin_model,
            dt: config.dt,
            horizon_steps,
            n_steps: config.n_steps(),
        };
        Ok(net)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::tests::two_region;

    #[test]
    fn two_region_layout() {
        let cfg = two_region();
        cfg.validate().unwrap();
        let net = Network::compile(&cfg).unwrap();
        assert_eq!(net.n_regions, 2);
        assert_eq!(net.n_nodes(), 3); // A, B, @A
        assert_eq!(net.edges.len(), 2); // A->B, @A->A
        assert_eq!(net.n_classes(), 1); // dest B, one arrival time
        // Exits towards B: from A (predecessor) and from B itself.
        assert_eq!(net.exits.len(), 2);
        // Every routing decision is forced; no free blocks.
        assert!(net.blocks.is_empty());
        assert_eq!(net.routing_stride, 0);
        // Class at A: exit straight to B (never traverses B).
        match net.routing_at(0, 0) {
            Routing::Forced(RouteOption::Exit(x)) => {
                assert_eq!(net.exits[x].from, 0);
                assert_eq!(net.exits[x].dest, 1);
            }
            other => panic!("unexpected routing {other:?}"),
        }
        assert_eq!(net.demand_rows.len(), 1);
        assert_eq!(net.demand_rows[0].origin_node, 2);
        let mass: f64 = net.demand_rows[0].base_rates.iter().sum::<f64>() * net.dt;
        assert!((mass - 1800.0).abs() < 1e-9);
    }

    #[test]
    fn diamond_has_free_block() {
        // A -> B -> D and A -> C -> D: class D at A must choose B or C.
        let mut cfg = two_region();
        cfg.regions = vec!["A".into(), "B".into(), "C".into(), "D".into()];
        let mfd = cfg.mfd["A"];
        cfg.mfd = ["A", "B", "C", "D"].iter().map(|r| (r.to_string(), mfd)).collect();
        cfg.edges = vec![
            ("A".into(), "B".into()),
            ("A".into(), "C".into()),
            ("B".into(), "D".into()),
            ("C".into(), "D".into()),
        ];
        cfg.demand.entries[0].destination = "D".into();
        cfg.validate().unwrap();
        let net = Network::compile(&cfg).unwrap();
        assert_eq!(net.blocks.len(), 1);
        let block = &net.blocks[0];
        assert_eq!(block.node, 0);
        assert_eq!(block.options.len(), 2);
        assert_eq!(net.routing_stride, 2);
        // B and C exit directly to D; D only self-exits.
        assert!(matches!(net.routing_at(1, 0), Routing::Forced(RouteOption::Exit(_))));
        assert!(matches!(net.routing_at(2, 0), Routing::Forced(RouteOption::Exit(_))));
        assert!(matches!(net.routing_at(3, 0), Routing::Forced(RouteOption::Exit(_))));
    }
}
