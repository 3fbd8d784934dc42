//! Exact merge of competing inflows into a shared supply.
//!
//! Flows take the form q_i = min(d_i, c_i * (1 - zeta)) with a common
//! multiplier zeta chosen so the flows exhaust min(supply, sum of the
//! individually attainable flows). The map zeta -> sum_i q_i is piecewise
//! linear and decreasing, so zeta is found by sorting its cut values
//! 1 - d_i / c_i and interpolating on the crossing segment.

/// One merge instance: per-inflow demands d_i >= 0, per-inflow maximum
/// flows c_i > 0 and the shared downstream supply.
#[derive(Clone, Debug)]
pub struct MergeProblem {
    pub demands: Vec<f64>,
    pub caps: Vec<f64>,
    pub supply: f64,
}

#[derive(Clone, Debug)]
pub struct MergeSolution {
    pub flows: Vec<f64>,
    /// Reduction multiplier; 0 when the merge is demand-bound.
    pub zeta: f64,
    pub supply_bound: bool,
}

impl MergeProblem {
    pub fn solve(&self) -> MergeSolution {
        let n = self.demands.len();
        assert_eq!(self.caps.len(), n, "demand/cap length mismatch");
        debug_assert!(self.demands.iter().all(|&d| d >= 0.0));
        debug_assert!(self.caps.iter().all(|&c| c > 0.0));

        let attainable: Vec<f64> =
            (0..n).map(|i| self.demands[i].min(self.caps[i])).collect();
        let total: f64 = attainable.iter().sum();
        if total <= self.supply {
            return MergeSolution { flows: attainable, zeta: 0.0, supply_bound: false };
        }

        // An infinite cap cannot be reduced by the multiplier; treat it as a
        // cap equal to the demand, i.e. proportional rationing.
        let caps: Vec<f64> = (0..n)
            .map(|i| {
                if self.caps[i].is_infinite() {
                    if self.demands[i] > 0.0 { self.demands[i] } else { 1.0 }
                } else {
                    self.caps[i]
                }
            })
            .collect();

        // Cut value of inflow i: the zeta at which it switches from
        // demand-bound to cap-bound. Cap-bound inflows have cut 0.
        let cut = |i: usize| -> f64 { (1.0 - self.demands[i] / caps[i]).max(0.0) };
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| cut(a).partial_cmp(&cut(b)).unwrap());

        // Sweep segments between consecutive cuts. On a segment, inflows
        // with larger cuts contribute their demand and the rest (1-zeta)c.
        let mut demand_side: f64 = self.demands.iter().sum();
        let mut cap_side = 0.0;
        // Inflows cap-bound already at zeta = 0.
        let mut idx = 0;
        let mut lo = 0.0;
        let zeta;
        loop {
            while idx < n && cut(order[idx]) <= lo {
                let i = order[idx];
                demand_side -= self.demands[i];
                cap_side += caps[i];
                idx += 1;
            }
            let hi = if idx < n { cut(order[idx]) } else { 1.0 };
            // Xi(z) = demand_side + (1 - z) * cap_side on [lo, hi].
            let xi_hi = demand_side + (1.0 - hi) * cap_side;
            if xi_hi <= self.supply || idx == n {
                zeta = if cap_side > 0.0 {
                    (1.0 - (self.supply - demand_side) / cap_side).clamp(lo, hi)
                } else {
                    hi
                };
                break;
            }
            lo = hi;
        }

        let flows: Vec<f64> = (0..n)
            .map(|i| self.demands[i].min(caps[i] * (1.0 - zeta)).max(0.0))
            .collect();
        MergeSolution { flows, zeta, supply_bound: true }
    }
}
