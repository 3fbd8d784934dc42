//! Piecewise-linear demand/supply curves: triangular region MFDs and
//! origin-buffer ramps.

use serde::{Deserialize, Serialize};

/// Triangular MFD of a region, parameterised by critical accumulation,
/// jam accumulation and capacity (veh/s). `trip_length` (m) only enters
/// speed reporting, never the dynamics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MfdCurve {
    pub critical_accumulation: f64,
    pub jam_accumulation: f64,
    pub capacity: f64,
    pub trip_length: f64,
}

impl MfdCurve {
    /// Builds the curve from a free-flow speed (m/s), trip length (m) and
    /// the two accumulation thresholds, so that capacity = v_f * n_c / L.
    pub fn from_speed(free_flow_speed: f64, trip_length: f64, n_c: f64, n_j: f64) -> Self {
        MfdCurve {
            critical_accumulation: n_c,
            jam_accumulation: n_j,
            capacity: free_flow_speed * n_c / trip_length,
            trip_length,
        }
    }

    /// Outflow demand Delta(N): linear ramp up to capacity at n_c, then flat.
    pub fn demand(&self, n: f64) -> f64 {
        assert!(n >= 0.0, "negative accumulation {n}");
        self.capacity * (n / self.critical_accumulation).min(1.0)
    }

    /// Slope of the demand curve at accumulation `n`.
    pub fn demand_slope(&self, n: f64) -> f64 {
        if n < self.critical_accumulation {
            self.capacity / self.critical_accumulation
        } else {
            0.0
        }
    }

    /// Inflow supply Sigma(N): capacity up to n_c, linear decay to zero at n_j.
    pub fn supply(&self, n: f64) -> f64 {
        assert!(n >= 0.0, "negative accumulation {n}");
        if n <= self.critical_accumulation {
            self.capacity
        } else if n >= self.jam_accumulation {
            0.0
        } else {
            self.capacity * (self.jam_accumulation - n)
                / (self.jam_accumulation - self.critical_accumulation)
        }
    }

    /// Slope of the supply curve at accumulation `n` (non-positive).
    pub fn supply_slope(&self, n: f64) -> f64 {
        if n <= self.critical_accumulation || n >= self.jam_accumulation {
            0.0
        } else {
            -self.capacity / (self.jam_accumulation - self.critical_accumulation)
        }
    }

    pub fn free_flow_speed(&self) -> f64 {
        self.capacity * self.trip_length / self.critical_accumulation
    }

    /// Mean speed implied by the triangular MFD at accumulation `n`.
    pub fn speed(&self, n: f64) -> f64 {
        if n <= self.critical_accumulation {
            self.free_flow_speed()
        } else {
            self.supply(n) * self.trip_length / n
        }
    }

    /// Free-flow traversal time 1 / Delta'(0).
    pub fn free_flow_time(&self) -> f64 {
        self.critical_accumulation / self.capacity
    }

    pub fn check(&self, name: &str, findings: &mut Vec<String>) {
        if !(self.critical_accumulation > 0.0
            && self.jam_accumulation > self.critical_accumulation)
        {
            findings.push(format!(
                "mfd {name}: requires 0 < n_c < n_j, got n_c={}, n_j={}",
                self.critical_accumulation, self.jam_accumulation
            ));
        }
        if !(self.capacity > 0.0) {
            findings.push(format!("mfd {name}: capacity must be positive"));
        }
        if !(self.trip_length > 0.0) {
            findings.push(format!("mfd {name}: trip_length must be positive"));
        }
    }
}

/// Origin buffer demand ramp: Q_Ox saturation above the ramp threshold.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OriginBuffer {
    pub ramp_threshold: f64,
    pub max_outflow: f64,
}

impl OriginBuffer {
    pub fn demand(&self, n: f64) -> f64 {
        assert!(n >= 0.0, "negative buffer accumulation {n}");
        if n >= self.ramp_threshold {
            self.max_outflow
        } else {
            self.max_outflow * n / self.ramp_threshold
        }
    }

    pub fn demand_slope(&self, n: f64) -> f64 {
        if n < self.ramp_threshold {
            self.max_outflow / self.ramp_threshold
        } else {
            0.0
        }
    }

    pub fn check(&self, name: &str, findings: &mut Vec<String>) {
        if !(self.max_outflow > 0.0) {
            findings.push(format!("buffer {name}: max_outflow must be positive"));
        }
        if !(self.ramp_threshold > 0.0) {
            findings.push(format!("buffer {name}: ramp_threshold must be positive"));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table1_r5() -> MfdCurve {
        // v_f = 10 m/s, L = 10 km, n_c = 3000, n_j = 12000 => Q_max = 3.0 veh/s
        MfdCurve::from_speed(10.0, 10_000.0, 3000.0, 12_000.0)
    }

    #[test]
    fn demand_triangular() {
        let c = table1_r5();
        assert_eq!(c.capacity, 3.0);
        assert_eq!(c.demand(0.0), 0.0);
        assert_eq!(c.demand(3000.0), 3.0);
        assert_eq!(c.demand(1500.0), 1.5);
        assert_eq!(c.demand(9000.0), 3.0);
    }

    #[test]
    fn supply_triangular() {
        let c = table1_r5();
        assert_eq!(c.supply(0.0), 3.0);
        assert_eq!(c.supply(12_000.0), 0.0);
        assert_eq!(c.supply(7500.0), 1.5);
        assert_eq!(c.supply(20_000.0), 0.0);
    }

    #[test]
    fn curves_cross_at_critical() {
        let c = table1_r5();
        for n in [0.0, 100.0, 3000.0, 5000.0, 11_999.0] {
            assert!(c.demand(n) <= c.capacity + 1e-12);
            assert!(c.supply(n) <= c.capacity + 1e-12);
        }
        assert_eq!(c.demand(3000.0), c.supply(3000.0));
    }

    #[test]
    #[should_panic(expected = "negative accumulation")]
    fn demand_rejects_negative() {
        table1_r5().demand(-1.0);
    }

    #[test]
    fn buffer_ramp() {
        let b = OriginBuffer { ramp_threshold: 100.0, max_outflow: 10.0 };
        assert_eq!(b.demand(0.0), 0.0);
        assert_eq!(b.demand(100.0), 10.0);
        assert_eq!(b.demand(25.0), 2.5);
        assert_eq!(b.demand(500.0), 10.0);
    }

    #[test]
    fn speed_at_critical_is_free_flow() {
        let c = table1_r5();
        assert!((c.speed(3000.0) - 10.0).abs() < 1e-12);
        assert!((c.speed(100.0) - 10.0).abs() < 1e-12);
        assert!(c.speed(9000.0) < 10.0);
    }
}
