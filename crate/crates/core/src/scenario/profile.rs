//! Inflow profile shapes and their discretisation to per-step rates.

use serde::{Deserialize, Serialize};

/// Shape of an inflow profile over the departure window. Rates are
/// discretised on the simulation grid and rescaled so that the midpoint-rule
/// integral equals the entry total exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InflowProfile {
    /// Ramp 0 -> peak on [t0,t1], flat on [t1,t2], peak -> 0 on [t2,t3].
    Trapezoid { window: [f64; 4] },
    /// Constant rate on [t0,t1].
    Uniform { window: [f64; 2] },
    /// Explicit per-step rates on the simulation grid (veh/s). The rate sum
    /// times dt must equal the entry total.
    Sampled { rates: Vec<f64> },
}

impl InflowProfile {
    pub fn check(&self, horizon: f64, findings: &mut Vec<String>, loc: &str) {
        match self {
            InflowProfile::Trapezoid { window: [t0, t1, t2, t3] } => {
                if !(t0 < t1 && t1 <= t2 && t2 < t3) {
                    findings.push(format!(
                        "{loc}: trapezoid window must satisfy t0 < t1 <= t2 < t3"
                    ));
                }
                if *t3 > horizon + 1e-9 {
                    findings.push(format!("{loc}: trapezoid window ends after horizon T"));
                }
            }
            InflowProfile::Uniform { window: [t0, t1] } => {
                if !(t0 < t1) {
                    findings.push(format!("{loc}: uniform window is degenerate"));
                }
                if *t1 > horizon + 1e-9 {
                    findings.push(format!("{loc}: uniform window ends after horizon T"));
                }
            }
            InflowProfile::Sampled { rates } => {
                if rates.iter().any(|r| !r.is_finite()) {
                    findings.push(format!("{loc}: non-finite sampled rate"));
                }
            }
        }
    }

    /// Unit-peak shape value at clock time t. Sampled profiles are already
    /// on the grid and are returned verbatim by `rates`.
    fn shape(&self, t: f64) -> f64 {
        match *self {
            InflowProfile::Sampled { .. } => unreachable!("sampled profiles bypass shape()"),
            InflowProfile::Trapezoid { window: [t0, t1, t2, t3] } => {
                if t <= t0 || t >= t3 {
                    0.0
                } else if t < t1 {
                    (t - t0) / (t1 - t0)
                } else if t <= t2 {
                    1.0
                } else {
                    (t3 - t) / (t3 - t2)
                }
            }
            InflowProfile::Uniform { window: [t0, t1] } => {
                if t >= t0 && t < t1 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Per-step rates over `steps` steps of length `dt`, sampled at step
    /// midpoints and rescaled so the rate sum times `dt` equals `total`.
    pub fn rates(&self, total: f64, dt: f64, steps: usize) -> Vec<f64> {
        if let InflowProfile::Sampled { rates } = self {
            let mut out = rates.clone();
            out.resize(steps, 0.0);
            return out;
        }
        let mut rates: Vec<f64> = (0..steps)
            .map(|k| self.shape((k as f64 + 0.5) * dt))
            .collect();
        let mass: f64 = rates.iter().sum::<f64>() * dt;
        if total == 0.0 || mass == 0.0 {
            return vec![0.0; steps];
        }
        let scale = total / mass;
        for r in &mut rates {
            *r *= scale;
        }
        rates
    }
}

/// Builds a trapezoidal profile carrying `total` vehicles over the window.
/// Degenerate ramps (t0 == t1, t2 == t3) yield a rectangle.
pub fn trapezoid_profile(total: f64, window: [f64; 4]) -> Result<InflowProfile, String> {
    let [t0, t1, t2, t3] = window;
    if !(t0 <= t1 && t1 <= t2 && t2 <= t3) || t3 <= t0 {
        return Err(format!("degenerate trapezoid window {window:?}"));
    }
    let area = (t3 - t0) + (t2 - t1);
    if area <= 0.0 {
        return Err(format!("trapezoid window {window:?} has zero area"));
    }
    let _ = total;
    if t0 == t1 && t2 == t3 {
        Ok(InflowProfile::Uniform { window: [t0, t2] })
    } else {
        // Nudge exact-zero ramps so the shape stays well defined.
        let eps = 1e-9 * (t3 - t0);
        let t1 = if t1 == t0 { t0 + eps } else { t1 };
        let t2 = if t2 == t3 { t3 - eps } else { t2 };
        Ok(InflowProfile::Trapezoid { window: [t0, t1, t2, t3] })
    }
}

/// Peak rate of a trapezoid carrying `total` vehicles (continuous-time).
pub fn trapezoid_peak_rate(total: f64, window: [f64; 4]) -> f64 {
    let [t0, t1, t2, t3] = window;
    2.0 * total / ((t3 - t0) + (t2 - t1))
}
