//! Time-invariant tapped-delay-line channels.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tfsignal::{cis, grid_steps, ComplexSignal, OfdmPulses, TFShift, tf_shift};

/// Grid points per `1/τ_d` when searching for `sup|ĥ|`.
pub const SUP_GRID_DENSITY: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tap {
    pub delay_s: f64,
    pub power: f64,
}

/// Discrete power delay profile `p_h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Tap>", into = "Vec<Tap>")]
pub struct PowerDelayProfile {
    taps: Vec<Tap>,
}

impl TryFrom<Vec<Tap>> for PowerDelayProfile {
    type Error = Error;
    fn try_from(taps: Vec<Tap>) -> Result<Self> {
        Self::new(taps)
    }
}

impl From<PowerDelayProfile> for Vec<Tap> {
    fn from(p: PowerDelayProfile) -> Self {
        p.taps
    }
}

impl PowerDelayProfile {
    pub fn new(taps: Vec<Tap>) -> Result<Self> {
        if taps.is_empty() {
            return Err(Error::InvalidParameter("power delay profile has no taps".into()));
        }
        for t in &taps {
            if !(t.delay_s >= 0.0 && t.delay_s.is_finite()) || !(t.power >= 0.0 && t.power.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "tap needs delay ≥ 0 and power ≥ 0, got {t:?}"
                )));
            }
        }
        if taps.iter().map(|t| t.power).sum::<f64>() <= 0.0 {
            return Err(Error::InvalidParameter("power delay profile has zero total power".into()));
        }
        Ok(Self { taps })
    }

    /// Two taps at `{0, T_cp/2}` with powers `{0.8, 0.2}`.
    pub fn default_for(pulses: &OfdmPulses) -> Self {
        let half = (pulses.ncp() / 2) as f64 * pulses.dt();
        Self::new(vec![Tap { delay_s: 0.0, power: 0.8 }, Tap { delay_s: half, power: 0.2 }]).unwrap()
    }

    pub fn taps(&self) -> &[Tap] {
        &self.taps
    }

    /// `‖p_h‖₁`.
    pub fn total_power(&self) -> f64 {
        self.taps.iter().map(|t| t.power).sum()
    }

    pub fn tau_d(&self) -> f64 {
        self.taps.iter().map(|t| t.delay_s).fold(0.0, f64::max)
    }

    /// `Σ_j p_j·f(τ_j)`.
    pub fn weighted_sum(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.taps.iter().map(|t| t.power * f(t.delay_s)).sum()
    }
}

/// One channel realization `h = Σ_j h_j δ(t − τ_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    taps: Vec<(f64, Complex64)>,
}

impl ChannelRealization {
    pub fn new(taps: Vec<(f64, Complex64)>) -> Result<Self> {
        if taps.is_empty() {
            return Err(Error::InvalidParameter("channel has no taps".into()));
        }
        if let Some((d, _)) = taps.iter().find(|(d, _)| !(*d >= 0.0 && d.is_finite())) {
            return Err(Error::InvalidParameter(format!("channel must be causal, got delay {d}")));
        }
        Ok(Self { taps })
    }

    pub fn identity() -> Self {
        Self { taps: vec![(0.0, Complex64::new(1.0, 0.0))] }
    }

    pub fn taps(&self) -> &[(f64, Complex64)] {
        &self.taps
    }

    pub fn tau_d(&self) -> f64 {
        self.taps.iter().map(|t| t.0).fold(0.0, f64::max)
    }

    /// `‖h‖₂² = Σ|h_j|²`.
    pub fn energy(&self) -> f64 {
        self.taps.iter().map(|t| t.1.norm_sqr()).sum()
    }

    /// `‖h‖₁ = Σ|h_j|`, an exact upper bound on `sup|ĥ|`.
    pub fn l1_norm(&self) -> f64 {
        self.taps.iter().map(|t| t.1.norm()).sum()
    }

    /// `ĥ(f) = Σ_j h_j e^{−i2πfτ_j}`.
    pub fn freq_response(&self, f: f64) -> Complex64 {
        self.taps.iter().map(|(d, h)| h * cis(-2.0 * PI * f * d)).sum()
    }

    /// `(ℋs)(t) = Σ_j h_j s(t − τ_j)`.
    pub fn apply(&self, s: &ComplexSignal) -> Result<ComplexSignal> {
        self.superpose(s, 1.0, false)
    }

    /// `(ℋ*s)(t) = Σ_j conj(h_j) s(t + τ_j)`.
    pub fn adjoint(&self, s: &ComplexSignal) -> Result<ComplexSignal> {
        self.superpose(s, -1.0, true)
    }

    fn superpose(&self, s: &ComplexSignal, sign: f64, conj: bool) -> Result<ComplexSignal> {
        let mut out: Option<ComplexSignal> = None;
        for (d, h) in &self.taps {
            grid_steps(*d, s.dt()).ok_or(Error::OffGrid { tau: *d, dt: s.dt() })?;
            let c = if conj { h.conj() } else { *h };
            let term = tf_shift(s, TFShift::new(sign * d, 0.0))?.scaled(c);
            out = Some(match out {
                None => term,
                Some(acc) => acc.add(&term)?,
            });
        }
        Ok(out.expect("at least one tap"))
    }

    /// Largest `|ĥ|²` on a grid of `SUP_GRID_DENSITY` points per `1/τ_d`
    /// over one period of `ĥ`. May slightly underestimate the supremum.
    pub fn sup_freq_response_sq(&self) -> SupEstimate {
        let upper_exact = self.l1_norm().powi(2);
        let tau_d = self.tau_d();
        let Some(base) = common_delay_step(&self.taps) else {
            return SupEstimate { grid_max: upper_exact, upper: upper_exact, on_grid: false };
        };
        if tau_d == 0.0 {
            let v = self.freq_response(0.0).norm_sqr();
            return SupEstimate { grid_max: v, upper: v, on_grid: true };
        }
        let n = ((SUP_GRID_DENSITY as f64 * tau_d / base).ceil() as usize).max(SUP_GRID_DENSITY);
        let df = 1.0 / (base * n as f64);
        let grid_max = (0..n).map(|i| self.freq_response(i as f64 * df).norm_sqr()).fold(0.0, f64::max);
        // |dĥ/df| ≤ 2π·τ_d·‖h‖₁
        let slack = PI * tau_d * self.l1_norm() * df;
        let upper = (grid_max.sqrt() + slack).powi(2).min(upper_exact);
        SupEstimate { grid_max, upper, on_grid: true }
    }
}

/// Grid search result for `‖ĥ‖²_∞`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupEstimate {
    /// Largest sampled value (an underestimate of the supremum).
    pub grid_max: f64,
    /// Guaranteed upper bound from the Lipschitz constant of `ĥ`.
    pub upper: f64,
    /// False when no common delay step was found and `‖h‖₁²` is reported.
    pub on_grid: bool,
}

/// Largest `b` with every delay an integer multiple of `b` (up to 1/1024 of the smallest gap).
fn common_delay_step(taps: &[(f64, Complex64)]) -> Option<f64> {
    let positive: Vec<f64> = taps.iter().map(|t| t.0).filter(|d| *d > 0.0).collect();
    let Some(min) = positive.iter().copied().reduce(f64::min) else {
        return Some(1.0);
    };
    (1..=1024).map(|k| min / k as f64).find(|b| {
        positive.iter().all(|d| {
            let r = d / b;
            (r - r.round()).abs() <= 1e-9 * r.max(1.0)
        })
    })
}

/// Independent circularly-symmetric complex Gaussian gains with variances `p_j`.
pub fn draw_channel<R: Rng + ?Sized>(pdp: &PowerDelayProfile, rng: &mut R) -> ChannelRealization {
    let taps = pdp
        .taps()
        .iter()
        .map(|t| {
            let s = (t.power / 2.0).sqrt();
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            (t.delay_s, Complex64::new(s * re, s * im))
        })
        .collect();
    ChannelRealization { taps }
}

/// `min(‖ĥ‖²_∞, J·‖h‖₂²)`; the second term is the tap-sum form of `τ_d‖h‖₂²`.
pub fn beta_bound_general(h: &ChannelRealization) -> f64 {
    let sup = h.sup_freq_response_sq().grid_max;
    sup.min(h.taps().len() as f64 * h.energy())
}

/// `‖ℋ*g_kl‖₂² + 4πτ_d|ν|·‖ĥ‖²_∞·(1 + πτ_d|ν|)`.
pub fn beta_bound_freq_offset(h: &ChannelRealization, g_kl: &ComplexSignal, nu: f64) -> Result<f64> {
    let base = h.adjoint(g_kl)?.energy();
    let tn = h.tau_d() * nu.abs();
    Ok(base + 4.0 * PI * tn * h.sup_freq_response_sq().grid_max * (1.0 + PI * tn))
}
