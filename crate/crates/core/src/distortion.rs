//! Random linear distortions: time-frequency offsets and phase noise.

use std::f64::consts::PI;

use rand::{Rng, RngCore};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tfsignal::{cis, grid_steps, tf_shift, ComplexSignal, TFShift};

/// Distortion operator `𝒮`, as read from configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum DistortionSpec {
    None,
    /// Deterministic shift `S_{d,ν}`.
    Offset { d_s: f64, nu_hz: f64 },
    /// Stationary Gaussian phase with marginal variance `s_phi`. Without a
    /// correlation time the samples are independent; otherwise the path is a
    /// first-order autoregression with `E φ(t)φ(t+τ) = s_phi·e^{−|τ|/corr_time_s}`.
    GaussianPn {
        s_phi: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        corr_time_s: Option<f64>,
    },
    /// Brownian phase with diffusion `s_phidot`, zero at `t_sync = l_sync·T`.
    WienerPn { s_phidot: f64, l_sync: i64 },
}

impl DistortionSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| Err(Error::InvalidParameter(format!("{what} must be finite and ≥ 0, got {v}")));
        match *self {
            Self::None => Ok(()),
            Self::Offset { d_s, nu_hz } if !(d_s.is_finite() && nu_hz.is_finite()) => {
                Err(Error::InvalidParameter(format!("offset must be finite, got d={d_s}, ν={nu_hz}")))
            }
            Self::Offset { .. } => Ok(()),
            Self::GaussianPn { s_phi, .. } if !(s_phi >= 0.0 && s_phi.is_finite()) => bad("s_phi", s_phi),
            Self::GaussianPn { corr_time_s: Some(c), .. } if !(c > 0.0 && c.is_finite()) => {
                Err(Error::InvalidParameter(format!("corr_time_s must be positive, got {c}")))
            }
            Self::GaussianPn { .. } => Ok(()),
            Self::WienerPn { s_phidot, .. } if !(s_phidot >= 0.0 && s_phidot.is_finite()) => bad("s_phidot", s_phidot),
            Self::WienerPn { .. } => Ok(()),
        }
    }

    pub fn is_random(&self) -> bool {
        matches!(self, Self::GaussianPn { .. } | Self::WienerPn { .. })
    }

    /// Draws one realization of `𝒮` on the sample grid `t_start + i·dt`, `i < len`.
    /// `period` is the symbol period `T` that places `t_sync`.
    pub fn realize(
        &self,
        period: f64,
        grid: (f64, f64, usize),
        rng: Option<&mut dyn RngCore>,
    ) -> Result<DistortionRealization> {
        self.validate()?;
        let (t_start, dt, len) = grid;
        match *self {
            Self::None => Ok(DistortionRealization::Identity),
            Self::Offset { d_s, nu_hz } => Ok(DistortionRealization::Offset(TFShift::new(d_s, nu_hz))),
            Self::GaussianPn { s_phi, corr_time_s } => {
                let rng = rng.ok_or(Error::MissingRng("gaussian_pn"))?;
                let phases = match corr_time_s {
                    None => (0..len).map(|_| s_phi.sqrt() * normal(rng)).collect(),
                    Some(tc) => ar1_path(s_phi, (-dt / tc).exp(), len, rng),
                };
                Ok(DistortionRealization::Phase(PhasePath { t0: t_start, dt, phases }))
            }
            Self::WienerPn { s_phidot, l_sync } => {
                let rng = rng.ok_or(Error::MissingRng("wiener_pn"))?;
                let times: Vec<f64> = (0..len).map(|i| t_start + i as f64 * dt).collect();
                let phases = wiener_path(s_phidot, l_sync as f64 * period, &times, rng);
                Ok(DistortionRealization::Phase(PhasePath { t0: t_start, dt, phases }))
            }
        }
    }
}

fn normal(rng: &mut (impl Rng + ?Sized)) -> f64 {
    StandardNormal.sample(rng)
}

fn ar1_path(var: f64, a: f64, len: usize, rng: &mut (impl Rng + ?Sized)) -> Vec<f64> {
    let sd = var.sqrt();
    let innov = (1.0 - a * a).sqrt() * sd;
    let mut out = Vec::with_capacity(len);
    let mut x = sd * normal(rng);
    for _ in 0..len {
        out.push(x);
        x = a * x + innov * normal(rng);
    }
    out
}

/// Brownian path `φ` with `φ(t_sync) = 0` and `Var[φ(t) − φ(s)] = s_phidot·|t − s|`,
/// sampled at `times` (ascending). Runs forward and backward from `t_sync`.
pub fn wiener_path(s_phidot: f64, t_sync: f64, times: &[f64], rng: &mut (impl Rng + ?Sized)) -> Vec<f64> {
    let mut out = vec![0.0; times.len()];
    let split = times.partition_point(|t| *t < t_sync);
    let (mut phi, mut prev) = (0.0, t_sync);
    for i in split..times.len() {
        phi += (s_phidot * (times[i] - prev)).sqrt() * normal(rng);
        out[i] = phi;
        prev = times[i];
    }
    let (mut phi, mut prev) = (0.0, t_sync);
    for i in (0..split).rev() {
        phi += (s_phidot * (prev - times[i])).sqrt() * normal(rng);
        out[i] = phi;
        prev = times[i];
    }
    out
}

/// Phase samples `φ(t0 + i·dt)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePath {
    pub t0: f64,
    pub dt: f64,
    pub phases: Vec<f64>,
}

impl PhasePath {
    fn multiply(&self, f: &ComplexSignal, sign: f64) -> Result<ComplexSignal> {
        if (f.dt() - self.dt).abs() > 1e-12 * self.dt {
            return Err(Error::SampleIntervalMismatch(f.dt(), self.dt));
        }
        let off = grid_steps(f.t0() - self.t0, self.dt).ok_or(Error::GridMisaligned(f.t0(), self.t0))?;
        if off < 0 || off as usize + f.len() > self.phases.len() {
            return Err(Error::InvalidParameter(format!(
                "phase path covers {} samples from t={}, signal needs {} from t={}",
                self.phases.len(),
                self.t0,
                f.len(),
                f.t0()
            )));
        }
        let phases = &self.phases[off as usize..off as usize + f.len()];
        let samples = f.samples().iter().zip(phases).map(|(x, p)| x * cis(sign * p)).collect();
        ComplexSignal::new(samples, f.dt(), f.t0())
    }
}

/// One draw of `𝒮`.
#[derive(Debug, Clone, PartialEq)]
pub enum DistortionRealization {
    Identity,
    Offset(TFShift),
    Phase(PhasePath),
}

impl DistortionRealization {
    /// `𝒮f`.
    pub fn apply(&self, f: &ComplexSignal) -> Result<ComplexSignal> {
        match self {
            Self::Identity => Ok(f.clone()),
            Self::Offset(s) => tf_shift(f, *s),
            Self::Phase(p) => p.multiply(f, 1.0),
        }
    }

    /// `𝒮*f`.
    pub fn adjoint(&self, f: &ComplexSignal) -> Result<ComplexSignal> {
        match self {
            Self::Identity => Ok(f.clone()),
            Self::Offset(s) => {
                let (c, inv) = s.adjoint();
                Ok(tf_shift(f, inv)?.scaled(c))
            }
            Self::Phase(p) => p.multiply(f, -1.0),
        }
    }

    /// `φ` at grid time `t` (phase realizations only).
    pub fn phase_at(&self, t: f64) -> Option<f64> {
        match self {
            Self::Phase(p) => {
                let i = grid_steps(t - p.t0, p.dt)?;
                (i >= 0).then(|| p.phases.get(i as usize).copied()).flatten()
            }
            _ => None,
        }
    }
}

/// Realizes `spec` on `f`'s own grid and applies it.
pub fn apply_distortion(
    spec: &DistortionSpec,
    f: &ComplexSignal,
    period: f64,
    rng: Option<&mut dyn RngCore>,
) -> Result<ComplexSignal> {
    spec.realize(period, (f.t0(), f.dt(), f.len()), rng)?.apply(f)
}

/// `E e^{iφ(t)}`; offsets are deterministic and return 1.
pub fn mean_theta(spec: &DistortionSpec, t: f64, period: f64) -> Result<f64> {
    spec.validate()?;
    match *spec {
        DistortionSpec::None | DistortionSpec::Offset { .. } => Ok(1.0),
        DistortionSpec::GaussianPn { s_phi, .. } => Ok((-s_phi / 2.0).exp()),
        DistortionSpec::WienerPn { s_phidot, l_sync } => {
            let t_sync = l_sync as f64 * period;
            if t < t_sync {
                return Err(Error::BeforeSync { t, t_sync });
            }
            Ok((-s_phidot / 2.0 * (t - t_sync)).exp())
        }
    }
}

/// `C_θ(τ) = e^{−(S_φ̇/2)|τ|}`.
pub fn wiener_autocorr(s_phidot: f64, tau: f64) -> f64 {
    (-s_phidot / 2.0 * tau.abs()).exp()
}

/// Lorentzian `S_θ(ω) = 4S_φ̇/(S_φ̇² + 4(2πω)²)`.
pub fn lorentzian_pds(s_phidot: f64, omega: f64) -> f64 {
    if s_phidot == 0.0 {
        return if omega == 0.0 { f64::INFINITY } else { 0.0 };
    }
    4.0 * s_phidot / (s_phidot * s_phidot + 4.0 * (2.0 * PI * omega).powi(2))
}
