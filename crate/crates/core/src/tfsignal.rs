//! Sampled complex signals, time–frequency shifts and the cp-OFDM pulse pair.
//!
//! A [`ComplexSignal`] stores samples of a continuous-time function on the
//! uniform grid `t_i = t0 + i·dt`. Integrals are Riemann sums over that grid.
//! The pulse constructors place samples at cell midpoints, so a rectangle on
//! `[a, b)` with `(b - a) / dt = n` is represented by exactly `n` samples and
//! inner products of rectangles reproduce their continuous values up to the
//! `O(dt²)` midpoint error.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Tolerance (in units of `dt`) for deciding that a time lies on the grid.
pub const GRID_TOL: f64 = 1e-6;

#[inline]
pub(crate) fn cis(phase: f64) -> Complex64 {
    Complex64::from_polar(1.0, phase)
}

/// Rounds `x / dt` to an integer if it lies within [`GRID_TOL`] of one.
pub fn grid_steps(x: f64, dt: f64) -> Option<i64> {
    let r = x / dt;
    let k = r.round();
    ((r - k).abs() <= GRID_TOL).then_some(k as i64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSignal {
    samples: Vec<Complex64>,
    dt: f64,
    t0: f64,
}

impl ComplexSignal {
    pub fn new(samples: Vec<Complex64>, dt: f64, t0: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("sample interval must be positive, got {dt}")));
        }
        if samples.is_empty() {
            return Err(Error::InvalidParameter("signal needs at least one sample".into()));
        }
        if !t0.is_finite() {
            return Err(Error::InvalidParameter("time origin must be finite".into()));
        }
        Ok(Self { samples, dt, t0 })
    }

    pub fn zeros(len: usize, dt: f64, t0: f64) -> Result<Self> {
        Self::new(vec![Complex64::new(0.0, 0.0); len], dt, t0)
    }

    /// Samples `f` at `t0 + i·dt` for `i < len`.
    pub fn from_fn(len: usize, dt: f64, t0: f64, f: impl Fn(f64) -> Complex64) -> Result<Self> {
        let samples = (0..len).map(|i| f(t0 + i as f64 * dt)).collect();
        Self::new(samples, dt, t0)
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [Complex64] {
        &mut self.samples
    }

    pub fn into_samples(self) -> Vec<Complex64> {
        self.samples
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    /// `Σ|x_i|²·dt`.
    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.dt
    }

    pub fn norm(&self) -> f64 {
        self.energy().sqrt()
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        Self {
            samples: self.samples.iter().map(|z| z * c).collect(),
            dt: self.dt,
            t0: self.t0,
        }
    }

    /// Rescales to unit energy. A zero signal is returned unchanged.
    pub fn normalized(&self) -> Self {
        let n = self.norm();
        if n == 0.0 {
            return self.clone();
        }
        self.scaled(Complex64::new(1.0 / n, 0.0))
    }

    pub fn conj(&self) -> Self {
        Self {
            samples: self.samples.iter().map(|z| z.conj()).collect(),
            dt: self.dt,
            t0: self.t0,
        }
    }

    /// Index offset of `other`'s first sample on this signal's grid.
    pub fn offset_of(&self, other: &ComplexSignal) -> Result<i64> {
        self.check_dt(other)?;
        grid_steps(other.t0 - self.t0, self.dt).ok_or(Error::GridMisaligned(self.t0, other.t0))
    }

    fn check_dt(&self, other: &ComplexSignal) -> Result<()> {
        if (self.dt - other.dt).abs() > 1e-12 * self.dt {
            return Err(Error::SampleIntervalMismatch(self.dt, other.dt));
        }
        Ok(())
    }

    /// Sum of two signals on the union of their (aligned) grids.
    pub fn add(&self, other: &ComplexSignal) -> Result<Self> {
        let off = self.offset_of(other)?;
        let start = off.min(0);
        let end = (self.len() as i64).max(off + other.len() as i64);
        let mut out = vec![Complex64::new(0.0, 0.0); (end - start) as usize];
        for (i, z) in self.samples.iter().enumerate() {
            out[(i as i64 - start) as usize] += z;
        }
        for (i, z) in other.samples.iter().enumerate() {
            out[(i as i64 + off - start) as usize] += z;
        }
        Self::new(out, self.dt, self.t0 + start as f64 * self.dt)
    }

    /// Pointwise product with `m(t)`.
    pub fn modulate(&self, m: impl Fn(f64) -> Complex64) -> Self {
        let samples = self.samples.iter().enumerate().map(|(i, z)| z * m(self.time(i))).collect();
        Self { samples, dt: self.dt, t0: self.t0 }
    }

    /// Sample value at grid time `t`, zero outside the support.
    pub fn value_at(&self, t: f64) -> Result<Complex64> {
        let k = grid_steps(t - self.t0, self.dt).ok_or(Error::GridMisaligned(self.t0, t))?;
        Ok(usize::try_from(k)
            .ok()
            .and_then(|k| self.samples.get(k).copied())
            .unwrap_or_default())
    }
}

/// A time–frequency shift `(S_{τ,ν} f)(t) = f(t − τ)·e^{i2πνt}`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TFShift {
    pub tau: f64,
    pub nu: f64,
}

impl TFShift {
    pub fn new(tau: f64, nu: f64) -> Self {
        Self { tau, nu }
    }

    /// The adjoint `S*_{τ,ν} = e^{−i2πτν} S_{−τ,−ν}` as a phase and a shift.
    pub fn adjoint(self) -> (Complex64, TFShift) {
        (cis(-2.0 * PI * self.tau * self.nu), TFShift::new(-self.tau, -self.nu))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ShiftMode {
    /// Reject time shifts that are not a multiple of `dt`.
    #[default]
    OnGrid,
    /// Band-limited fractional delay by a frequency-domain phase ramp.
    Interpolate,
}

/// Applies `S_{τ,ν}` with an on-grid time shift.
pub fn tf_shift(f: &ComplexSignal, s: TFShift) -> Result<ComplexSignal> {
    tf_shift_with(f, s, ShiftMode::OnGrid)
}

pub fn tf_shift_with(f: &ComplexSignal, s: TFShift, mode: ShiftMode) -> Result<ComplexSignal> {
    let delayed = match (grid_steps(s.tau, f.dt), mode) {
        (Some(k), _) => ComplexSignal {
            samples: f.samples.clone(),
            dt: f.dt,
            t0: f.t0 + k as f64 * f.dt,
        },
        (None, ShiftMode::OnGrid) => return Err(Error::OffGrid { tau: s.tau, dt: f.dt }),
        (None, ShiftMode::Interpolate) => fractional_delay(f, s.tau),
    };
    if s.nu == 0.0 {
        return Ok(delayed);
    }
    Ok(delayed.modulate(|t| cis(2.0 * PI * s.nu * t)))
}

/// Delays `f` by an off-grid `tau`: integer part moves the origin, the
/// fractional part is a unit-modulus phase ramp on a zero-padded DFT.
fn fractional_delay(f: &ComplexSignal, tau: f64) -> ComplexSignal {
    let steps = tau / f.dt;
    let whole = steps.floor();
    let frac = steps - whole;
    let pad = f.len().max(16);
    let n = f.len() + 2 * pad;
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    buf[pad..pad + f.len()].copy_from_slice(&f.samples);

    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut buf);
    for (k, z) in buf.iter_mut().enumerate() {
        let freq = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
        *z *= cis(-2.0 * PI * freq * frac / n as f64);
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let scale = 1.0 / n as f64;
    buf.iter_mut().for_each(|z| *z *= scale);

    ComplexSignal {
        samples: buf,
        dt: f.dt,
        t0: f.t0 + (whole - pad as f64) * f.dt,
    }
}

/// `⟨f, g⟩ = Σ conj(f_i)·g_i·dt` over the common support.
pub fn inner(f: &ComplexSignal, g: &ComplexSignal) -> Result<Complex64> {
    let off = f.offset_of(g)?;
    let lo = off.max(0);
    let hi = (f.len() as i64).min(off + g.len() as i64);
    let mut acc = Complex64::new(0.0, 0.0);
    for i in lo..hi {
        acc += f.samples[i as usize].conj() * g.samples[(i - off) as usize];
    }
    Ok(acc * f.dt)
}

/// `A_{gγ}(τ, ν) = ⟨g, S_{τ,ν} γ⟩`.
pub fn cross_ambiguity(g: &ComplexSignal, gamma: &ComplexSignal, tau: f64, nu: f64) -> Result<Complex64> {
    inner(g, &tf_shift(gamma, TFShift::new(tau, nu))?)
}

/// cp-OFDM timing: useful length, cyclic prefix, samples per useful length
/// and the time origin convention `t0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OfdmPulses {
    tu: f64,
    tcp: f64,
    ns: usize,
    t0: f64,
}

impl OfdmPulses {
    pub fn new(tu: f64, tcp: f64, ns: usize) -> Result<Self> {
        if !(tu > 0.0 && tu.is_finite()) {
            return Err(Error::InvalidParameter(format!("useful symbol length must be positive, got {tu}")));
        }
        if !(tcp >= 0.0 && tcp.is_finite()) {
            return Err(Error::InvalidParameter(format!("cyclic prefix must be non-negative, got {tcp}")));
        }
        if ns < 8 {
            return Err(Error::InvalidParameter(format!("need at least 8 samples per useful length, got {ns}")));
        }
        let dt = tu / ns as f64;
        if grid_steps(tcp, dt).is_none() {
            return Err(Error::OffGrid { tau: tcp, dt });
        }
        Ok(Self { tu, tcp, ns, t0: 0.0 })
    }

    /// Pulses with `Tu = 1` and `ε = ns / (ns + ncp)`.
    pub fn with_eps(eps: f64, ns: usize) -> Result<Self> {
        if !(eps > 0.0 && eps <= 1.0) {
            return Err(Error::Domain { value: eps, domain: "(0, 1]" });
        }
        let ncp = (ns as f64 * (1.0 / eps - 1.0)).round();
        Self::new(1.0, ncp / ns as f64, ns)
    }

    pub fn with_t0(mut self, t0: f64) -> Self {
        self.t0 = t0;
        self
    }

    pub fn tu(&self) -> f64 {
        self.tu
    }
    pub fn tcp(&self) -> f64 {
        self.tcp
    }
    pub fn ns(&self) -> usize {
        self.ns
    }
    pub fn t0(&self) -> f64 {
        self.t0
    }
    pub fn dt(&self) -> f64 {
        self.tu / self.ns as f64
    }
    pub fn ncp(&self) -> usize {
        (self.tcp / self.dt()).round() as usize
    }
    /// Symbol period `T = Tu + Tcp`.
    pub fn period(&self) -> f64 {
        self.tu + self.tcp
    }
    /// Subcarrier spacing `F = 1/Tu`.
    pub fn spacing(&self) -> f64 {
        1.0 / self.tu
    }
    /// Bandwidth efficiency `ε = Tu / (Tu + Tcp)`.
    pub fn eps(&self) -> f64 {
        self.tu / self.period()
    }

    /// Common phase `φ0` of the cross ambiguity at frequency offset `nu`.
    /// Equals `πνTu` for the default origin `t0 = 0`.
    pub fn phi0(&self, nu: f64) -> f64 {
        PI * nu * (self.tu - 2.0 * self.t0)
    }

    /// Transmit pulse `(Tu+Tcp)^{-1/2}·1_{[−Tcp,Tu)}(t + t0)`.
    pub fn gamma(&self) -> ComplexSignal {
        let n = self.ns + self.ncp();
        let dt = self.dt();
        let start = -self.tcp - self.t0 + 0.5 * dt;
        let amp = Complex64::new(1.0, 0.0);
        ComplexSignal { samples: vec![amp; n], dt, t0: start }.normalized()
    }

    /// Receive pulse `Tu^{-1/2}·1_{[0,Tu)}(t + t0)`, which discards the prefix.
    pub fn g(&self) -> ComplexSignal {
        let dt = self.dt();
        let start = -self.t0 + 0.5 * dt;
        let amp = Complex64::new(1.0, 0.0);
        ComplexSignal { samples: vec![amp; self.ns], dt, t0: start }.normalized()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_signal(len: usize, dt: f64, seed: u64) -> ComplexSignal {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let samples = (0..len)
            .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
            .collect();
        ComplexSignal::new(samples, dt, 0.25 * dt).unwrap()
    }

    fn max_diff(a: &ComplexSignal, b: &ComplexSignal) -> f64 {
        let d = a.add(&b.scaled(Complex64::new(-1.0, 0.0))).unwrap();
        d.samples().iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn identity_shift_is_bitwise() {
        let f = random_signal(64, 0.01, 1);
        assert_eq!(tf_shift(&f, TFShift::default()).unwrap(), f);
    }

    #[test]
    fn shift_preserves_energy() {
        let f = random_signal(200, 0.01, 2);
        let s = tf_shift(&f, TFShift::new(17.0 * 0.01, 3.3)).unwrap();
        assert!((s.energy() - f.energy()).abs() <= 1e-12 * f.energy());
    }

    #[test]
    fn composition_rule() {
        let tu = 1.0;
        let dt = tu / 64.0;
        let f = random_signal(100, dt, 3);
        let (a, b, c, d) = (3.0 * dt, 0.7 / tu, 5.0 * dt, 0.3 / tu);
        let lhs = tf_shift(&tf_shift(&f, TFShift::new(c, d)).unwrap(), TFShift::new(a, b)).unwrap();
        let rhs = tf_shift(&f, TFShift::new(a + c, b + d)).unwrap().scaled(cis(-2.0 * PI * a * d));
        assert!(max_diff(&lhs, &rhs) < 1e-10);
    }

    #[test]
    fn adjoint_and_commutation() {
        let dt = 1.0 / 32.0;
        let f = random_signal(80, dt, 4);
        let h = random_signal(90, dt, 5);
        let (a, b, c, d) = (4.0 * dt, 1.3, -7.0 * dt, 0.45);
        // ⟨S_{a,b} f, h⟩ = ⟨f, S*_{a,b} h⟩
        let (ph, inv) = TFShift::new(a, b).adjoint();
        let lhs = inner(&tf_shift(&f, TFShift::new(a, b)).unwrap(), &h).unwrap();
        let rhs = inner(&f, &tf_shift(&h, inv).unwrap().scaled(ph)).unwrap();
        assert!((lhs - rhs).norm() < 1e-10);

        let ab_cd = tf_shift(&tf_shift(&f, TFShift::new(c, d)).unwrap(), TFShift::new(a, b)).unwrap();
        let cd_ab = tf_shift(&tf_shift(&f, TFShift::new(a, b)).unwrap(), TFShift::new(c, d)).unwrap();
        let rhs = cd_ab.scaled(cis(-2.0 * PI * (a * d - b * c)));
        assert!(max_diff(&ab_cd, &rhs) < 1e-10);
    }

    #[test]
    fn off_grid_needs_interpolation() {
        let f = random_signal(32, 0.1, 6);
        assert!(matches!(tf_shift(&f, TFShift::new(0.05, 0.0)), Err(Error::OffGrid { .. })));
        let s = tf_shift_with(&f, TFShift::new(0.05, 0.0), ShiftMode::Interpolate).unwrap();
        assert!((s.energy() - f.energy()).abs() < 1e-10 * f.energy());
    }

    #[test]
    fn interpolated_shift_matches_band_limited_tone() {
        let dt = 1.0 / 64.0;
        let tone = |t: f64| cis(2.0 * PI * 3.0 * t) * (-(t - 2.0).powi(2) * 4.0).exp();
        let f = ComplexSignal::from_fn(256, dt, 0.0, tone).unwrap();
        let tau = 0.37 * dt + 5.0 * dt;
        let s = tf_shift_with(&f, TFShift::new(tau, 0.0), ShiftMode::Interpolate).unwrap();
        for i in 0..s.len() {
            let t = s.time(i);
            if (t - 2.0 - tau).abs() < 1.0 {
                assert!((s.samples()[i] - tone(t - tau)).norm() < 1e-6);
            }
        }
    }

    #[test]
    fn inner_rejects_mismatched_grids() {
        let f = random_signal(8, 0.1, 7);
        let g = random_signal(8, 0.2, 8);
        assert!(matches!(inner(&f, &g), Err(Error::SampleIntervalMismatch(..))));
        let h = ComplexSignal::new(g.samples().to_vec(), 0.1, 0.013).unwrap();
        assert!(matches!(inner(&f, &h), Err(Error::GridMisaligned(..))));
    }

    #[test]
    fn inner_with_self_is_energy() {
        let f = random_signal(50, 0.02, 9);
        let e = inner(&f, &f).unwrap();
        assert!(e.im.abs() < 1e-15 && (e.re - f.energy()).abs() < 1e-14);
    }

    #[test]
    fn ofdm_pulse_construction() {
        let p = OfdmPulses::with_eps(0.8, 1024).unwrap();
        let gamma = p.gamma();
        let g = p.g();
        assert!((gamma.energy() - 1.0).abs() < 1e-10);
        assert!((g.energy() - 1.0).abs() < 1e-10);
        assert!((gamma.len() as f64 * gamma.dt() - 1.25 * p.tu()).abs() < 1e-12);
        let overlap = inner(&g, &gamma).unwrap();
        assert!((overlap.re - 0.8f64.sqrt()).abs() < 1e-12 && overlap.im.abs() < 1e-12);
        assert!((overlap.re - 0.894427).abs() < 1e-6);
    }

    #[test]
    fn no_prefix_pulses_coincide() {
        let p = OfdmPulses::new(1.0, 0.0, 64).unwrap();
        assert!(max_diff(&p.gamma(), &p.g()) < 1e-12);
    }

    #[test]
    fn subcarriers_are_orthogonal() {
        let p = OfdmPulses::with_eps(0.8, 256).unwrap();
        let shifted = tf_shift(&p.gamma(), TFShift::new(0.0, 1.0 / p.tu())).unwrap();
        assert!(inner(&p.g(), &shifted).unwrap().norm() < 1e-10);
        assert!(cross_ambiguity(&p.g(), &p.gamma(), 0.0, 1.0 / p.tu()).unwrap().norm() < 1e-8);
    }

    #[test]
    fn ambiguity_plateau_over_prefix() {
        let p = OfdmPulses::with_eps(0.8, 256).unwrap();
        let (g, gamma) = (p.g(), p.gamma());
        let a0 = cross_ambiguity(&g, &gamma, 0.0, 0.0).unwrap();
        assert_eq!(a0, inner(&g, &gamma).unwrap());
        for j in 0..=p.ncp() {
            let a = cross_ambiguity(&g, &gamma, j as f64 * p.dt(), 0.0).unwrap();
            assert!((a.norm() - 0.8f64.sqrt()).abs() < 1e-12);
        }
        let outside = cross_ambiguity(&g, &gamma, -8.0 * p.dt(), 0.0).unwrap();
        assert!(outside.norm() < 0.8f64.sqrt() - 1e-3);
    }

    #[test]
    fn rejects_bad_pulse_parameters() {
        assert!(OfdmPulses::new(1.0, 0.25, 4).is_err());
        assert!(OfdmPulses::new(1.0, 0.01, 64).is_err());
        assert!(OfdmPulses::new(-1.0, 0.0, 64).is_err());
        assert!(OfdmPulses::with_eps(1.2, 64).is_err());
    }
}
