//! Closed-form SINR and interference bounds.
//!
//! All cp-OFDM forms assume the pulses of [`OfdmPulses`] and the Bessel
//! constant `B_ofdm = ε` unless a `bessel` argument is taken.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;

use crate::channel::{ChannelRealization, PowerDelayProfile};
use crate::distortion::DistortionSpec;
use crate::error::{Error, Result};
use crate::stats::sinc;
use crate::tfsignal::{cis, cross_ambiguity, ComplexSignal, OfdmPulses};

/// Arguments below this use series expansions instead of the direct formula.
pub const SMALL_ARG: f64 = 1e-6;

/// Moose's interference constant `1 − 4/π²` as printed (four digits).
pub const MOOSE_CONSTANT: f64 = 0.5947;

/// A lower bound on a signal-to-interference ratio. When the interference
/// bound swamps the signal the bound says nothing and is flagged `vacuous`
/// with `value = +∞`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bound {
    pub value: f64,
    pub vacuous: bool,
}

impl Bound {
    /// `num / denom`, vacuous for `denom ≤ 0`.
    pub fn ratio(num: f64, denom: f64) -> Self {
        if denom > 0.0 {
            Self { value: num / denom, vacuous: false }
        } else {
            Self { value: f64::INFINITY, vacuous: true }
        }
    }

    pub fn db(&self) -> Option<f64> {
        (!self.vacuous).then(|| 10.0 * self.value.log10())
    }

    /// The value, or `None` when vacuous.
    pub fn get(&self) -> Option<f64> {
        (!self.vacuous).then_some(self.value)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundInputs {
    /// `B_γ` (or `B_ofdm`).
    pub bessel: f64,
    pub sigma2: f64,
    /// `|⟨H_kl,kl⟩|²`.
    pub signal_mean_sq: f64,
    /// `⟨|H_kl,kl|²⟩`.
    pub signal_second_moment: f64,
    /// `β_kl` or `‖p_h‖₁`.
    pub beta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundReport {
    pub sinr_lower: Bound,
    #[serde(rename = "SINR_lower")]
    pub sinr_tracked_lower: Bound,
    pub ici_upper: f64,
}

/// `sinr ≥ |⟨H⟩|²/(σ² + Bβ − |⟨H⟩|²)`, `SINR ≥ ⟨|H|²⟩/(σ² + Bβ − ⟨|H|²⟩)`,
/// `I ≤ Bβ − ⟨|H|²⟩`.
pub fn theorem1(inp: &BoundInputs) -> Result<BoundReport> {
    let fields = [
        ("bessel", inp.bessel),
        ("sigma2", inp.sigma2),
        ("signal_mean_sq", inp.signal_mean_sq),
        ("signal_second_moment", inp.signal_second_moment),
        ("beta", inp.beta),
    ];
    if let Some((name, v)) = fields.iter().find(|(_, v)| !(*v >= 0.0 && v.is_finite())) {
        return Err(Error::InvalidParameter(format!("{name} must be finite and ≥ 0, got {v}")));
    }
    if inp.signal_mean_sq > inp.signal_second_moment * (1.0 + 1e-12) {
        return Err(Error::InvalidParameter(format!(
            "|⟨H⟩|² = {} exceeds ⟨|H|²⟩ = {}",
            inp.signal_mean_sq, inp.signal_second_moment
        )));
    }
    let budget = inp.sigma2 + inp.bessel * inp.beta;
    Ok(BoundReport {
        sinr_lower: Bound::ratio(inp.signal_mean_sq, budget - inp.signal_mean_sq),
        sinr_tracked_lower: Bound::ratio(inp.signal_second_moment, budget - inp.signal_second_moment),
        ici_upper: inp.bessel * inp.beta - inp.signal_second_moment,
    })
}

/// Fixed channel: `|m|²/(σ² + Bβ − |m|²)` with `m = ⟨H_kl,kl⟩`.
pub fn corollary_fixed(mean_diagonal: Complex64, sigma2: f64, bessel: f64, beta: f64) -> Bound {
    let s = mean_diagonal.norm_sqr();
    Bound::ratio(s, sigma2 + bessel * beta - s)
}

/// Channel average: `⟨p,|s|²⟩/(σ² + B‖p‖₁ − ⟨p,|s|²⟩)`.
pub fn corollary_average(pskl: f64, sigma2: f64, bessel: f64, total_power: f64) -> Bound {
    Bound::ratio(pskl, sigma2 + bessel * total_power - pskl)
}

/// `⌊τ⌋_cp`: τ for τ ≤ 0, 0 inside the prefix, τ − T_cp beyond it.
pub fn cp_floor(tau: f64, tcp: f64) -> f64 {
    if tau <= 0.0 {
        tau
    } else if tau < tcp {
        0.0
    } else {
        tau - tcp
    }
}

/// `A_{gγ}(τ,ν)` of the cp-OFDM pulse pair, integrated in closed form over
/// the support overlap. Agrees with the magnitude `√ε·|sin(πν(T_u−|⌊τ⌋|))/(πνT_u)|`
/// everywhere and with the phase `φ₀ − πν|⌊τ⌋|` for `⌊τ⌋ ≤ 0`; beyond the
/// prefix the phase is `φ₀ + πν⌊τ⌋`.
pub fn ofdm_ambiguity(p: &OfdmPulses, tau: f64, nu: f64) -> Complex64 {
    let (tu, t0) = (p.tu(), p.t0());
    let c = cp_floor(tau, p.tcp());
    if c.abs() >= tu {
        return Complex64::new(0.0, 0.0);
    }
    // overlap of [−t0, T_u−t0) and [τ−T_cp−t0, τ+T_u−t0), relative to −t0
    let (lo, hi) = (c.max(0.0), tu + c.min(0.0));
    let width = hi - lo;
    let amp = p.eps().sqrt() * width / tu * sinc(PI * nu * width);
    amp * cis(PI * nu * (lo + hi - 2.0 * t0))
}

/// `(sin πx / πx)²`.
pub fn sinc_sq(x: f64) -> f64 {
    sinc(PI * x).powi(2)
}

/// `|A(d,ν)|²/(σ² + B − |A(d,ν)|²)` for the cp-OFDM pair.
pub fn offset_sinr_nochannel_ofdm(p: &OfdmPulses, d: f64, nu: f64, sigma2: f64, bessel: f64) -> Bound {
    let a = ofdm_ambiguity(p, d, nu).norm_sqr();
    Bound::ratio(a, sigma2 + bessel - a)
}

/// `|A(d,ν)|²/(σ² + B − |A(d,ν)|²)` for arbitrary sampled pulses (on-grid `d`).
pub fn offset_sinr_nochannel(
    g: &ComplexSignal,
    gamma: &ComplexSignal,
    d: f64,
    nu: f64,
    sigma2: f64,
    bessel: f64,
) -> Result<Bound> {
    let a = cross_ambiguity(g, gamma, d, nu)?.norm_sqr();
    Ok(Bound::ratio(a, sigma2 + bessel - a))
}

/// Errors unless every path delay plus the timing offset stays inside the prefix.
pub fn check_cp(tcp: f64, tau_d: f64, d: f64) -> Result<()> {
    let tol = 1e-12 * tcp.max(1.0);
    if d < -tol || d + tau_d > tcp + tol {
        return Err(Error::CyclicPrefixViolated { reach: d + tau_d, tcp });
    }
    Ok(())
}

/// Channel average, frequency/timing offset:
/// `sinc²(ν̂)/(σ²/(ε‖p_h‖₁) + 1 − sinc²(ν̂))`, `ν̂ = ν·T_u`.
pub fn offset_sinr_channel_avg(
    p: &OfdmPulses,
    pdp: &PowerDelayProfile,
    d: f64,
    nu_hat: f64,
    sigma2: f64,
) -> Result<Bound> {
    check_cp(p.tcp(), pdp.tau_d(), d)?;
    if !(0.0..1.0).contains(&nu_hat.abs()) {
        return Err(Error::Domain { value: nu_hat, domain: "|ν̂| < 1" });
    }
    let s = sinc_sq(nu_hat);
    Ok(Bound::ratio(s, sigma2 / (p.eps() * pdp.total_power()) + 1.0 - s))
}

/// `snr/(1 + 0.5947·sin²(πν̂)·snr)`, valid for `ν̂ ≤ 1/2`.
pub fn moose_bound(nu_hat: f64, snr: f64) -> Result<f64> {
    if !(nu_hat.abs() <= 0.5) {
        return Err(Error::Domain { value: nu_hat, domain: "|ν̂| ≤ 0.5" });
    }
    Ok(snr / (1.0 + MOOSE_CONSTANT * (PI * nu_hat).sin().powi(2) * snr))
}

/// How the channel enters a phase-noise bound.
#[derive(Debug, Clone, Copy)]
pub enum ChannelView<'a> {
    /// No channel (identity).
    None,
    /// Average over the power delay profile.
    Average(&'a PowerDelayProfile),
    /// A known realization through `ĥ(k/T_u)` and a bound `β_kl`.
    Fixed { h_k: Complex64, beta: f64, tau_d: f64 },
}

impl ChannelView<'_> {
    fn tau_d(&self) -> f64 {
        match self {
            Self::None => 0.0,
            Self::Average(p) => p.tau_d(),
            Self::Fixed { tau_d, .. } => *tau_d,
        }
    }
}

/// Shared cp-OFDM form `|c|²/(K(σ²/ε + b) − |c|²)` of the phase-noise bounds,
/// where `K ≥ 1` is the inverse normalized mean power.
fn pn_ofdm(p_eps: f64, k_factor: f64, sigma2: f64, view: ChannelView<'_>) -> Bound {
    match view {
        ChannelView::None => Bound::ratio(1.0, k_factor * (sigma2 / p_eps + 1.0) - 1.0),
        ChannelView::Average(pdp) => {
            Bound::ratio(1.0, k_factor * (sigma2 / (p_eps * pdp.total_power()) + 1.0) - 1.0)
        }
        ChannelView::Fixed { h_k, beta, .. } => {
            let s = h_k.norm_sqr();
            Bound::ratio(s, k_factor * (sigma2 / p_eps + beta) - s)
        }
    }
}

/// Gaussian phase noise, general pulses without channel:
/// `|⟨g,γ⟩|²/(e^{S_φ}(σ² + B) − |⟨g,γ⟩|²)`.
pub fn gaussian_pn_sinr_general(overlap: Complex64, s_phi: f64, sigma2: f64, bessel: f64) -> Bound {
    let s = overlap.norm_sqr();
    Bound::ratio(s, s_phi.exp() * (sigma2 + bessel) - s)
}

/// Gaussian phase noise, cp-OFDM with `B_ofdm = ε`.
pub fn gaussian_pn_sinr_ofdm(p: &OfdmPulses, s_phi: f64, sigma2: f64, view: ChannelView<'_>) -> Result<Bound> {
    if !(s_phi >= 0.0) {
        return Err(Error::Domain { value: s_phi, domain: "S_φ ≥ 0" });
    }
    check_cp(p.tcp(), view.tau_d(), 0.0)?;
    Ok(pn_ofdm(p.eps(), s_phi.exp(), sigma2, view))
}

/// `ρ²/(4(1 − e^{−ρ/2})²)`, the inverse normalized mean power of Wiener noise
/// over one useful symbol; → 1 as ρ → 0.
pub fn wiener_power_loss(rho: f64) -> f64 {
    let x = rho / 2.0;
    let r = if x < SMALL_ARG { 1.0 + x / 2.0 + x * x / 12.0 } else { x / -(-x).exp_m1() };
    r * r
}

/// `ρ²e^{ρl/ε}/(4(1 − e^{−ρ/2})²)`.
pub fn wiener_factor(rho: f64, l: u32, eps: f64) -> f64 {
    wiener_power_loss(rho) * (rho * l as f64 / eps).exp()
}

/// `⟨g, θ̄₁ S_{τ,0} γ⟩` for cp-OFDM with `ρ = S_φ̇·T_u`; equals
/// `(2√ε/ρ)(1 − e^{−ρ/2})` for τ inside the prefix.
pub fn wiener_overlap(p: &OfdmPulses, rho: f64, tau: f64) -> Result<f64> {
    if !(rho >= 0.0) {
        return Err(Error::Domain { value: rho, domain: "ρ ≥ 0" });
    }
    let tu = p.tu();
    let c = cp_floor(tau, p.tcp());
    if c.abs() >= tu {
        return Ok(0.0);
    }
    let (lo, hi) = (c.max(0.0) - p.t0(), tu + c.min(0.0) - p.t0());
    if lo < 0.0 {
        return Err(Error::Domain { value: lo, domain: "mean phase process defined for t ≥ t_sync" });
    }
    // (1/√(T_u T)) ∫_lo^hi e^{−S t/2} dt, S = ρ/T_u
    let s = rho / tu;
    let integral = if s * (hi - lo) < SMALL_ARG {
        (hi - lo) * (-s * (lo + hi) / 4.0).exp()
    } else {
        2.0 / s * (-s * lo / 2.0).exp() * -(-s * (hi - lo) / 2.0).exp_m1()
    };
    Ok(integral / (tu * p.period()).sqrt())
}

/// Wiener phase noise, cp-OFDM with `B_ofdm = ε`, `l` symbols after the last sync.
pub fn wiener_pn_sinr(p: &OfdmPulses, rho: f64, l: u32, sigma2: f64, view: ChannelView<'_>) -> Result<Bound> {
    if !(rho >= 0.0 && rho.is_finite()) {
        return Err(Error::Domain { value: rho, domain: "ρ ≥ 0" });
    }
    check_cp(p.tcp(), view.tau_d(), 0.0)?;
    Ok(pn_ofdm(p.eps(), wiener_factor(rho, l, p.eps()), sigma2, view))
}

/// `⟨|H_kl,kl|²⟩ = (4ε/ρ²)(ρ − 2 + 2e^{−ρ/2})` under per-subcarrier tracking.
pub fn wiener_second_moment(eps: f64, rho: f64) -> f64 {
    let x = rho / 2.0;
    // (e^{−x} − 1 + x)/x²
    let r = if x < 1e-2 {
        0.5 - x / 6.0 + x * x / 24.0 - x * x * x / 120.0
    } else {
        ((-x).exp_m1() + x) / (x * x)
    };
    2.0 * eps * r
}

/// `theorem1` SINR bound with the tracked second moment, `β = 1`, `B = ε`.
pub fn wiener_tracking_asymptotic(eps: f64, rho: f64, sigma2: f64) -> Result<Bound> {
    if !(rho >= 0.0) {
        return Err(Error::Domain { value: rho, domain: "ρ ≥ 0" });
    }
    let m2 = wiener_second_moment(eps, rho);
    Ok(Bound::ratio(m2, sigma2 + eps - m2))
}

/// `s_kl(τ)`: the mean distortion of the path at delay τ seen by slot (k,l).
pub fn skl(spec: &DistortionSpec, p: &OfdmPulses, k: i64, l: i64, tau: f64) -> Result<Complex64> {
    spec.validate()?;
    match *spec {
        DistortionSpec::None => Ok(ofdm_ambiguity(p, tau, 0.0)),
        DistortionSpec::Offset { d_s, nu_hz } => {
            let phase = 2.0 * PI * (nu_hz * l as f64 * p.period() - d_s * k as f64 * p.spacing());
            Ok(cis(phase) * ofdm_ambiguity(p, tau + d_s, nu_hz))
        }
        DistortionSpec::GaussianPn { s_phi, .. } => Ok((-s_phi / 2.0).exp() * ofdm_ambiguity(p, tau, 0.0)),
        DistortionSpec::WienerPn { s_phidot, l_sync } => {
            if l < l_sync {
                return Err(Error::BeforeSync { t: l as f64 * p.period(), t_sync: l_sync as f64 * p.period() });
            }
            let rho = s_phidot * p.tu();
            let decay = (-rho * (l - l_sync) as f64 / (2.0 * p.eps())).exp();
            Ok(Complex64::new(decay * wiener_overlap(p, rho, tau)?, 0.0))
        }
    }
}

/// `⟨H_kl,kl⟩ = Σ_j h_j e^{−i2πkFτ_j} s_kl(τ_j)`.
pub fn mean_diagonal(
    spec: &DistortionSpec,
    p: &OfdmPulses,
    h: &ChannelRealization,
    k: i64,
    l: i64,
) -> Result<Complex64> {
    h.taps().iter().try_fold(Complex64::new(0.0, 0.0), |acc, (tau, hj)| {
        Ok(acc + hj * cis(-2.0 * PI * k as f64 * p.spacing() * tau) * skl(spec, p, k, l, *tau)?)
    })
}

/// `⟨p_h, |s_kl|²⟩ = Σ_j p_j |s_kl(τ_j)|²`.
pub fn pskl(spec: &DistortionSpec, p: &OfdmPulses, pdp: &PowerDelayProfile, k: i64, l: i64) -> Result<f64> {
    pdp.taps()
        .iter()
        .try_fold(0.0, |acc, t| Ok(acc + t.power * skl(spec, p, k, l, t.delay_s)?.norm_sqr()))
}

/// Channel-averaged `sinr` lower bound for slot `(k, l)` with `B_ofdm = ε`,
/// using the closed form specific to each distortion.
pub fn channel_average_bound(
    spec: &DistortionSpec,
    p: &OfdmPulses,
    pdp: &PowerDelayProfile,
    k: i64,
    l: i64,
    sigma2: f64,
) -> Result<Bound> {
    match *spec {
        DistortionSpec::None => Ok(corollary_average(pskl(spec, p, pdp, k, l)?, sigma2, p.eps(), pdp.total_power())),
        DistortionSpec::Offset { d_s, nu_hz } => offset_sinr_channel_avg(p, pdp, d_s, nu_hz * p.tu(), sigma2),
        DistortionSpec::GaussianPn { s_phi, .. } => gaussian_pn_sinr_ofdm(p, s_phi, sigma2, ChannelView::Average(pdp)),
        DistortionSpec::WienerPn { s_phidot, l_sync } => {
            let lag = u32::try_from(l - l_sync)
                .map_err(|_| Error::BeforeSync { t: l as f64 * p.period(), t_sync: l_sync as f64 * p.period() })?;
            wiener_pn_sinr(p, s_phidot * p.tu(), lag, sigma2, ChannelView::Average(pdp))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::Tap;

    fn p08() -> OfdmPulses {
        OfdmPulses::with_eps(0.8, 64).unwrap()
    }

    #[test]
    fn theorem1_values() {
        let r = theorem1(&BoundInputs {
            bessel: 1.0,
            sigma2: 0.1,
            signal_mean_sq: 0.8,
            signal_second_moment: 0.8,
            beta: 1.0,
        })
        .unwrap();
        assert!((r.sinr_lower.value - 0.8 / 0.3).abs() < 1e-12);
        assert_eq!(r.sinr_lower, r.sinr_tracked_lower);

        let eps = 0.8;
        let r = theorem1(&BoundInputs {
            bessel: eps,
            sigma2: 0.05,
            signal_mean_sq: eps,
            signal_second_moment: eps,
            beta: 1.0,
        })
        .unwrap();
        assert!((r.sinr_lower.value - eps / 0.05).abs() < 1e-9);
        assert_eq!(r.ici_upper, 0.0);

        let v = theorem1(&BoundInputs {
            bessel: 1.0,
            sigma2: 0.0,
            signal_mean_sq: 0.5,
            signal_second_moment: 1.0,
            beta: 1.0,
        })
        .unwrap();
        assert!(v.sinr_tracked_lower.vacuous && v.sinr_tracked_lower.value.is_infinite());
        assert!(!v.sinr_lower.vacuous);
        assert!(theorem1(&BoundInputs { bessel: 1.0, sigma2: 0.1, signal_mean_sq: 1.0, signal_second_moment: 0.5, beta: 1.0 }).is_err());
    }

    #[test]
    fn cp_floor_pieces() {
        assert_eq!(cp_floor(-0.3, 0.25), -0.3);
        assert_eq!(cp_floor(0.1, 0.25), 0.0);
        assert_eq!(cp_floor(0.25, 0.25), 0.0);
        assert!((cp_floor(0.4, 0.25) - 0.15).abs() < 1e-15);
    }

    #[test]
    fn ambiguity_closed_form() {
        let p = p08();
        for tau in [0.01, 0.1, 0.2, 0.249] {
            assert!((ofdm_ambiguity(&p, tau, 0.0) - Complex64::new(0.8f64.sqrt(), 0.0)).norm() < 1e-12);
        }
        assert!(ofdm_ambiguity(&p, 0.0, 1.0).norm() < 1e-15);
        assert!(ofdm_ambiguity(&p, 1.3, 0.2).norm() == 0.0);
        // printed form for ⌊τ⌋ ≤ 0
        for (tau, nu) in [(-0.3, 0.37), (0.1, -1.4), (-0.9, 0.05)] {
            let c = cp_floor(tau, p.tcp());
            let printed = 0.8f64.sqrt() * (PI * nu * (1.0 - c.abs())).sin() / (PI * nu)
                * cis(PI * nu - PI * nu * c.abs());
            assert!((ofdm_ambiguity(&p, tau, nu) - printed).norm() < 1e-12);
        }
        // beyond the prefix only the sign of the ⌊τ⌋ phase term differs
        let (tau, nu) = (0.55, 0.37);
        let c = cp_floor(tau, p.tcp());
        let amp = 0.8f64.sqrt() * (PI * nu * (1.0 - c)).sin() / (PI * nu);
        assert!((ofdm_ambiguity(&p, tau, nu) - amp * cis(PI * nu + PI * nu * c)).norm() < 1e-12);
    }

    #[test]
    fn ambiguity_magnitude_properties() {
        let p = p08();
        for i in 0..41 {
            let tau = -1.3 + i as f64 * 0.065;
            for j in 0..21 {
                let nu = -2.0 + j as f64 * 0.2;
                let a = ofdm_ambiguity(&p, tau, nu);
                assert!(a.norm() <= 0.8f64.sqrt() + 1e-12);
                assert!((a.norm() - ofdm_ambiguity(&p, tau, -nu).norm()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ambiguity_respects_time_origin() {
        let p = p08().with_t0(0.1);
        let tau = 3.0 * p.dt();
        let nu = 0.3;
        let numeric = cross_ambiguity(&p.g(), &p.gamma(), tau, nu).unwrap();
        assert!((ofdm_ambiguity(&p, tau, nu) - numeric).norm() < 2.0 / 64.0);
        assert!((ofdm_ambiguity(&p, 0.0, nu).arg() - p.phi0(nu)).abs() < 1e-12);
    }

    #[test]
    fn offset_bounds_no_channel() {
        let p = p08();
        let b = offset_sinr_nochannel_ofdm(&p, 0.0, 0.0, 0.1, p.eps());
        assert!((b.value - 8.0).abs() < 1e-9);
        let b = offset_sinr_nochannel_ofdm(&p, 0.0, 0.2, 0.0, p.eps());
        assert!((b.value - 7.008982880).abs() < 1e-6);
        let numeric = offset_sinr_nochannel(&p.g(), &p.gamma(), 0.0, 0.2, 0.0, p.eps()).unwrap();
        assert!((numeric.value - b.value).abs() < 1e-2 * b.value);
        let near_one = offset_sinr_nochannel_ofdm(&p, 0.0, 0.999, 0.1, p.eps());
        assert!(near_one.value < 1e-5);
    }

    #[test]
    fn channel_average_offset_bound() {
        let p = p08();
        let pdp = PowerDelayProfile::default_for(&p);
        let sigma2 = 0.1 * p.eps() * pdp.total_power();
        let b = offset_sinr_channel_avg(&p, &pdp, 0.0, 0.0, sigma2).unwrap();
        assert!((b.value - p.eps() * pdp.total_power() / sigma2).abs() < 1e-9);
        let b = offset_sinr_channel_avg(&p, &pdp, 0.0, 0.5, sigma2).unwrap();
        assert!((b.value - 0.5833825).abs() < 1e-6);
        assert!((sinc_sq(0.5) - 0.405285).abs() < 1e-6);

        let late = PowerDelayProfile::new(vec![Tap { delay_s: 0.3, power: 1.0 }]).unwrap();
        assert!(matches!(
            offset_sinr_channel_avg(&p, &late, 0.0, 0.1, 0.1),
            Err(Error::CyclicPrefixViolated { .. })
        ));
        assert!(offset_sinr_channel_avg(&p, &pdp, -0.01, 0.1, 0.1).is_err());
        assert!(offset_sinr_channel_avg(&p, &pdp, 0.125, 0.1, 0.1).is_ok());
    }

    #[test]
    fn channel_average_matches_corollary_assembly() {
        let p = p08();
        let pdp = PowerDelayProfile::default_for(&p);
        let spec = DistortionSpec::Offset { d_s: 2.0 * p.dt(), nu_hz: 0.3 };
        let ps = pskl(&spec, &p, &pdp, 3, -2).unwrap();
        let taps: f64 = pdp
            .taps()
            .iter()
            .map(|t| t.power * ofdm_ambiguity(&p, t.delay_s + 2.0 * p.dt(), 0.3).norm_sqr())
            .sum();
        assert_eq!(ps, taps);
        let sigma2 = 0.05;
        let direct = offset_sinr_channel_avg(&p, &pdp, 2.0 * p.dt(), 0.3, sigma2).unwrap();
        let assembled = corollary_average(ps, sigma2, p.eps(), pdp.total_power());
        assert!((direct.value - assembled.value).abs() < 1e-9 * direct.value);
    }

    #[test]
    fn moose_values() {
        assert_eq!(moose_bound(0.0, 10.0).unwrap(), 10.0);
        assert!((moose_bound(0.5, 10.0).unwrap() - 1.43947).abs() < 1e-5);
        assert!((moose_bound(0.3, 10.0).unwrap() - 2.0440025).abs() < 1e-6);
        assert!(moose_bound(0.51, 10.0).is_err());
    }

    #[test]
    fn gaussian_pn_values() {
        let p = p08();
        let b = gaussian_pn_sinr_ofdm(&p, 0.0, 0.1, ChannelView::None).unwrap();
        assert!((b.value - p.eps() / 0.1).abs() < 1e-9);
        let b = gaussian_pn_sinr_ofdm(&p, 0.01, 0.1 * p.eps(), ChannelView::None).unwrap();
        assert!((b.value - 9.004532394).abs() < 1e-8);
        let general = gaussian_pn_sinr_general(Complex64::new(p.eps().sqrt(), 0.0), 0.01, 0.08, p.eps());
        assert!((general.value - b.value).abs() < 1e-9);

        let pdp = PowerDelayProfile::new(vec![
            Tap { delay_s: 0.0, power: 1.5 },
            Tap { delay_s: 0.125, power: 0.5 },
        ])
        .unwrap();
        let avg = gaussian_pn_sinr_ofdm(&p, 0.05, 0.2, ChannelView::Average(&pdp)).unwrap();
        let flat = gaussian_pn_sinr_ofdm(&p, 0.05, 0.2 / 2.0, ChannelView::None).unwrap();
        assert!((avg.value - flat.value).abs() < 1e-12);

        // channel-average form equals the Corollary with ⟨p,|s|²⟩ = e^{−S_φ}Σp|A(τ,0)|²
        let spec = DistortionSpec::GaussianPn { s_phi: 0.05, corr_time_s: None };
        let ps = pskl(&spec, &p, &pdp, 1, 1).unwrap();
        let cor = corollary_average(ps, 0.2, p.eps(), pdp.total_power());
        assert!((cor.value - avg.value).abs() < 1e-9 * avg.value);
    }

    #[test]
    fn wiener_values() {
        let p = p08();
        let w = wiener_pn_sinr(&p, 0.01, 0, 0.0, ChannelView::None).unwrap();
        assert!((wiener_factor(0.01, 0, 0.8) - 1.00501043).abs() < 1e-8);
        assert!((w.value - 199.58).abs() < 0.01, "{}", w.value);

        let sigma2 = 0.08;
        let lim = wiener_pn_sinr(&p, 0.0, 0, sigma2, ChannelView::None).unwrap();
        assert!((lim.value - p.eps() / sigma2).abs() < 1e-9);
        let tiny = wiener_pn_sinr(&p, 1e-7, 0, sigma2, ChannelView::None).unwrap();
        assert!((tiny.value - lim.value).abs() < 1e-5 * lim.value);

        let mut last = f64::INFINITY;
        for l in 0..5 {
            let b = wiener_pn_sinr(&p, 0.3, l, sigma2, ChannelView::None).unwrap().value;
            assert!(b < last);
            last = b;
        }
    }

    #[test]
    fn wiener_overlap_values() {
        let p = p08();
        let plateau = 2.0 * 0.8f64.sqrt() * (1.0 - (-0.5f64).exp());
        for tau in [0.0, 0.1, 0.25] {
            assert!((wiener_overlap(&p, 1.0, tau).unwrap() - plateau).abs() < 1e-12);
        }
        assert!((wiener_overlap(&p, 0.0, 0.1).unwrap() - 0.8f64.sqrt()).abs() < 1e-12);
        // quadrature oracle including a late path
        for tau in [-0.3, 0.1, 0.45] {
            let n = 100_000;
            let h = 1.0 / n as f64;
            let s = (0..n)
                .map(|i| {
                    let t = (i as f64 + 0.5) * h;
                    let inside = t >= tau - p.tcp() && t < tau + 1.0;
                    if inside { (-0.5 * t).exp() } else { 0.0 }
                })
                .sum::<f64>()
                * h
                / p.period().sqrt();
            assert!((wiener_overlap(&p, 1.0, tau).unwrap() - s).abs() < 1e-8, "τ={tau}");
        }
        assert!(wiener_overlap(&p.with_t0(0.1), 1.0, 0.0).is_err());
    }

    #[test]
    fn tracking_second_moment_matches_double_integral() {
        let eps = 0.8;
        for rho in [0.1f64, 0.5, 1.0] {
            // ∬_{[0,1]²} e^{−ρ|t1−t2|/2} (with T_u = 1), times ε
            let n = 2000;
            let h = 1.0 / n as f64;
            let mut acc = 0.0;
            for i in 0..n {
                let t1 = (i as f64 + 0.5) * h;
                for j in 0..n {
                    let t2 = (j as f64 + 0.5) * h;
                    acc += (-rho / 2.0 * (t1 - t2).abs()).exp();
                }
            }
            let quad = eps * acc * h * h;
            let m2 = wiener_second_moment(eps, rho);
            assert!((m2 - quad).abs() < 1e-4 * m2, "ρ={rho}: {m2} vs {quad}");
        }
        assert!((wiener_second_moment(1.0, 1.0) - 0.852245).abs() < 1e-6);
        let b = wiener_tracking_asymptotic(1.0, 1.0, 0.0).unwrap();
        assert!((b.value - 5.767973).abs() < 1e-5);
        assert!((wiener_second_moment(1.0, 0.02) - wiener_second_moment(1.0, 0.02 + 1e-12)).abs() < 1e-11);
    }

    #[test]
    fn tracking_dominates_l0() {
        let p = p08();
        let sigma2 = 0.1 * p.eps();
        for i in 0..50 {
            let rho = 10f64.powf(-2.0 + 2.0 * i as f64 / 49.0);
            let a = wiener_tracking_asymptotic(p.eps(), rho, sigma2).unwrap().value;
            let b = wiener_pn_sinr(&p, rho, 0, sigma2, ChannelView::None).unwrap().value;
            assert!(a >= b, "ρ={rho}");
        }
    }

    #[test]
    fn skl_cases() {
        let p = p08();
        let none = DistortionSpec::Offset { d_s: 0.0, nu_hz: 0.0 };
        assert!((skl(&none, &p, 0, 0, 0.0).unwrap() - Complex64::new(0.8f64.sqrt(), 0.0)).norm() < 1e-12);

        let off = DistortionSpec::Offset { d_s: 0.0, nu_hz: 0.2 };
        let base = skl(&off, &p, 0, 0, 0.1).unwrap();
        for (k, l) in [(1, 0), (0, 1), (3, -2)] {
            let s = skl(&off, &p, k, l, 0.1).unwrap();
            assert!((s.norm() - base.norm()).abs() < 1e-12);
            let rot = cis(2.0 * PI * 0.2 * l as f64 / p.eps());
            assert!((s - rot * base).norm() < 1e-12);
        }
        let d = DistortionSpec::Offset { d_s: 0.05, nu_hz: 0.0 };
        let s = skl(&d, &p, 2, 0, 0.0).unwrap();
        assert!((s - cis(-2.0 * PI * 0.05 * 2.0) * 0.8f64.sqrt()).norm() < 1e-12);

        let w = DistortionSpec::WienerPn { s_phidot: 1.0, l_sync: 0 };
        let v = skl(&w, &p, 0, 0, 0.1).unwrap();
        assert!((v.re - 0.7869387 * 0.8f64.sqrt()).abs() < 1e-6);
        assert!(skl(&DistortionSpec::WienerPn { s_phidot: 1.0, l_sync: 1 }, &p, 0, 0, 0.1).is_err());
    }

    #[test]
    fn mean_diagonal_matches_frequency_response() {
        let p = p08();
        let h = ChannelRealization::new(vec![
            (0.0, Complex64::new(0.6, 0.3)),
            (0.125, Complex64::new(-0.2, 0.5)),
        ])
        .unwrap();
        let spec = DistortionSpec::Offset { d_s: 0.0, nu_hz: 0.2 };
        let (k, l) = (2, 1);
        let m = mean_diagonal(&spec, &p, &h, k, l).unwrap();
        let expect = cis(2.0 * PI * 0.2 * l as f64 / p.eps())
            * 0.8f64.sqrt()
            * sinc(PI * 0.2)
            * cis(p.phi0(0.2))
            * h.freq_response(k as f64 / p.tu());
        assert!((m - expect).norm() < 1e-12);
    }

    #[test]
    fn bounds_decrease_in_noise() {
        let p = p08();
        let pdp = PowerDelayProfile::default_for(&p);
        let mut last = [f64::INFINITY; 4];
        for i in 1..20 {
            let s2 = i as f64 * 0.05;
            let v = [
                offset_sinr_channel_avg(&p, &pdp, 0.0, 0.2, s2).unwrap().value,
                gaussian_pn_sinr_ofdm(&p, 0.1, s2, ChannelView::Average(&pdp)).unwrap().value,
                wiener_pn_sinr(&p, 0.1, 1, s2, ChannelView::Average(&pdp)).unwrap().value,
                wiener_tracking_asymptotic(p.eps(), 0.1, s2).unwrap().value,
            ];
            for (a, b) in v.iter().zip(&last) {
                assert!(a < b && *a >= 0.0);
            }
            last = v;
        }
    }

    #[test]
    fn channel_average_dispatch_agrees_with_generic_form() {
        let p = p08();
        let pdp = PowerDelayProfile::default_for(&p);
        for spec in [
            DistortionSpec::None,
            DistortionSpec::Offset { d_s: 0.0, nu_hz: 0.2 },
            DistortionSpec::GaussianPn { s_phi: 0.1, corr_time_s: None },
            DistortionSpec::WienerPn { s_phidot: 0.1, l_sync: 0 },
        ] {
            let a = channel_average_bound(&spec, &p, &pdp, 0, 0, 0.1).unwrap().value;
            let b = corollary_average(pskl(&spec, &p, &pdp, 0, 0).unwrap(), 0.1, p.eps(), pdp.total_power()).value;
            assert!((a - b).abs() < 1e-6 * b, "{spec:?}: {a} vs {b}");
        }
        let w = DistortionSpec::WienerPn { s_phidot: 0.1, l_sync: 1 };
        assert!(channel_average_bound(&w, &p, &pdp, 0, 0, 0.1).is_err());
    }
}
