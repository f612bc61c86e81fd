//! Monte Carlo estimation of the effective channel and BPSK error rates.
//!
//! Trial `i` draws from `ChaCha8Rng::seed_from_u64(seed)` on stream `i`, so
//! results do not depend on how trials are spread over threads. Per-trial
//! values are collected in trial order and reduced by pairwise summation.

use num_complex::Complex64;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{corollary_fixed, gaussian_pn_sinr_ofdm, mean_diagonal, wiener_pn_sinr, Bound, ChannelView};
use crate::channel::{beta_bound_freq_offset, beta_bound_general, draw_channel, ChannelRealization, PowerDelayProfile};
use crate::distortion::{wiener_path, DistortionRealization, DistortionSpec, PhasePath};
use crate::error::{Error, Result};
use crate::gabor::{Coefficients, GaborSystem, Lattice};
use crate::stats::{batch_mean_se, pairwise_sum, wilson_interval};
use crate::tfsignal::{cis, inner, tf_shift, ComplexSignal, OfdmPulses, TFShift};

/// Observed slots need this many lattice slots on every side.
pub const GUARD_SLOTS: i64 = 2;

/// Equalizer gains below this are treated as a zero-forcing singularity.
pub const ZF_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum ChannelSource {
    Profile(PowerDelayProfile),
    Fixed(ChannelRealization),
}

impl ChannelSource {
    fn tau_d(&self) -> f64 {
        match self {
            Self::Profile(p) => p.tau_d(),
            Self::Fixed(h) => h.tau_d(),
        }
    }
}

/// Equalizer gain the receiver divides by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tracking {
    /// Zero forcing on the channel only: `⟨g,γ⟩·ĥ(k/T_u)`.
    None,
    /// The mean diagonal `⟨H_kl,kl⟩` over the distortion.
    #[default]
    Mean,
    /// The realized diagonal `H_kl,kl`.
    PerSlot,
}

/// Wiener phase reference used by [`run_ser`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyncMode {
    /// The configured `t_sync = l_sync·T` for every symbol.
    #[default]
    Fixed,
    /// Each symbol `n` is referenced to the phase at `nT`.
    PerSymbol,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub pulses: OfdmPulses,
    pub lattice: Lattice,
    pub channel: ChannelSource,
    pub distortion: DistortionSpec,
    pub sigma2: f64,
    pub trials: usize,
    pub seed: u64,
    pub tracking: Tracking,
    pub sync: SyncMode,
    /// Observed slot `(k, l)`.
    pub slot: (i64, i64),
    pub batches: usize,
}

impl SimConfig {
    /// Mean tracking, fixed sync, observing the lattice center, 20 batches.
    pub fn new(
        pulses: OfdmPulses,
        lattice: Lattice,
        channel: ChannelSource,
        distortion: DistortionSpec,
        sigma2: f64,
        trials: usize,
        seed: u64,
    ) -> Self {
        Self {
            pulses,
            lattice,
            channel,
            distortion,
            sigma2,
            trials,
            seed,
            tracking: Tracking::Mean,
            sync: SyncMode::Fixed,
            slot: lattice.center(),
            batches: 20,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidParameter("trials must be at least 1".into()));
        }
        if !(self.sigma2 >= 0.0 && self.sigma2.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma2 must be finite and ≥ 0, got {}", self.sigma2)));
        }
        if self.batches == 0 {
            return Err(Error::InvalidParameter("batches must be at least 1".into()));
        }
        self.distortion.validate()?;
        let (k, l) = self.slot;
        if !self.lattice.contains(k, l) {
            return Err(Error::InvalidParameter(format!("observed slot ({k},{l}) outside lattice")));
        }
        let (gm, gn) = self.lattice.guard(k, l);
        if gm < GUARD_SLOTS || gn < GUARD_SLOTS {
            return Err(Error::InvalidParameter(format!(
                "observed slot ({k},{l}) needs {GUARD_SLOTS} guard slots on each side"
            )));
        }
        Ok(())
    }

    pub fn system(&self) -> Result<GaborSystem> {
        GaborSystem::ofdm(&self.pulses, self.lattice)
    }
}

/// The random inputs of one trial.
#[derive(Debug, Clone)]
pub struct TrialDraw {
    pub channel: ChannelRealization,
    pub distortion: DistortionRealization,
}

/// Independent generator for trial `trial`.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// Seed for cell `cell` of an experiment grid run from `base`. Cells drawn from
/// one base are independent of each other and of neighbouring bases.
pub fn cell_seed(base: u64, cell: u64) -> u64 {
    // trial streams count up from 0, cells count down from the top
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(u64::MAX - cell);
    rng.next_u64()
}

/// Sample grid `(t_start, dt, len)` covering every synthesized pulse plus the channel spread.
fn signal_span(sys: &GaborSystem, tau_d: f64) -> (f64, f64, usize) {
    let tx = sys.tx();
    let lat = sys.lattice();
    let dt = tx.dt();
    let t_start = tx.t0() + lat.n_min as f64 * sys.period();
    let span = (lat.n_max - lat.n_min) as f64 * sys.period() + tx.len() as f64 * dt + tau_d;
    (t_start, dt, (span / dt).ceil() as usize + 1)
}

fn draw_channel_for(src: &ChannelSource, rng: &mut ChaCha8Rng) -> ChannelRealization {
    match src {
        ChannelSource::Profile(p) => draw_channel(p, rng),
        ChannelSource::Fixed(h) => h.clone(),
    }
}

pub fn draw_trial(cfg: &SimConfig, sys: &GaborSystem, rng: &mut ChaCha8Rng) -> Result<TrialDraw> {
    let channel = draw_channel_for(&cfg.channel, rng);
    let grid = signal_span(sys, cfg.channel.tau_d());
    let distortion = cfg.distortion.realize(sys.period(), grid, Some(rng as &mut dyn RngCore))?;
    Ok(TrialDraw { channel, distortion })
}

/// `ℋ*𝒮*g_kl`, the receive pulse pulled back through the chain.
pub fn pulled_back_pulse(
    sys: &GaborSystem,
    h: &ChannelRealization,
    s: &DistortionRealization,
    k: i64,
    l: i64,
) -> Result<ComplexSignal> {
    h.adjoint(&s.adjoint(&sys.rx_slot(k, l))?)
}

/// `H_{kl,mn} = ⟨g_kl, 𝒮ℋγ_mn⟩ = conj⟨γ_mn, ℋ*𝒮*g_kl⟩` over the lattice.
pub fn effective_matrix_row(
    sys: &GaborSystem,
    h: &ChannelRealization,
    s: &DistortionRealization,
    k: i64,
    l: i64,
) -> Result<Coefficients> {
    let f = pulled_back_pulse(sys, h, s, k, l)?;
    let mut row = sys.analyze_tx(&f)?;
    row.values_mut().iter_mut().for_each(|z| *z = z.conj());
    Ok(row)
}

/// Same row by pushing every `γ_mn` through the chain; slow, for cross-checks.
pub fn effective_matrix_row_direct(
    sys: &GaborSystem,
    h: &ChannelRealization,
    s: &DistortionRealization,
    k: i64,
    l: i64,
) -> Result<Coefficients> {
    let g = sys.rx_slot(k, l);
    let lat = *sys.lattice();
    let values = lat
        .slots()
        .map(|(m, n)| inner(&g, &s.apply(&h.apply(&sys.tx_slot(m, n))?)?))
        .collect::<Result<Vec<_>>>()?;
    Coefficients::new(lat, values)
}

/// `E|θ(t)|` reference for a two-sided Wiener path pinned at `t_sync`.
fn wiener_mean(s_phidot: f64, t: f64, t_sync: f64) -> f64 {
    (-s_phidot / 2.0 * (t - t_sync).abs()).exp()
}

/// `⟨H_kl,kl⟩ = ⟨g_kl, 𝒮̄ ℋ γ_kl⟩` for a given channel, with the mean operator
/// of the distortion applied sample by sample.
pub fn conditional_mean(
    sys: &GaborSystem,
    h: &ChannelRealization,
    spec: &DistortionSpec,
    k: i64,
    l: i64,
) -> Result<Complex64> {
    let f = h.apply(&sys.tx_slot(k, l))?;
    let g = sys.rx_slot(k, l);
    match *spec {
        DistortionSpec::None => inner(&g, &f),
        DistortionSpec::Offset { d_s, nu_hz } => inner(&g, &tf_shift(&f, TFShift::new(d_s, nu_hz))?),
        DistortionSpec::GaussianPn { s_phi, .. } => Ok((-s_phi / 2.0).exp() * inner(&g, &f)?),
        DistortionSpec::WienerPn { s_phidot, l_sync } => {
            let t_sync = l_sync as f64 * sys.period();
            inner(&g, &f.modulate(|t| Complex64::new(wiener_mean(s_phidot, t, t_sync), 0.0)))
        }
    }
}

/// Per-realization `sinr` bound for the configured distortion (B_ofdm = ε).
/// `None` when the closed form does not apply to this geometry.
pub fn fixed_channel_bound(cfg: &SimConfig, sys: &GaborSystem, h: &ChannelRealization) -> Result<Option<Bound>> {
    let p = &cfg.pulses;
    let (k, l) = cfg.slot;
    let eps = p.eps();
    let h_k = h.freq_response(k as f64 * p.spacing());
    let view = || ChannelView::Fixed { h_k, beta: beta_bound_general(h), tau_d: h.tau_d() };
    let res = match cfg.distortion {
        DistortionSpec::None => {
            let g = sys.rx_slot(k, l);
            let m = mean_diagonal(&cfg.distortion, p, h, k, l)?;
            Ok(corollary_fixed(m, cfg.sigma2, eps, beta_bound_freq_offset(h, &g, 0.0)?))
        }
        DistortionSpec::Offset { d_s, nu_hz } => {
            crate::bounds::check_cp(p.tcp(), h.tau_d(), d_s)
                .and_then(|_| mean_diagonal(&cfg.distortion, p, h, k, l))
                .and_then(|m| {
                    let g = sys.rx_slot(k, l);
                    Ok(corollary_fixed(m, cfg.sigma2, eps, beta_bound_freq_offset(h, &g, nu_hz)?))
                })
        }
        DistortionSpec::GaussianPn { s_phi, .. } => gaussian_pn_sinr_ofdm(p, s_phi, cfg.sigma2, view()),
        DistortionSpec::WienerPn { s_phidot, l_sync } => {
            if l < l_sync {
                return Ok(None);
            }
            wiener_pn_sinr(p, s_phidot * p.tu(), (l - l_sync) as u32, cfg.sigma2, view())
        }
    };
    match res {
        Ok(b) => Ok(Some(b)),
        Err(Error::CyclicPrefixViolated { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// A Monte Carlo mean with its batch-means standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

impl Estimate {
    /// Upper end of a one-sided interval at normal quantile `z`.
    pub fn upper(&self, z: f64) -> f64 {
        self.value + z * self.se
    }
    pub fn lower(&self, z: f64) -> f64 {
        self.value - z * self.se
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimResult {
    pub slot: (i64, i64),
    pub seed: u64,
    pub trials: usize,
    /// `E H_kl,kl`.
    pub mean_h: Complex64,
    /// `E |H_kl,kl|²`.
    pub second_moment_h: Estimate,
    /// `E |⟨H_kl,kl⟩|²`, the conditional mean taken over the distortion.
    pub mean_sq: Estimate,
    /// `E Σ_{(mn)≠(kl)} |H_kl,mn|²`.
    pub ici_power: Estimate,
    /// `E |H_kl,kl − ⟨H_kl,kl⟩|²`.
    pub delta_h_var: Estimate,
    pub sinr_hat: Estimate,
    #[serde(rename = "SINR_hat")]
    pub sinr_tracked_hat: Estimate,
    /// `E |x̃^eq − x|²` with the configured tracking.
    pub mse: Estimate,
    /// Mean of `1/sinr_bound` over trials with a non-vacuous fixed-channel bound.
    pub mse_predicted: Estimate,
    /// Paired `mse − 1/sinr_bound` over the same trials.
    pub mse_excess: Estimate,
    pub predicted_trials: usize,
    pub excluded_trials: usize,
    /// Largest `Σ_row|H|² / (ε‖ℋ*𝒮*g_kl‖²)` over trials.
    pub energy_ratio_max: f64,
    /// Trials with `Σ_row|H|² > ε‖ℋ*𝒮*g_kl‖²·(1 + 1e-3)`.
    pub energy_violations: usize,
}

#[derive(Debug, Clone, Copy, Default)]
struct TrialStats {
    hkk: Complex64,
    hkk_sq: f64,
    mu_sq: f64,
    ici: f64,
    dh_sq: f64,
    mse: Option<f64>,
    predicted: Option<f64>,
    energy_ratio: f64,
}

fn complex_normal(rng: &mut impl Rng, var: f64) -> Complex64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(s * re, s * im)
}

fn bpsk(rng: &mut impl Rng) -> f64 {
    if rng.random::<bool>() { 1.0 } else { -1.0 }
}

fn run_trial(cfg: &SimConfig, sys: &GaborSystem, overlap: Complex64, trial: u64) -> Result<TrialStats> {
    let mut rng = trial_rng(cfg.seed, trial);
    let draw = draw_trial(cfg, sys, &mut rng)?;
    let (k, l) = cfg.slot;
    let f = pulled_back_pulse(sys, &draw.channel, &draw.distortion, k, l)?;
    let mut row = sys.analyze_tx(&f)?;
    row.values_mut().iter_mut().for_each(|z| *z = z.conj());
    let idx = cfg.lattice.index(k, l).unwrap();
    let hkk = row.values()[idx];
    let row_sum = pairwise_sum(&row.values().iter().map(|z| z.norm_sqr()).collect::<Vec<_>>());
    let mu = conditional_mean(sys, &draw.channel, &cfg.distortion, k, l)?;

    let x: Vec<f64> = (0..cfg.lattice.len()).map(|_| bpsk(&mut rng)).collect();
    let noise = complex_normal(&mut rng, cfg.sigma2);
    let y: Complex64 = row.values().iter().zip(&x).map(|(hv, xv)| hv * xv).sum::<Complex64>() + noise;
    let c = match cfg.tracking {
        Tracking::None => overlap * draw.channel.freq_response(k as f64 * sys.spacing()),
        Tracking::Mean => mu,
        Tracking::PerSlot => hkk,
    };
    let mse = (c.norm() >= ZF_FLOOR).then(|| (y / c - x[idx]).norm_sqr());
    let predicted = fixed_channel_bound(cfg, sys, &draw.channel)?
        .and_then(|b| b.get())
        .map(|v| 1.0 / v);

    Ok(TrialStats {
        hkk,
        hkk_sq: hkk.norm_sqr(),
        mu_sq: mu.norm_sqr(),
        ici: row_sum - hkk.norm_sqr(),
        dh_sq: (hkk - mu).norm_sqr(),
        mse,
        predicted,
        energy_ratio: row_sum / (cfg.pulses.eps() * f.energy()),
    })
}

fn mean_of(v: &[f64]) -> f64 {
    pairwise_sum(v) / v.len() as f64
}

/// Batch-means estimate of `ratio(means of the columns)`.
fn batched(columns: &[Vec<f64>], batches: usize, ratio: impl Fn(&[f64]) -> f64) -> Estimate {
    let n = columns[0].len();
    let means: Vec<f64> = columns.iter().map(|c| mean_of(c)).collect();
    let value = ratio(&means);
    let b = batches.min(n);
    if b < 2 {
        return Estimate { value, se: f64::NAN };
    }
    let per: Vec<f64> = (0..b)
        .map(|i| {
            let (lo, hi) = (i * n / b, (i + 1) * n / b);
            let m: Vec<f64> = columns.iter().map(|c| mean_of(&c[lo..hi])).collect();
            ratio(&m)
        })
        .collect();
    Estimate { value, se: batch_mean_se(&per).1 }
}

/// Moments of the observed diagonal, interference, empirical sinr/SINR and MSE.
pub fn estimate_moments(cfg: &SimConfig) -> Result<SimResult> {
    cfg.validate()?;
    let sys = cfg.system()?;
    let overlap = inner(sys.rx(), sys.tx())?;
    let stats = (0..cfg.trials as u64)
        .into_par_iter()
        .map(|t| run_trial(cfg, &sys, overlap, t))
        .collect::<Result<Vec<_>>>()?;

    let col = |f: fn(&TrialStats) -> f64| stats.iter().map(f).collect::<Vec<f64>>();
    let (mu_sq, hkk_sq, ici, dh) = (col(|s| s.mu_sq), col(|s| s.hkk_sq), col(|s| s.ici), col(|s| s.dh_sq));
    let sigma2 = cfg.sigma2;
    let b = cfg.batches;
    let mean_h = Complex64::new(mean_of(&col(|s| s.hkk.re)), mean_of(&col(|s| s.hkk.im)));

    let mses: Vec<f64> = stats.iter().filter_map(|s| s.mse).collect();
    let paired: Vec<(f64, f64)> = stats.iter().filter_map(|s| Some((s.mse?, s.predicted?))).collect();
    let excess: Vec<f64> = paired.iter().map(|(m, p)| m - p).collect();
    let pred: Vec<f64> = paired.iter().map(|(_, p)| *p).collect();
    let simple = |v: &[f64]| {
        if v.is_empty() {
            Estimate { value: f64::NAN, se: f64::NAN }
        } else {
            batched(&[v.to_vec()], b, |m| m[0])
        }
    };
    let ratios = col(|s| s.energy_ratio);

    Ok(SimResult {
        slot: cfg.slot,
        seed: cfg.seed,
        trials: cfg.trials,
        mean_h,
        second_moment_h: batched(std::slice::from_ref(&hkk_sq), b, |m| m[0]),
        mean_sq: batched(std::slice::from_ref(&mu_sq), b, |m| m[0]),
        ici_power: batched(std::slice::from_ref(&ici), b, |m| m[0]),
        delta_h_var: batched(std::slice::from_ref(&dh), b, |m| m[0]),
        sinr_hat: batched(&[mu_sq, ici.clone(), dh], b, |m| m[0] / (sigma2 + m[1] + m[2])),
        sinr_tracked_hat: batched(&[hkk_sq, ici], b, |m| m[0] / (sigma2 + m[1])),
        mse: simple(&mses),
        mse_predicted: simple(&pred),
        mse_excess: simple(&excess),
        predicted_trials: paired.len(),
        excluded_trials: stats.len() - mses.len(),
        energy_ratio_max: ratios.iter().copied().fold(0.0, f64::max),
        energy_violations: ratios.iter().filter(|r| **r > 1.0 + 1e-3).count(),
    })
}

/// BPSK symbol error statistics over the interior slots.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SerResult {
    pub seed: u64,
    pub trials: usize,
    pub symbols: u64,
    pub errors: u64,
    pub ser: f64,
    /// Wilson 95% interval.
    pub ci_low: f64,
    pub ci_high: f64,
    pub mse: f64,
    /// Slots skipped because the equalizer gain vanished.
    pub excluded: u64,
}

/// Wiener realization on `grid` plus the phases at each symbol's sync instant.
fn wiener_with_sync_phases(
    s_phidot: f64,
    t_sync: f64,
    grid: (f64, f64, usize),
    sync_times: &[f64],
    rng: &mut ChaCha8Rng,
) -> (DistortionRealization, Vec<f64>) {
    let (t0, dt, len) = grid;
    let mut times: Vec<(f64, usize)> = (0..len).map(|i| (t0 + i as f64 * dt, i)).collect();
    times.extend(sync_times.iter().enumerate().map(|(j, t)| (*t, len + j)));
    times.sort_by(|a, b| a.0.total_cmp(&b.0));
    let sorted: Vec<f64> = times.iter().map(|t| t.0).collect();
    let phi = wiener_path(s_phidot, t_sync, &sorted, rng);
    let mut out = vec![0.0; len + sync_times.len()];
    for ((_, slot), p) in times.iter().zip(phi) {
        out[*slot] = p;
    }
    let sync = out.split_off(len);
    (DistortionRealization::Phase(PhasePath { t0, dt, phases: out }), sync)
}

struct SerTrial {
    errors: u64,
    symbols: u64,
    sq_err: Vec<f64>,
    excluded: u64,
}

fn ser_trial(cfg: &SimConfig, sys: &GaborSystem, overlap: Complex64, trial: u64) -> Result<SerTrial> {
    let mut rng = trial_rng(cfg.seed, trial);
    let lat = *sys.lattice();
    let h = draw_channel_for(&cfg.channel, &mut rng);
    let grid = signal_span(sys, cfg.channel.tau_d());
    let per_symbol = matches!((cfg.sync, cfg.distortion), (SyncMode::PerSymbol, DistortionSpec::WienerPn { .. }));
    let (dist, sync_phase) = match cfg.distortion {
        DistortionSpec::WienerPn { s_phidot, l_sync } if per_symbol => {
            let times: Vec<f64> = (lat.n_min..=lat.n_max).map(|n| n as f64 * sys.period()).collect();
            wiener_with_sync_phases(s_phidot, l_sync as f64 * sys.period(), grid, &times, &mut rng)
        }
        _ => (cfg.distortion.realize(sys.period(), grid, Some(&mut rng as &mut dyn RngCore))?, Vec::new()),
    };

    let x: Vec<f64> = (0..lat.len()).map(|_| bpsk(&mut rng)).collect();
    let coeffs = Coefficients::new(lat, x.iter().map(|v| Complex64::new(*v, 0.0)).collect())?;
    let r = dist.apply(&h.apply(&sys.synthesize(&coeffs)?)?)?;
    let y = sys.analyze(&r)?;

    let mut out = SerTrial { errors: 0, symbols: 0, sq_err: Vec::new(), excluded: 0 };
    for (i, (m, n)) in lat.slots().enumerate() {
        let (gm, gn) = lat.guard(m, n);
        if gm < GUARD_SLOTS || gn < GUARD_SLOTS {
            continue;
        }
        let derot = if per_symbol { cis(-sync_phase[(n - lat.n_min) as usize]) } else { Complex64::new(1.0, 0.0) };
        let spec_n = match cfg.distortion {
            DistortionSpec::WienerPn { s_phidot, .. } if per_symbol => DistortionSpec::WienerPn { s_phidot, l_sync: n },
            other => other,
        };
        let c = match cfg.tracking {
            Tracking::None => overlap * h.freq_response(m as f64 * sys.spacing()),
            Tracking::Mean => conditional_mean(sys, &h, &spec_n, m, n)?,
            Tracking::PerSlot => derot * inner(&sys.rx_slot(m, n), &dist.apply(&h.apply(&sys.tx_slot(m, n))?)?)?,
        };
        let noise = complex_normal(&mut rng, cfg.sigma2);
        if c.norm() < ZF_FLOOR {
            out.excluded += 1;
            continue;
        }
        let eq = (y.values()[i] * derot + noise) / c;
        out.symbols += 1;
        if (eq.re >= 0.0) != (x[i] > 0.0) {
            out.errors += 1;
        }
        out.sq_err.push((eq - x[i]).norm_sqr());
    }
    Ok(out)
}

/// Full waveform chain with BPSK on every slot: synthesize, channel, distortion,
/// analysis, per-slot noise of variance σ², equalize and slice. Only slots
/// with [`GUARD_SLOTS`] neighbours on each side are counted.
pub fn run_ser(cfg: &SimConfig) -> Result<SerResult> {
    cfg.validate()?;
    let sys = cfg.system()?;
    let overlap = inner(sys.rx(), sys.tx())?;
    let trials = (0..cfg.trials as u64)
        .into_par_iter()
        .map(|t| ser_trial(cfg, &sys, overlap, t))
        .collect::<Result<Vec<_>>>()?;
    let errors = trials.iter().map(|t| t.errors).sum();
    let symbols = trials.iter().map(|t| t.symbols).sum();
    let sq: Vec<f64> = trials.iter().flat_map(|t| t.sq_err.iter().copied()).collect();
    let (ci_low, ci_high) = wilson_interval(errors, symbols, 1.959963984540054);
    Ok(SerResult {
        seed: cfg.seed,
        trials: cfg.trials,
        symbols,
        errors,
        ser: if symbols > 0 { errors as f64 / symbols as f64 } else { f64::NAN },
        ci_low,
        ci_high,
        mse: if sq.is_empty() { f64::NAN } else { mean_of(&sq) },
        excluded: trials.iter().map(|t| t.excluded).sum(),
    })
}

/// Default simulation geometry: ε = 0.8 with 64 samples per `T_u`, a 33×17 lattice.
pub fn default_geometry() -> (OfdmPulses, Lattice) {
    (OfdmPulses::with_eps(0.8, 64).unwrap(), Lattice::centered(33, 17).unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::{ofdm_ambiguity, sinc_sq};
    use crate::stats::q_function;

    fn small_cfg(distortion: DistortionSpec, channel: ChannelSource, sigma2: f64, trials: usize) -> SimConfig {
        let p = OfdmPulses::with_eps(0.8, 32).unwrap();
        SimConfig::new(p, Lattice::centered(9, 5).unwrap(), channel, distortion, sigma2, trials, 42)
    }

    #[test]
    fn rejects_bad_configs() {
        let (p, lat) = default_geometry();
        let mut cfg = SimConfig::new(p, lat, ChannelSource::Fixed(ChannelRealization::identity()), DistortionSpec::None, 0.1, 0, 1);
        assert!(estimate_moments(&cfg).is_err());
        cfg.trials = 5;
        cfg.slot = (15, 0);
        assert!(cfg.validate().is_err());
        cfg.slot = (0, 0);
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn identity_chain_row_is_a_delta() {
        let cfg = small_cfg(DistortionSpec::None, ChannelSource::Fixed(ChannelRealization::identity()), 0.0, 1);
        let sys = cfg.system().unwrap();
        let row = effective_matrix_row(&sys, &ChannelRealization::identity(), &DistortionRealization::Identity, 0, 0).unwrap();
        for ((m, n), v) in cfg.lattice.slots().zip(row.values()) {
            let expect = if (m, n) == (0, 0) { 0.8f64.sqrt() } else { 0.0 };
            assert!((v - Complex64::new(expect, 0.0)).norm() < 1e-8);
        }
    }

    #[test]
    fn delay_inside_prefix_only_rotates() {
        let cfg = small_cfg(DistortionSpec::None, ChannelSource::Fixed(ChannelRealization::identity()), 0.0, 1);
        let sys = cfg.system().unwrap();
        let dt = cfg.pulses.dt();
        let h = ChannelRealization::new(vec![(5.0 * dt, Complex64::new(1.0, 0.0))]).unwrap();
        let row = effective_matrix_row(&sys, &h, &DistortionRealization::Identity, 1, 0).unwrap();
        for ((m, n), v) in cfg.lattice.slots().zip(row.values()) {
            if (m, n) == (1, 0) {
                assert!((v.norm() - 0.8f64.sqrt()).abs() < 1e-12);
            } else {
                assert!(v.norm() < 1e-8);
            }
        }
    }

    #[test]
    fn adjoint_route_matches_direct_chain() {
        let p = OfdmPulses::with_eps(0.8, 32).unwrap();
        let cfg = small_cfg(
            DistortionSpec::WienerPn { s_phidot: 0.5, l_sync: 0 },
            ChannelSource::Profile(PowerDelayProfile::default_for(&p)),
            0.0,
            1,
        );
        let sys = cfg.system().unwrap();
        let mut rng = trial_rng(3, 0);
        let draw = draw_trial(&cfg, &sys, &mut rng).unwrap();
        for (k, l) in [(0, 0), (1, -1)] {
            let a = effective_matrix_row(&sys, &draw.channel, &draw.distortion, k, l).unwrap();
            let b = effective_matrix_row_direct(&sys, &draw.channel, &draw.distortion, k, l).unwrap();
            for (x, y) in a.values().iter().zip(b.values()) {
                assert!((x - y).norm() < 1e-12);
            }
        }
        let off = DistortionRealization::Offset(TFShift::new(3.0 * p.dt(), 0.3));
        let a = effective_matrix_row(&sys, &draw.channel, &off, 0, 0).unwrap();
        let b = effective_matrix_row_direct(&sys, &draw.channel, &off, 0, 0).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn frequency_offset_row() {
        let p = OfdmPulses::with_eps(0.8, 64).unwrap();
        let cfg = small_cfg(DistortionSpec::None, ChannelSource::Fixed(ChannelRealization::identity()), 0.0, 1);
        let sys = GaborSystem::ofdm(&p, Lattice::centered(33, 5).unwrap()).unwrap();
        let s = DistortionRealization::Offset(TFShift::new(0.0, 0.2));
        let row = effective_matrix_row(&sys, &ChannelRealization::identity(), &s, 0, 0).unwrap();
        let hkk = row.get(0, 0).unwrap();
        assert!((hkk.norm_sqr() - 0.8 * sinc_sq(0.2)).abs() < 1e-3);
        assert!((hkk - ofdm_ambiguity(&p, 0.0, 0.2)).norm() < 2.0 / 64.0);
        let sum: f64 = row.values().iter().map(|z| z.norm_sqr()).sum();
        assert!(sum <= 0.8 * (1.0 + 1e-3));
        let _ = cfg;
    }

    #[test]
    fn deterministic_offset_has_no_variance() {
        let p = OfdmPulses::with_eps(0.8, 32).unwrap();
        let cfg = small_cfg(
            DistortionSpec::Offset { d_s: 0.0, nu_hz: 0.1 },
            ChannelSource::Profile(PowerDelayProfile::default_for(&p)),
            0.1,
            40,
        );
        let r = estimate_moments(&cfg).unwrap();
        assert!(r.delta_h_var.value < 1e-20);
    }

    #[test]
    fn distortion_free_sinr_is_snr() {
        let cfg = small_cfg(DistortionSpec::None, ChannelSource::Fixed(ChannelRealization::identity()), 0.08, 50);
        let r = estimate_moments(&cfg).unwrap();
        assert!((r.sinr_hat.value - 10.0).abs() < 1e-6);
        assert!((r.sinr_tracked_hat.value - 10.0).abs() < 1e-6);
        assert!(r.ici_power.value < 1e-16);
    }

    #[test]
    fn results_are_reproducible_across_thread_counts() {
        let p = OfdmPulses::with_eps(0.8, 32).unwrap();
        let cfg = small_cfg(
            DistortionSpec::WienerPn { s_phidot: 0.2, l_sync: 0 },
            ChannelSource::Profile(PowerDelayProfile::default_for(&p)),
            0.1,
            64,
        );
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| estimate_moments(&cfg).unwrap());
        let b = four.install(|| estimate_moments(&cfg).unwrap());
        assert_eq!(format!("{a:?}"), format!("{b:?}"));
        let s1 = one.install(|| run_ser(&cfg).unwrap());
        let s4 = four.install(|| run_ser(&cfg).unwrap());
        assert_eq!(s1, s4);
    }

    #[test]
    fn gaussian_pn_mean_is_spectrum_independent() {
        let mut means = Vec::new();
        for corr in [None, Some(0.05)] {
            let cfg = small_cfg(
                DistortionSpec::GaussianPn { s_phi: 0.2, corr_time_s: corr },
                ChannelSource::Fixed(ChannelRealization::identity()),
                0.0,
                2000,
            );
            let r = estimate_moments(&cfg).unwrap();
            let se = (r.second_moment_h.value / cfg.trials as f64).sqrt();
            means.push((r.mean_h, se));
        }
        let expect = (-0.1f64).exp() * 0.8f64.sqrt();
        for (m, se) in &means {
            assert!((m.re - expect).abs() < 3.0 * se, "{m} vs {expect}");
        }
        let d = (means[0].0 - means[1].0).norm();
        assert!(d < 3.0 * (means[0].1.powi(2) + means[1].1.powi(2)).sqrt());
    }

    #[test]
    fn noiseless_identity_ser_is_zero() {
        let cfg = small_cfg(DistortionSpec::None, ChannelSource::Fixed(ChannelRealization::identity()), 0.0, 3);
        let r = run_ser(&cfg).unwrap();
        assert_eq!(r.errors, 0);
        assert!(r.symbols > 0);
        assert!(r.mse <= 1e-12);
    }

    #[test]
    fn awgn_ser_matches_q_function() {
        let mut cfg = small_cfg(DistortionSpec::None, ChannelSource::Fixed(ChannelRealization::identity()), 0.0, 2000);
        let snr = 10f64.powf(0.4);
        cfg.sigma2 = cfg.pulses.eps() / snr;
        let r = run_ser(&cfg).unwrap();
        let expect = q_function((2.0 * snr).sqrt());
        assert!(r.ci_low <= expect && expect <= r.ci_high, "{} [{}, {}] vs {expect}", r.ser, r.ci_low, r.ci_high);
    }

    #[test]
    fn per_symbol_sync_beats_fixed_sync() {
        let mut cfg = small_cfg(
            DistortionSpec::WienerPn { s_phidot: 2.0, l_sync: -2 },
            ChannelSource::Fixed(ChannelRealization::identity()),
            0.05,
            100,
        );
        let fixed = run_ser(&cfg).unwrap();
        cfg.sync = SyncMode::PerSymbol;
        let synced = run_ser(&cfg).unwrap();
        assert!(synced.mse < fixed.mse);
    }

    #[test]
    fn conditional_mean_matches_closed_form() {
        let p = OfdmPulses::with_eps(0.8, 256).unwrap();
        let sys = GaborSystem::ofdm(&p, Lattice::centered(9, 5).unwrap()).unwrap();
        let h = ChannelRealization::new(vec![
            (0.0, Complex64::new(0.7, 0.1)),
            (32.0 * p.dt(), Complex64::new(-0.3, 0.4)),
        ])
        .unwrap();
        for spec in [
            DistortionSpec::Offset { d_s: 4.0 * p.dt(), nu_hz: 0.15 },
            DistortionSpec::GaussianPn { s_phi: 0.1, corr_time_s: None },
            DistortionSpec::WienerPn { s_phidot: 0.4, l_sync: 0 },
            DistortionSpec::WienerPn { s_phidot: 0.4, l_sync: -1 },
        ] {
            for (k, l) in [(0, 0), (2, 1)] {
                let num = conditional_mean(&sys, &h, &spec, k, l).unwrap();
                let closed = mean_diagonal(&spec, &p, &h, k, l).unwrap();
                assert!((num - closed).norm() < 1e-4, "{spec:?} ({k},{l}): {num} vs {closed}");
            }
        }
    }
}
