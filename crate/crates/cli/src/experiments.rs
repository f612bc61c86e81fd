//! One function per experiment; each returns its CSV tables and any
//! one-sided check that failed.

use anyhow::{bail, Context, Result};
use gabormc::bounds::{
    channel_average_bound, moose_bound, ofdm_ambiguity, wiener_pn_sinr, wiener_tracking_asymptotic, Bound,
    ChannelView,
};
use gabormc::gabor::{bessel_bound_analytic, bessel_bound_numeric, GaborSystem, PowerIteration};
use gabormc::montecarlo::{cell_seed, estimate_moments, fixed_channel_bound, run_ser, ChannelSource, SimConfig, SyncMode};
use gabormc::stats::{familywise_z, q_function, wilson_interval};
use gabormc::tfsignal::{cross_ambiguity, grid_steps};
use gabormc::{ChannelRealization, DistortionSpec, OfdmPulses, PowerDelayProfile};

use crate::config::*;
use crate::output::{db, Cell, Table};

#[derive(Debug, Default)]
pub struct Report {
    pub tables: Vec<Table>,
    pub violations: Vec<String>,
}

pub fn run(cfg: &ExperimentConfig) -> Result<Report> {
    let p = cfg.pulses.build()?;
    match &cfg.params {
        Params::Bessel(b) => bessel(&cfg.pulses, b),
        Params::Ambiguity(a) => ambiguity(&p, a),
        Params::OffsetBounds(o) => offset_bounds(&p, o),
        Params::PnBounds(o) => pn_bounds(&p, o),
        Params::Simulate(s) => simulate(&p, cfg.seed, s),
        Params::Ser(s) => ser(&p, cfg.seed, s),
    }
}

/// `10`, `2.5`, `-3` for file names.
fn tag(x: f64) -> String {
    format!("{x}").replace('-', "m")
}

fn from_db(x: f64) -> f64 {
    10f64.powf(x / 10.0)
}

fn bound_cells(b: &Bound) -> [Cell; 3] {
    [Cell::opt(b.get()), db(b.get()), Cell::Flag(b.vacuous)]
}

fn bessel(pc: &PulseConfig, b: &BesselParams) -> Result<Report> {
    let lattice = b.lattice.build()?;
    let mut t = Table::new(
        "bessel",
        vec!["eps", "eps_realized", "bessel_numeric", "bessel_numeric_doubled", "bessel_analytic", "within_analytic"],
    );
    let mut report = Report::default();
    for &eps in b.eps.values() {
        let p = pulses_for_eps(pc.tu_s, eps, pc.samples_per_tu)?;
        let sys = GaborSystem::ofdm(&p, lattice)?;
        let numeric = bessel_bound_numeric(&sys)?;
        let doubled = if b.check_doubled {
            Cell::num(PowerIteration::default().largest_eigenvalue(&sys.with_lattice(lattice.doubled()).gram()?)?)
        } else {
            Cell::Empty
        };
        let analytic = bessel_bound_analytic(p.eps())?;
        let ok = numeric <= analytic * (1.0 + 1e-6);
        if !ok {
            report.violations.push(format!("bessel: eps={eps}: numeric {numeric} exceeds analytic {analytic}"));
        }
        t.push(vec![
            Cell::num(eps),
            Cell::num(p.eps()),
            Cell::num(numeric),
            doubled,
            Cell::num(analytic),
            Cell::Flag(ok),
        ]);
    }
    report.tables.push(t);
    Ok(report)
}

fn ambiguity(p: &OfdmPulses, a: &AmbiguityParams) -> Result<Report> {
    let (g, gamma) = (p.g(), p.gamma());
    let tol = 2.0 / p.ns() as f64;
    let mut t = Table::new(
        "ambiguity",
        vec!["tau_s", "nu_hz", "closed_re", "closed_im", "closed_abs", "numeric_re", "numeric_im", "abs_err"],
    );
    let mut report = Report::default();
    for &tau in a.tau_s.values() {
        if grid_steps(tau, p.dt()).is_none() {
            bail!("tau_s={tau} is not a multiple of the sample interval {}", p.dt());
        }
        for &nu in a.nu_hz.values() {
            let c = ofdm_ambiguity(p, tau, nu);
            let n = cross_ambiguity(&g, &gamma, tau, nu)?;
            let err = (c - n).norm();
            if err > tol {
                report.violations.push(format!("ambiguity: tau={tau} nu={nu}: error {err} > {tol}"));
            }
            t.push(
                [tau, nu, c.re, c.im, c.norm(), n.re, n.im, err].into_iter().map(Cell::num).collect(),
            );
        }
    }
    report.tables.push(t);
    Ok(report)
}

fn offset_bounds(p: &OfdmPulses, o: &OffsetBoundsParams) -> Result<Report> {
    let pdp = o.channel.profile(p)?.unwrap_or_else(unit_profile);
    let mut report = Report::default();
    for &snr_db in o.snr_db.values() {
        let snr = from_db(snr_db);
        let sigma2 = pdp.total_power() / snr;
        let mut t = Table::new(
            format!("offset_bounds_snr{}db", tag(snr_db)),
            vec!["nu_hat", "sinr_bound", "sinr_bound_db", "sinr_bound_vacuous", "moose_bound", "moose_bound_db"],
        );
        for &nu_hat in o.nu_hat.values() {
            let b = gabormc::bounds::offset_sinr_channel_avg(p, &pdp, o.d_s, nu_hat, sigma2)?;
            let moose = if nu_hat.abs() <= 0.5 { Some(moose_bound(nu_hat, snr)?) } else { None };
            let mut row = vec![Cell::num(nu_hat)];
            row.extend(bound_cells(&b));
            row.extend([Cell::opt(moose), db(moose)]);
            t.push(row);
        }
        report.tables.push(t);
    }
    Ok(report)
}

fn unit_profile() -> PowerDelayProfile {
    PowerDelayProfile::new(vec![gabormc::channel::Tap { delay_s: 0.0, power: 1.0 }]).unwrap()
}

const LAG_COLUMNS: [[&str; 3]; 6] = [
    ["sinr_l0", "sinr_l0_db", "sinr_l0_vacuous"],
    ["sinr_l1", "sinr_l1_db", "sinr_l1_vacuous"],
    ["sinr_l2", "sinr_l2_db", "sinr_l2_vacuous"],
    ["sinr_l3", "sinr_l3_db", "sinr_l3_vacuous"],
    ["sinr_l4", "sinr_l4_db", "sinr_l4_vacuous"],
    ["sinr_l5", "sinr_l5_db", "sinr_l5_vacuous"],
];

fn pn_bounds(p: &OfdmPulses, o: &PnBoundsParams) -> Result<Report> {
    if let Some(l) = o.lags.iter().find(|l| **l as usize >= LAG_COLUMNS.len()) {
        bail!("params.lags: lag {l} exceeds the supported maximum {}", LAG_COLUMNS.len() - 1);
    }
    let mut header = vec!["rho"];
    for l in &o.lags {
        header.extend(LAG_COLUMNS[*l as usize]);
    }
    header.extend(["sinr_tracked", "sinr_tracked_db", "sinr_tracked_vacuous"]);
    let mut report = Report::default();
    for &ratio in o.sigma2_over_eps.values() {
        let sigma2 = ratio * p.eps();
        let mut t = Table::new(format!("pn_bounds_s2e{}", tag(ratio)), header.clone());
        for &rho in o.rho.values() {
            let mut row = vec![Cell::num(rho)];
            for &l in &o.lags {
                row.extend(bound_cells(&wiener_pn_sinr(p, rho, l, sigma2, ChannelView::None)?));
            }
            row.extend(bound_cells(&wiener_tracking_asymptotic(p.eps(), rho, sigma2)?));
            t.push(row);
        }
        report.tables.push(t);
    }
    Ok(report)
}

/// `kind key=value ...` for a distortion.
pub fn label(d: &DistortionSpec) -> String {
    let v = serde_json::to_value(d).unwrap();
    let obj = v.as_object().unwrap();
    let mut s = obj["type"].as_str().unwrap().to_string();
    for (k, x) in obj.iter().filter(|(k, _)| *k != "type") {
        if !x.is_null() {
            s.push_str(&format!(" {k}={x}"));
        }
    }
    s
}

fn channel_source(c: &ChannelConfig, p: &OfdmPulses) -> Result<(ChannelSource, PowerDelayProfile)> {
    Ok(match c.profile(p)? {
        Some(pdp) => (ChannelSource::Profile(pdp.clone()), pdp),
        None => (ChannelSource::Fixed(ChannelRealization::identity()), unit_profile()),
    })
}

const SIM_HEADER: [&str; 25] = [
    "distortion",
    "snr_db",
    "sigma2",
    "seed",
    "trials",
    "sinr_hat",
    "sinr_hat_se",
    "sinr_bound",
    "sinr_bound_vacuous",
    "sinr_ok",
    "sinr_tracked_hat",
    "sinr_tracked_hat_se",
    "mean_h_re",
    "mean_h_im",
    "second_moment_h",
    "ici_power",
    "delta_h_var",
    "mse",
    "mse_se",
    "mse_predicted",
    "mse_excess",
    "mse_excess_se",
    "mse_ok",
    "energy_ratio_max",
    "energy_violations",
];

fn simulate(p: &OfdmPulses, seed: u64, s: &SimulateParams) -> Result<Report> {
    let lattice = s.lattice.build()?;
    let (source, pdp) = channel_source(&s.channel, p)?;
    let mut t = Table::new("simulate", SIM_HEADER.to_vec());
    let mut report = Report::default();
    let snrs = s.snr_db.values();
    let z = familywise_z(s.alpha, s.distortions.len() * snrs.len(), false);
    for (i, d) in s.distortions.iter().enumerate() {
        for (j, &snr_db) in snrs.iter().enumerate() {
            let sigma2 = pdp.total_power() / from_db(snr_db);
            let cseed = cell_seed(seed, (i * snrs.len() + j) as u64);
            let mut cfg = SimConfig::new(*p, lattice, source.clone(), *d, sigma2, s.trials, cseed);
            cfg.tracking = s.tracking;
            cfg.batches = s.batches;
            let (k, l) = cfg.slot;
            let r = estimate_moments(&cfg).with_context(|| format!("simulate {}", label(d)))?;
            let bound = channel_average_bound(d, p, &pdp, k, l, sigma2)?;
            let sinr_ok = bound.get().is_none_or(|b| r.sinr_hat.upper(z) >= b);
            let mse_ok = !(r.mse_excess.value > z * r.mse_excess.se);
            let cell = format!("{} snr_db={snr_db}", label(d));
            if !sinr_ok {
                report.violations.push(format!(
                    "simulate {cell}: sinr_hat {} (se {}) below bound {}",
                    r.sinr_hat.value, r.sinr_hat.se, bound.value
                ));
            }
            if !mse_ok {
                report.violations.push(format!(
                    "simulate {cell}: mse exceeds prediction by {} (se {})",
                    r.mse_excess.value, r.mse_excess.se
                ));
            }
            if r.energy_violations > 0 {
                report.violations.push(format!(
                    "simulate {cell}: {} trials exceed ε‖ℋ*𝒮*g‖² (max ratio {})",
                    r.energy_violations, r.energy_ratio_max
                ));
            }
            t.push(vec![
                Cell::Text(label(d)),
                Cell::num(snr_db),
                Cell::num(sigma2),
                Cell::Int(cseed),
                Cell::Int(s.trials as u64),
                Cell::num(r.sinr_hat.value),
                Cell::num(r.sinr_hat.se),
                Cell::opt(bound.get()),
                Cell::Flag(bound.vacuous),
                Cell::Flag(sinr_ok),
                Cell::num(r.sinr_tracked_hat.value),
                Cell::num(r.sinr_tracked_hat.se),
                Cell::num(r.mean_h.re),
                Cell::num(r.mean_h.im),
                Cell::num(r.second_moment_h.value),
                Cell::num(r.ici_power.value),
                Cell::num(r.delta_h_var.value),
                Cell::num(r.mse.value),
                Cell::num(r.mse.se),
                Cell::num(r.mse_predicted.value),
                Cell::num(r.mse_excess.value),
                Cell::num(r.mse_excess.se),
                Cell::Flag(mse_ok),
                Cell::num(r.energy_ratio_max),
                Cell::Int(r.energy_violations as u64),
            ]);
        }
    }
    report.tables.push(t);
    Ok(report)
}

/// `sinr` bound used for the SER prediction of the centre slot: exact for
/// the identity channel, channel-averaged otherwise. `None` when the Wiener
/// reference is fixed, since slots before it have no bound.
pub fn ser_sinr_bound(
    p: &OfdmPulses,
    d: &DistortionSpec,
    sync: SyncMode,
    channel: &ChannelConfig,
    sigma2: f64,
) -> Result<Option<Bound>> {
    let spec = match (*d, sync) {
        (DistortionSpec::WienerPn { s_phidot, .. }, SyncMode::PerSymbol) => {
            DistortionSpec::WienerPn { s_phidot, l_sync: 0 }
        }
        (DistortionSpec::WienerPn { .. }, SyncMode::Fixed) => return Ok(None),
        (other, _) => other,
    };
    Ok(Some(match channel.profile(p)? {
        None => {
            let cfg = SimConfig::new(
                *p,
                gabormc::Lattice::centered(5, 5)?,
                ChannelSource::Fixed(ChannelRealization::identity()),
                spec,
                sigma2,
                1,
                0,
            );
            match spec {
                DistortionSpec::WienerPn { s_phidot, .. } => {
                    wiener_pn_sinr(p, s_phidot * p.tu(), 0, sigma2, ChannelView::None)?
                }
                DistortionSpec::GaussianPn { s_phi, .. } => {
                    gabormc::bounds::gaussian_pn_sinr_ofdm(p, s_phi, sigma2, ChannelView::None)?
                }
                _ => match fixed_channel_bound(&cfg, &cfg.system()?, &ChannelRealization::identity())? {
                    Some(b) => b,
                    None => return Ok(None),
                },
            }
        }
        Some(pdp) => channel_average_bound(&spec, p, &pdp, 0, 0, sigma2)?,
    }))
}

fn ser(p: &OfdmPulses, seed: u64, s: &SerParams) -> Result<Report> {
    let lattice = s.lattice.build()?;
    let (source, pdp) = channel_source(&s.channel, p)?;
    let mut report = Report::default();
    let snrs = s.rx_snr_db.values();
    // two-sided share for every cell; the one-sided checks are then conservative
    let z = familywise_z(s.alpha, s.distortions.len() * snrs.len(), true);
    for (i, d) in s.distortions.iter().enumerate() {
        let mut t = Table::new(
            format!("ser_{i}"),
            vec![
                "distortion",
                "rx_snr_db",
                "sigma2",
                "seed",
                "symbols",
                "errors",
                "excluded",
                "ser",
                "ci_low",
                "ci_high",
                "mse",
                "sinr_bound",
                "ser_predicted",
                "ok",
            ],
        );
        for (j, &snr_db) in snrs.iter().enumerate() {
            let sigma2 = p.eps() * pdp.total_power() / from_db(snr_db);
            let cseed = cell_seed(seed, (i * snrs.len() + j) as u64);
            let mut cfg = SimConfig::new(*p, lattice, source.clone(), *d, sigma2, s.trials, cseed);
            cfg.tracking = s.tracking;
            cfg.sync = s.sync;
            let r = run_ser(&cfg).with_context(|| format!("ser {}", label(d)))?;
            let bound = ser_sinr_bound(p, d, s.sync, &s.channel, sigma2)?;
            let sinr = bound.as_ref().and_then(Bound::get);
            let pred = match bound {
                Some(b) if b.vacuous => Some(0.5),
                _ => sinr.map(|v| q_function((2.0 * v).sqrt())),
            };
            // without distortion on a fixed channel the prediction is exact
            let exact = matches!(d, DistortionSpec::None) && matches!(source, ChannelSource::Fixed(_));
            let (lo, hi) = wilson_interval(r.errors, r.symbols, z);
            let ok = match pred {
                None => true,
                Some(q) if exact => lo <= q && q <= hi,
                Some(q) => lo <= q,
            };
            if !ok {
                report.violations.push(format!(
                    "ser {} rx_snr_db={snr_db}: ser {} [{lo}, {hi}] vs predicted {:?}",
                    label(d),
                    r.ser,
                    pred
                ));
            }
            t.push(vec![
                Cell::Text(label(d)),
                Cell::num(snr_db),
                Cell::num(sigma2),
                Cell::Int(cseed),
                Cell::Int(r.symbols),
                Cell::Int(r.errors),
                Cell::Int(r.excluded),
                Cell::num(r.ser),
                Cell::num(r.ci_low),
                Cell::num(r.ci_high),
                Cell::num(r.mse),
                Cell::opt(sinr),
                Cell::opt(pred),
                Cell::Flag(ok),
            ]);
        }
        report.tables.push(t);
    }
    Ok(report)
}
