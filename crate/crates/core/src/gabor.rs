//! Gabor synthesis/analysis on a finite lattice, Gram matrices and Bessel bounds.
//!
//! Coefficients over a [`Lattice`] are stored with the subcarrier index `m`
//! running fastest: `index = (n - n_min)·num_m + (m - m_min)`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tfsignal::{cis, grid_steps, inner, tf_shift, ComplexSignal, OfdmPulses, TFShift};

/// Start-vector seed of the power iteration.
pub const POWER_ITERATION_SEED: u64 = 0x6761_626f_7200;

/// Finite index set `[m_min, m_max] × [n_min, n_max]` (subcarrier × symbol).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Lattice {
    pub m_min: i64,
    pub m_max: i64,
    pub n_min: i64,
    pub n_max: i64,
}

impl Lattice {
    pub fn new(m_min: i64, m_max: i64, n_min: i64, n_max: i64) -> Result<Self> {
        if m_min > m_max || n_min > n_max {
            return Err(Error::InvalidParameter(format!(
                "empty lattice [{m_min},{m_max}]×[{n_min},{n_max}]"
            )));
        }
        Ok(Self { m_min, m_max, n_min, n_max })
    }

    /// `num_m × num_n` lattice centered on slot `(0, 0)` (left-leaning for even sizes).
    pub fn centered(num_m: usize, num_n: usize) -> Result<Self> {
        if num_m == 0 || num_n == 0 {
            return Err(Error::InvalidParameter("lattice dimensions must be positive".into()));
        }
        let m_min = -((num_m as i64 - 1) / 2);
        let n_min = -((num_n as i64 - 1) / 2);
        Self::new(m_min, m_min + num_m as i64 - 1, n_min, n_min + num_n as i64 - 1)
    }

    pub fn num_m(&self) -> usize {
        (self.m_max - self.m_min + 1) as usize
    }

    pub fn num_n(&self) -> usize {
        (self.n_max - self.n_min + 1) as usize
    }

    pub fn len(&self) -> usize {
        self.num_m() * self.num_n()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, m: i64, n: i64) -> bool {
        (self.m_min..=self.m_max).contains(&m) && (self.n_min..=self.n_max).contains(&n)
    }

    pub fn index(&self, m: i64, n: i64) -> Option<usize> {
        self.contains(m, n)
            .then(|| ((n - self.n_min) as usize) * self.num_m() + (m - self.m_min) as usize)
    }

    pub fn slot(&self, index: usize) -> (i64, i64) {
        let m = self.m_min + (index % self.num_m()) as i64;
        let n = self.n_min + (index / self.num_m()) as i64;
        (m, n)
    }

    /// Slots in storage order.
    pub fn slots(&self) -> impl Iterator<Item = (i64, i64)> + '_ {
        (0..self.len()).map(|i| self.slot(i))
    }

    pub fn center(&self) -> (i64, i64) {
        (
            self.m_min + (self.num_m() as i64 - 1) / 2,
            self.n_min + (self.num_n() as i64 - 1) / 2,
        )
    }

    /// Same center, twice as many slots per axis.
    pub fn doubled(&self) -> Self {
        let (mc, nc) = self.center();
        let (mm, nn) = (self.num_m() as i64, self.num_n() as i64);
        let m_min = mc - (2 * mm - 1) / 2;
        let n_min = nc - (2 * nn - 1) / 2;
        Self { m_min, m_max: m_min + 2 * mm - 1, n_min, n_max: n_min + 2 * nn - 1 }
    }

    /// Slot distance to the nearest lattice edge along each axis.
    pub fn guard(&self, m: i64, n: i64) -> (i64, i64) {
        ((m - self.m_min).min(self.m_max - m), (n - self.n_min).min(self.n_max - n))
    }
}

/// Complex values indexed by a lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients {
    lattice: Lattice,
    values: Vec<Complex64>,
}

impl Coefficients {
    pub fn new(lattice: Lattice, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != lattice.len() {
            return Err(Error::LatticeMismatch { expected: lattice.len(), got: values.len() });
        }
        Ok(Self { lattice, values })
    }

    pub fn zeros(lattice: Lattice) -> Self {
        Self { lattice, values: vec![Complex64::new(0.0, 0.0); lattice.len()] }
    }

    pub fn unit(lattice: Lattice, m: i64, n: i64) -> Result<Self> {
        let mut c = Self::zeros(lattice);
        let i = lattice
            .index(m, n)
            .ok_or_else(|| Error::InvalidParameter(format!("slot ({m},{n}) outside lattice")))?;
        c.values[i] = Complex64::new(1.0, 0.0);
        Ok(c)
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn get(&self, m: i64, n: i64) -> Option<Complex64> {
        self.lattice.index(m, n).map(|i| self.values[i])
    }

    pub fn energy(&self) -> f64 {
        self.values.iter().map(|z| z.norm_sqr()).sum()
    }
}

/// Transmit/receive prototypes on the lattice `{(nT, mF)}`.
#[derive(Debug, Clone)]
pub struct GaborSystem {
    tx: ComplexSignal,
    rx: ComplexSignal,
    period: f64,
    spacing: f64,
    lattice: Lattice,
    steps_per_period: i64,
}

impl GaborSystem {
    pub fn new(tx: ComplexSignal, rx: ComplexSignal, period: f64, spacing: f64, lattice: Lattice) -> Result<Self> {
        if !(period > 0.0 && spacing > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "lattice steps must be positive, got T={period}, F={spacing}"
            )));
        }
        tx.offset_of(&rx)?;
        let steps_per_period =
            grid_steps(period, tx.dt()).ok_or(Error::OffGrid { tau: period, dt: tx.dt() })?;
        for (name, p) in [("transmit", &tx), ("receive", &rx)] {
            if (p.energy() - 1.0).abs() > 1e-10 {
                return Err(Error::InvalidParameter(format!(
                    "{name} prototype must have unit energy, got {}",
                    p.energy()
                )));
            }
        }
        Ok(Self { tx, rx, period, spacing, lattice, steps_per_period })
    }

    pub fn ofdm(pulses: &OfdmPulses, lattice: Lattice) -> Result<Self> {
        Self::new(pulses.gamma(), pulses.g(), pulses.period(), pulses.spacing(), lattice)
    }

    pub fn tx(&self) -> &ComplexSignal {
        &self.tx
    }
    pub fn rx(&self) -> &ComplexSignal {
        &self.rx
    }
    pub fn period(&self) -> f64 {
        self.period
    }
    pub fn spacing(&self) -> f64 {
        self.spacing
    }
    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }
    /// `ε = 1/(TF)`.
    pub fn eps(&self) -> f64 {
        1.0 / (self.period * self.spacing)
    }

    pub fn with_lattice(&self, lattice: Lattice) -> Self {
        Self { lattice, ..self.clone() }
    }

    /// `γ_mn = S_{nT,mF} γ`.
    pub fn tx_slot(&self, m: i64, n: i64) -> ComplexSignal {
        shifted(&self.tx, self.period, self.spacing, m, n)
    }

    /// `g_mn = S_{nT,mF} g`.
    pub fn rx_slot(&self, m: i64, n: i64) -> ComplexSignal {
        shifted(&self.rx, self.period, self.spacing, m, n)
    }

    /// `Γx = Σ x_mn γ_mn`.
    pub fn synthesize(&self, x: &Coefficients) -> Result<ComplexSignal> {
        if x.lattice != self.lattice {
            return Err(Error::LatticeMismatch { expected: self.lattice.len(), got: x.values.len() });
        }
        let lat = &self.lattice;
        let tx = &self.tx;
        let span = (lat.num_n() as i64 - 1) * self.steps_per_period;
        let mut out = vec![Complex64::new(0.0, 0.0); span as usize + tx.len()];
        let mut row = vec![Complex64::new(0.0, 0.0); lat.num_m()];
        for n in lat.n_min..=lat.n_max {
            let base = lat.index(lat.m_min, n).unwrap();
            row.copy_from_slice(&x.values[base..base + lat.num_m()]);
            if row.iter().all(|z| *z == Complex64::new(0.0, 0.0)) {
                continue;
            }
            let off = ((n - lat.n_min) * self.steps_per_period) as usize;
            for (j, p) in tx.samples().iter().enumerate() {
                let t = tx.time(j) + n as f64 * self.period;
                let step = cis(2.0 * PI * self.spacing * t);
                let mut z = cis(2.0 * PI * lat.m_min as f64 * self.spacing * t);
                let mut acc = Complex64::new(0.0, 0.0);
                for c in &row {
                    acc += c * z;
                    z *= step;
                }
                out[off + j] += p * acc;
            }
        }
        ComplexSignal::new(out, tx.dt(), tx.t0() + lat.n_min as f64 * self.period)
    }

    /// `G*r = (⟨g_mn, r⟩)_mn`.
    pub fn analyze(&self, r: &ComplexSignal) -> Result<Coefficients> {
        self.analyze_with(&self.rx, r)
    }

    /// `Γ*r = (⟨γ_mn, r⟩)_mn`.
    pub fn analyze_tx(&self, r: &ComplexSignal) -> Result<Coefficients> {
        self.analyze_with(&self.tx, r)
    }

    fn analyze_with(&self, pulse: &ComplexSignal, r: &ComplexSignal) -> Result<Coefficients> {
        let lat = &self.lattice;
        let off0 = r.offset_of(pulse)?;
        let dt = pulse.dt();
        let mut out = Coefficients::zeros(*lat);
        let mut acc = vec![Complex64::new(0.0, 0.0); lat.num_m()];
        let rs = r.samples();
        for n in lat.n_min..=lat.n_max {
            let off = off0 + n * self.steps_per_period;
            let lo = (-off).max(0);
            let hi = (pulse.len() as i64).min(rs.len() as i64 - off);
            if lo >= hi {
                continue;
            }
            acc.iter_mut().for_each(|a| *a = Complex64::new(0.0, 0.0));
            for j in lo..hi {
                let w = pulse.samples()[j as usize].conj() * rs[(off + j) as usize];
                if w == Complex64::new(0.0, 0.0) {
                    continue;
                }
                let t = pulse.time(j as usize) + n as f64 * self.period;
                let step = cis(-2.0 * PI * self.spacing * t);
                let mut z = cis(-2.0 * PI * lat.m_min as f64 * self.spacing * t);
                for a in acc.iter_mut() {
                    *a += w * z;
                    z *= step;
                }
            }
            let base = lat.index(lat.m_min, n).unwrap();
            for (o, a) in out.values[base..base + lat.num_m()].iter_mut().zip(&acc) {
                *o = a * dt;
            }
        }
        Ok(out)
    }

    /// Gram matrix `Γ*Γ` of the transmit pulses.
    pub fn gram(&self) -> Result<GramMatrix> {
        GramMatrix::new(self)
    }
}

fn shifted(p: &ComplexSignal, period: f64, spacing: f64, m: i64, n: i64) -> ComplexSignal {
    tf_shift(p, TFShift::new(n as f64 * period, m as f64 * spacing))
        .expect("period is on the sample grid")
}

/// `(Γ*Γ)_{kl,mn} = ⟨γ_kl, γ_mn⟩ = e^{i2π·lT·(m−k)F}·⟨γ, S_{(n−l)T,(m−k)F} γ⟩`.
///
/// Only the twisted-convolution kernel `⟨γ, S_{bT,aF} γ⟩` is stored; entries
/// and products are formed on demand.
#[derive(Debug, Clone)]
pub struct GramMatrix {
    lattice: Lattice,
    twist: f64,
    dn_max: i64,
    kernel: Vec<Complex64>,
}

impl GramMatrix {
    fn new(sys: &GaborSystem) -> Result<Self> {
        let lattice = sys.lattice;
        let (nm, nn) = (lattice.num_m() as i64, lattice.num_n() as i64);
        let duration = sys.tx.len() as f64 * sys.tx.dt();
        let dn_max = ((duration / sys.period).ceil() as i64).min(nn - 1);
        let mut kernel = Vec::with_capacity(((2 * nm - 1) * (2 * dn_max + 1)) as usize);
        for b in -dn_max..=dn_max {
            for a in -(nm - 1)..=(nm - 1) {
                kernel.push(inner(&sys.tx, &shifted(&sys.tx, sys.period, sys.spacing, a, b))?);
            }
        }
        Ok(Self { lattice, twist: sys.period * sys.spacing, dn_max, kernel })
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn dim(&self) -> usize {
        self.lattice.len()
    }

    fn kernel_at(&self, a: i64, b: i64) -> Complex64 {
        if b.abs() > self.dn_max {
            return Complex64::new(0.0, 0.0);
        }
        let nm = self.lattice.num_m() as i64;
        self.kernel[((b + self.dn_max) * (2 * nm - 1) + a + nm - 1) as usize]
    }

    pub fn entry(&self, i: usize, j: usize) -> Complex64 {
        let (k, l) = self.lattice.slot(i);
        let (m, n) = self.lattice.slot(j);
        cis(2.0 * PI * self.twist * (l * (m - k)) as f64) * self.kernel_at(m - k, n - l)
    }

    /// Row-major dense copy; intended for small lattices.
    pub fn dense(&self) -> Vec<Complex64> {
        let d = self.dim();
        let mut out = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                out.push(self.entry(i, j));
            }
        }
        out
    }

    /// `y = G x`.
    pub fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        let lat = &self.lattice;
        let nm = lat.num_m() as i64;
        let width = (2 * nm - 1) as usize;
        let mut y = vec![Complex64::new(0.0, 0.0); x.len()];
        let mut kern = vec![Complex64::new(0.0, 0.0); width];
        for l in lat.n_min..=lat.n_max {
            let row_base = ((l - lat.n_min) * nm) as usize;
            for n in (l - self.dn_max).max(lat.n_min)..=(l + self.dn_max).min(lat.n_max) {
                for (idx, kv) in kern.iter_mut().enumerate() {
                    let a = idx as i64 - (nm - 1);
                    *kv = cis(2.0 * PI * self.twist * (l * a) as f64) * self.kernel_at(a, n - l);
                }
                let col_base = ((n - lat.n_min) * nm) as usize;
                let xs = &x[col_base..col_base + nm as usize];
                for k in 0..nm as usize {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for (m, xv) in xs.iter().enumerate() {
                        acc += kern[m + nm as usize - 1 - k] * xv;
                    }
                    y[row_base + k] += acc;
                }
            }
        }
        y
    }

    /// Largest absolute row sum, an upper bound on every eigenvalue.
    pub fn gershgorin_bound(&self) -> f64 {
        (0..self.dim())
            .map(|i| (0..self.dim()).map(|j| self.entry(i, j).norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Rayleigh quotient `Re(x*Gx)/x*x`, a lower bound on the top eigenvalue.
    pub fn rayleigh_quotient(&self, x: &[Complex64]) -> f64 {
        let y = self.apply(x);
        let num: Complex64 = x.iter().zip(&y).map(|(a, b)| a.conj() * b).sum();
        num.re / x.iter().map(|z| z.norm_sqr()).sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerIteration {
    pub rel_tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for PowerIteration {
    fn default() -> Self {
        Self { rel_tol: 1e-8, max_iter: 10_000, seed: POWER_ITERATION_SEED }
    }
}

impl PowerIteration {
    /// Top eigenvalue of the (positive semidefinite) Gram matrix.
    pub fn largest_eigenvalue(&self, gram: &GramMatrix) -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut x: Vec<Complex64> = (0..gram.dim())
            .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
            .collect();
        normalize(&mut x);
        let mut last = f64::NAN;
        for _ in 0..self.max_iter {
            let mut y = gram.apply(&x);
            let lambda = x.iter().zip(&y).map(|(a, b)| (a.conj() * b).re).sum::<f64>();
            if (lambda - last).abs() <= self.rel_tol * lambda.abs() {
                return Ok(lambda);
            }
            last = lambda;
            if normalize(&mut y) == 0.0 {
                return Ok(0.0);
            }
            x = y;
        }
        Err(Error::NoConvergence { iterations: self.max_iter, last })
    }
}

fn normalize(x: &mut [Complex64]) -> f64 {
    let n = x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if n > 0.0 {
        x.iter_mut().for_each(|z| *z /= n);
    }
    n
}

/// Largest eigenvalue of the finite Gram matrix (default power iteration).
pub fn bessel_bound_numeric(sys: &GaborSystem) -> Result<f64> {
    PowerIteration::default().largest_eigenvalue(&sys.gram()?)
}

/// Bessel bound at the system's lattice and at the doubled lattice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BesselEstimate {
    pub value: f64,
    pub doubled: f64,
    pub lattice: Lattice,
}

impl BesselEstimate {
    pub fn converged(&self, tol: f64) -> bool {
        (self.doubled - self.value).abs() <= tol
    }
}

pub fn bessel_bound_with_check(sys: &GaborSystem) -> Result<BesselEstimate> {
    let value = bessel_bound_numeric(sys)?;
    let doubled = bessel_bound_numeric(&sys.with_lattice(sys.lattice.doubled()))?;
    Ok(BesselEstimate { value, doubled, lattice: sys.lattice })
}

/// Symbol `φ(ω) = ε(⌊1/ε − ω⌋ + 1)` of the cp-OFDM Gram Toeplitz operator.
pub fn cp_toeplitz_symbol(eps: f64, omega: f64) -> Result<f64> {
    check_eps(eps)?;
    if !(omega > 0.0 && omega < 1.0) {
        return Err(Error::Domain { value: omega, domain: "(0, 1)" });
    }
    Ok(eps * ((1.0 / eps - omega).floor() + 1.0))
}

/// `sup φ = ε·⌈1/ε⌉`; `2ε` for `ε ∈ (1/2, 1)`, `1` for `ε ∈ {1/2, 1}`.
pub fn bessel_bound_analytic(eps: f64) -> Result<f64> {
    check_eps(eps)?;
    Ok(eps * (1.0 / eps - 1e-12).ceil())
}

/// Bessel constant used in the cp-OFDM bounds: `ε·B_g = ε`, or the
/// transmitter's own bound `sup φ` when `conservative` is set.
pub fn effective_bessel_ofdm(eps: f64, conservative: bool) -> Result<f64> {
    check_eps(eps)?;
    if conservative {
        bessel_bound_analytic(eps)
    } else {
        Ok(eps)
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps <= 1.0 {
        Ok(())
    } else {
        Err(Error::Domain { value: eps, domain: "(0, 1]" })
    }
}
