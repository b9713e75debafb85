//! Offspring distributions on {1, 2, ...} and their critical constants.
//!
//! The offspring law `Z` must be supercritical (`E[Z] > 1`) and put no mass
//! at zero, so every generated tree is infinite and the normalized level
//! sizes `W_n = Z_n / mu^n` form a positive martingale. All distribution
//! level constants used elsewhere derive from here: the critical percolation
//! parameter `p_c = 1/E[Z]`, the second factorial moment `phi''(1)`, the
//! limit-law constant `lambda = 2 E[Z]^2 / E[Z(Z-1)]`, the factorial moments
//! `m_r = E[binom(Z, r)]`, and the composition coefficients `c_{k,j}`.

use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use std::fmt;
use std::str::FromStr;

/// Analytic pmf tails are cut once the remaining mass drops below this.
const TAIL_EPS: f64 = 1e-14;

/// How many children a single vertex may declare; guards analytic tails.
const MAX_SUPPORT: usize = 1 << 16;

#[derive(Clone, Debug, PartialEq)]
pub enum OffspringKind {
    /// Point mass at `d` (needs `d >= 2`).
    Deterministic(u32),
    /// Uniform on `{a, ..., b}`.
    UniformRange(u32, u32),
    /// Explicit probabilities for `Z = 1, ..., K`.
    FinitePmf(Vec<f64>),
    /// `P[Z = k] = q (1-q)^{k-1}` on `{1, 2, ...}`; mean `1/q`.
    GeometricShifted(f64),
    /// Poisson(theta) conditioned on being positive.
    PoissonPositive(f64),
}

/// A validated offspring law together with its pmf table on `{1, ..., K}`.
///
/// Analytic families store a truncated table (tail mass below `1e-14`);
/// sampling and all moment computations read the table.
#[derive(Clone, Debug)]
pub struct OffspringSpec {
    kind: OffspringKind,
    /// `pmf[i] = P[Z = i + 1]`.
    pmf: Vec<f64>,
    cumulative: Vec<f64>,
    mean: f64,
    name: String,
}

impl OffspringSpec {
    pub fn new(kind: OffspringKind) -> Result<Self> {
        let pmf = build_pmf(&kind)?;
        let total: f64 = pmf.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidSpec(format!(
                "pmf sums to {total}, expected 1"
            )));
        }
        let mean: f64 = pmf
            .iter()
            .enumerate()
            .map(|(i, p)| (i + 1) as f64 * p)
            .sum();
        if mean <= 1.0 {
            return Err(Error::Subcritical(mean));
        }
        let mut cumulative = Vec::with_capacity(pmf.len());
        let mut acc = 0.0;
        for &p in &pmf {
            acc += p;
            cumulative.push(acc);
        }
        // Make the final bucket catch the full unit interval even when the
        // table is a truncated analytic tail.
        if let Some(last) = cumulative.last_mut() {
            *last = 1.0;
        }
        let name = canonical_name(&kind);
        Ok(Self {
            kind,
            pmf,
            cumulative,
            mean,
            name,
        })
    }

    pub fn deterministic(d: u32) -> Result<Self> {
        Self::new(OffspringKind::Deterministic(d))
    }

    pub fn uniform_range(a: u32, b: u32) -> Result<Self> {
        Self::new(OffspringKind::UniformRange(a, b))
    }

    pub fn finite_pmf(p: Vec<f64>) -> Result<Self> {
        Self::new(OffspringKind::FinitePmf(p))
    }

    pub fn geometric_shifted(q: f64) -> Result<Self> {
        Self::new(OffspringKind::GeometricShifted(q))
    }

    pub fn poisson_positive(theta: f64) -> Result<Self> {
        Self::new(OffspringKind::PoissonPositive(theta))
    }

    pub fn kind(&self) -> &OffspringKind {
        &self.kind
    }

    /// `pmf()[i]` is `P[Z = i + 1]`.
    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn pc(&self) -> f64 {
        1.0 / self.mean
    }

    /// Largest child count the law can produce (table length).
    pub fn max_children(&self) -> u32 {
        self.pmf.len() as u32
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn is_deterministic(&self) -> bool {
        matches!(self.kind, OffspringKind::Deterministic(_))
    }

    /// One draw from `Z`. Deterministic given the stream state.
    #[inline]
    pub fn sample(&self, rng: &mut SplitMix64) -> u32 {
        match self.kind {
            OffspringKind::Deterministic(d) => d,
            OffspringKind::UniformRange(a, b) => {
                a + rng.next_below(u64::from(b - a + 1)) as u32
            }
            _ => {
                let u = rng.next_f64();
                // Linear scan; the expected number of steps is E[Z].
                for (i, &c) in self.cumulative.iter().enumerate() {
                    if u < c {
                        return (i + 1) as u32;
                    }
                }
                self.pmf.len() as u32
            }
        }
    }

    /// Probability generating function `phi(s) = E[s^Z]`.
    pub fn pgf(&self, s: f64) -> f64 {
        let mut acc = 0.0;
        let mut pow = 1.0;
        for &p in &self.pmf {
            pow *= s;
            acc += p * pow;
        }
        acc
    }

    /// Derives every critical constant, with factorial-moment and
    /// composition tables up to `k_max`.
    pub fn derive_params(&self, k_max: usize) -> Result<CriticalParams> {
        CriticalParams::derive(self, k_max)
    }

    /// The law of `Bin(Z, p_c)`: the critical offspring distribution of the
    /// tree-and-percolation process run jointly. Mean exactly 1; support
    /// includes 0.
    pub fn annealed(&self) -> AnnealedOffspring {
        let pc = self.pc();
        let kmax = self.pmf.len();
        let mut out = vec![0.0; kmax + 1];
        for (i, &p) in self.pmf.iter().enumerate() {
            let k = i + 1;
            // Binomial(k, pc) row, built by the multiplicative recurrence.
            let mut term = (1.0 - pc).powi(k as i32);
            out[0] += p * term;
            for j in 1..=k {
                term *= pc / (1.0 - pc) * ((k - j + 1) as f64 / j as f64);
                out[j] += p * term;
            }
        }
        AnnealedOffspring { pmf: out }
    }
}

impl fmt::Display for OffspringSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

impl FromStr for OffspringSpec {
    type Err = Error;

    /// Grammar: `det:d`, `unif:a:b`, `pmf:p1,p2,...`, `geom:q`,
    /// `poisplus:theta`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = |m: &str| Error::InvalidSpec(format!("{m} in {s:?}"));
        let (head, rest) = s
            .split_once(':')
            .ok_or_else(|| bad("missing ':' separator"))?;
        let kind = match head {
            "det" => OffspringKind::Deterministic(
                rest.parse().map_err(|_| bad("bad integer"))?,
            ),
            "unif" => {
                let (a, b) = rest
                    .split_once(':')
                    .ok_or_else(|| bad("unif needs a:b"))?;
                OffspringKind::UniformRange(
                    a.parse().map_err(|_| bad("bad integer"))?,
                    b.parse().map_err(|_| bad("bad integer"))?,
                )
            }
            "pmf" => {
                let p: std::result::Result<Vec<f64>, _> =
                    rest.split(',').map(|t| t.trim().parse()).collect();
                OffspringKind::FinitePmf(p.map_err(|_| bad("bad probability"))?)
            }
            "geom" => OffspringKind::GeometricShifted(
                rest.parse().map_err(|_| bad("bad parameter"))?,
            ),
            "poisplus" => OffspringKind::PoissonPositive(
                rest.parse().map_err(|_| bad("bad parameter"))?,
            ),
            other => return Err(bad(&format!("unknown family {other:?}"))),
        };
        OffspringSpec::new(kind)
    }
}

fn canonical_name(kind: &OffspringKind) -> String {
    match kind {
        OffspringKind::Deterministic(d) => format!("det:{d}"),
        OffspringKind::UniformRange(a, b) => format!("unif:{a}:{b}"),
        OffspringKind::FinitePmf(p) => {
            let parts: Vec<String> = p.iter().map(|x| x.to_string()).collect();
            format!("pmf:{}", parts.join(","))
        }
        OffspringKind::GeometricShifted(q) => format!("geom:{q}"),
        OffspringKind::PoissonPositive(t) => format!("poisplus:{t}"),
    }
}

fn build_pmf(kind: &OffspringKind) -> Result<Vec<f64>> {
    match kind {
        OffspringKind::Deterministic(d) => {
            if *d < 1 {
                return Err(Error::InvalidSpec(
                    "deterministic child count must be at least 1".into(),
                ));
            }
            let mut p = vec![0.0; *d as usize];
            p[*d as usize - 1] = 1.0;
            Ok(p)
        }
        OffspringKind::UniformRange(a, b) => {
            if *a < 1 || a > b {
                return Err(Error::InvalidSpec(format!(
                    "uniform range needs 1 <= a <= b, got {a}..{b}"
                )));
            }
            let n = (b - a + 1) as usize;
            let mut p = vec![0.0; *b as usize];
            for k in *a..=*b {
                p[k as usize - 1] = 1.0 / n as f64;
            }
            Ok(p)
        }
        OffspringKind::FinitePmf(p) => {
            if p.is_empty() {
                return Err(Error::InvalidSpec("empty pmf".into()));
            }
            if p.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(Error::InvalidSpec(
                    "pmf entries must be nonnegative and finite".into(),
                ));
            }
            Ok(p.clone())
        }
        OffspringKind::GeometricShifted(q) => {
            if !(*q > 0.0 && *q < 1.0) {
                return Err(Error::InvalidSpec(format!(
                    "geometric parameter must lie in (0,1), got {q}"
                )));
            }
            let mut p = Vec::new();
            let mut term = *q;
            let mut tail = 1.0;
            while tail > TAIL_EPS && p.len() < MAX_SUPPORT {
                p.push(term);
                tail -= term;
                term *= 1.0 - q;
            }
            Ok(p)
        }
        OffspringKind::PoissonPositive(theta) => {
            if !(*theta > 0.0 && theta.is_finite()) {
                return Err(Error::InvalidSpec(format!(
                    "poisson parameter must be positive, got {theta}"
                )));
            }
            let norm = 1.0 / (theta.exp() - 1.0);
            let mut p = Vec::new();
            let mut term = *theta * norm; // k = 1 term
            let mut cum = 0.0;
            let mut k = 1usize;
            while cum < 1.0 - TAIL_EPS && k < MAX_SUPPORT {
                p.push(term);
                cum += term;
                k += 1;
                term *= theta / k as f64;
            }
            Ok(p)
        }
    }
}

/// Distribution-level constants for critical percolation.
#[derive(Clone, Debug)]
pub struct CriticalParams {
    /// `E[Z]`.
    pub mu: f64,
    /// `1 / E[Z]`.
    pub pc: f64,
    /// `phi''(1) = E[Z(Z-1)]`.
    pub phi2: f64,
    /// `2 / (pc^2 phi2) = 2 mu^2 / E[Z(Z-1)]`.
    pub lambda: f64,
    /// `m[r] = E[binom(Z, r)]` for `r <= k_max`.
    m: Vec<f64>,
    /// `c[k][j] = pc^k * sum over j-compositions of k of prod m_{a_i}`,
    /// indexed `c[k][j]` for `1 <= j <= k <= k_max`.
    c: Vec<Vec<f64>>,
    k_max: usize,
}

/// Default table order; covers the fourth-moment checks the survival
/// analysis needs.
pub const DEFAULT_K_MAX: usize = 4;

impl CriticalParams {
    fn derive(spec: &OffspringSpec, k_max: usize) -> Result<Self> {
        if k_max < 1 {
            return Err(Error::InvalidInput("k_max must be at least 1".into()));
        }
        let mu = spec.mean();
        let pc = 1.0 / mu;
        let mut m = vec![0.0; k_max + 1];
        for (r, slot) in m.iter_mut().enumerate() {
            *slot = spec
                .pmf
                .iter()
                .enumerate()
                .map(|(i, &p)| p * binom_f64(i as u64 + 1, r))
                .sum();
        }
        let phi2: f64 = spec
            .pmf
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                let k = (i + 1) as f64;
                p * k * (k - 1.0)
            })
            .sum();
        if phi2 <= 0.0 {
            return Err(Error::InvalidSpec(
                "offspring law is a point mass at 1; no branching".into(),
            ));
        }
        let lambda = 2.0 / (pc * pc * phi2);
        let mut c = vec![Vec::new(); k_max + 1];
        for (k, row) in c.iter_mut().enumerate().skip(1) {
            *row = vec![0.0; k + 1];
            for j in 1..=k {
                row[j] = pc.powi(k as i32) * composition_sum(&m, k, j);
            }
        }
        Ok(Self {
            mu,
            pc,
            phi2,
            lambda,
            m,
            c,
            k_max,
        })
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    /// `E[binom(Z, r)]`.
    pub fn m_factorial(&self, r: usize) -> f64 {
        self.m[r]
    }

    /// Composition coefficient `c_{k,j}`.
    pub fn comp_coeff(&self, k: usize, j: usize) -> f64 {
        self.c[k][j]
    }
}

/// `binom(n, r)` as a float; exact for the small `r` used here.
pub(crate) fn binom_f64(n: u64, r: usize) -> f64 {
    if (r as u64) > n {
        return 0.0;
    }
    let mut acc = 1.0;
    for i in 0..r as u64 {
        acc *= (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

/// Sum over ordered `j`-tuples of positive integers summing to `k` of the
/// product of `m`-values. Direct recursion; the composition sets are tiny.
fn composition_sum(m: &[f64], k: usize, j: usize) -> f64 {
    if j == 0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    if k < j {
        return 0.0;
    }
    let mut total = 0.0;
    for a in 1..=(k - j + 1) {
        total += m[a] * composition_sum(m, k - a, j - 1);
    }
    total
}

/// The law of `Bin(Z, p_c)`; support starts at 0, mean is 1.
#[derive(Clone, Debug)]
pub struct AnnealedOffspring {
    /// `pmf[j] = P[Bin(Z, pc) = j]`.
    pmf: Vec<f64>,
}

impl AnnealedOffspring {
    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    pub fn mean(&self) -> f64 {
        self.pmf
            .iter()
            .enumerate()
            .map(|(j, p)| j as f64 * p)
            .sum()
    }

    pub fn pgf(&self, s: f64) -> f64 {
        let mut acc = 0.0;
        let mut pow = 1.0;
        for &p in &self.pmf {
            acc += p * pow;
            pow *= s;
        }
        acc
    }
}
