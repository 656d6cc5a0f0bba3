//! Seeded Metropolis-Hastings runs for one-dimensional mixture targets,
//! synthetic binary-matrix and partition chains, and a binned KL divergence.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distance::{LogDensity, LogProposal};
use crate::error::{Error, Result};
use crate::state::{build_chain_set, BinaryMatrix, Chain, ChainSet, DrawState};

/// Generator used for every simulated chain. Chain `i` of a run seeded with
/// `s` draws from `ChaCha8Rng::seed_from_u64(s)` on stream `i`.
pub const RNG_ALGORITHM: &str = "ChaCha8Rng (rand_chacha 0.3), seed_from_u64(seed), stream = chain index";

fn normal_log_pdf(z: f64, sd: f64) -> f64 {
    -0.5 * (z / sd) * (z / sd) - sd.ln() - 0.5 * (2.0 * PI).ln()
}

fn log_sum_exp(terms: impl Iterator<Item = f64> + Clone) -> f64 {
    let hi = terms.clone().fold(f64::NEG_INFINITY, f64::max);
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    hi + terms.map(|t| (t - hi).exp()).sum::<f64>().ln()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MixtureWire")]
pub struct GaussianMixture1D {
    weights: Vec<f64>,
    means: Vec<f64>,
    sds: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MixtureWire {
    weights: Vec<f64>,
    means: Vec<f64>,
    sds: Vec<f64>,
}

impl TryFrom<MixtureWire> for GaussianMixture1D {
    type Error = Error;

    fn try_from(w: MixtureWire) -> Result<Self> {
        Self::new(w.weights, w.means, w.sds)
    }
}

impl GaussianMixture1D {
    pub fn new(weights: Vec<f64>, means: Vec<f64>, sds: Vec<f64>) -> Result<Self> {
        if weights.is_empty() || weights.len() != means.len() || weights.len() != sds.len() {
            return Err(Error::InvalidParameter(
                "mixture needs equally many weights, means and sds (at least one)".into(),
            ));
        }
        if weights.iter().any(|w| !w.is_finite() || *w <= 0.0) {
            return Err(Error::InvalidParameter("mixture weights must be positive".into()));
        }
        if sds.iter().any(|s| !s.is_finite() || *s <= 0.0) {
            return Err(Error::InvalidParameter("mixture sds must be positive".into()));
        }
        if means.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidParameter("mixture means must be finite".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "mixture weights sum to {total}, not 1"
            )));
        }
        Ok(Self { weights, means, sds })
    }

    /// Three equal-weight components at -3, 0, 3 with sd 0.1.
    pub fn trimodal() -> Self {
        Self::new(vec![1.0 / 3.0; 3], vec![-3.0, 0.0, 3.0], vec![0.1; 3]).unwrap()
    }

    /// Two equal-weight components at -3 and 3 with sd 1.
    pub fn bimodal() -> Self {
        Self::new(vec![0.5; 2], vec![-3.0, 3.0], vec![1.0; 2]).unwrap()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn sds(&self) -> &[f64] {
        &self.sds
    }

    pub fn log_pdf(&self, x: f64) -> f64 {
        log_sum_exp(
            self.weights
                .iter()
                .zip(&self.means)
                .zip(&self.sds)
                .map(move |((w, m), s)| w.ln() + normal_log_pdf(x - m, *s)),
        )
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.weights
            .iter()
            .zip(&self.means)
            .zip(&self.sds)
            .map(|((w, m), s)| w * 0.5 * libm::erfc(-(x - m) / (s * std::f64::consts::SQRT_2)))
            .sum()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut k = self.weights.len() - 1;
        for (i, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                k = i;
                break;
            }
        }
        let z: f64 = rng.sample(StandardNormal);
        self.means[k] + self.sds[k] * z
    }
}

impl LogDensity for GaussianMixture1D {
    fn log_density(&self, x: &DrawState) -> f64 {
        x.as_scalar().map_or(f64::NAN, |v| self.log_pdf(v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProposalFamily {
    /// `N(x, sd^2)`.
    RandomWalk { sd: f64 },
    /// `0.5 N(x, sd^2) + 0.5 N(-x, sd^2)`.
    ReflectMixture { sd: f64 },
}

impl ProposalFamily {
    pub fn sd(&self) -> f64 {
        match *self {
            ProposalFamily::RandomWalk { sd } | ProposalFamily::ReflectMixture { sd } => sd,
        }
    }

    fn validate(&self) -> Result<()> {
        let sd = self.sd();
        if !sd.is_finite() || sd <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "proposal sd must be positive, got {sd}"
            )));
        }
        Ok(())
    }

    pub fn propose<R: Rng + ?Sized>(&self, x: f64, rng: &mut R) -> f64 {
        match *self {
            ProposalFamily::RandomWalk { sd } => x + sd * rng.sample::<f64, _>(StandardNormal),
            ProposalFamily::ReflectMixture { sd } => {
                let centre = if rng.gen::<bool>() { x } else { -x };
                centre + sd * rng.sample::<f64, _>(StandardNormal)
            }
        }
    }

    pub fn log_q_scalar(&self, from: f64, to: f64) -> f64 {
        match *self {
            ProposalFamily::RandomWalk { sd } => normal_log_pdf(to - from, sd),
            ProposalFamily::ReflectMixture { sd } => {
                let half = 0.5f64.ln();
                let a = half + normal_log_pdf(to - from, sd);
                let b = half + normal_log_pdf(to + from, sd);
                log_sum_exp([a, b].into_iter())
            }
        }
    }

    /// `log max_y Q(y | from)`.
    pub fn log_q_star_scalar(&self, from: f64) -> f64 {
        match *self {
            ProposalFamily::RandomWalk { sd } => normal_log_pdf(0.0, sd),
            ProposalFamily::ReflectMixture { .. } => {
                // The mixture is even in y and has at most one mode on y >= 0,
                // lying in [0, |from|]. Compare the component centres and 0,
                // then refine by golden-section search on that interval.
                let a = from.abs();
                let f = |y: f64| self.log_q_scalar(from, y);
                let mut best = f(a).max(f(0.0));
                let (mut lo, mut hi) = (0.0, a);
                let g = 0.5 * (5f64.sqrt() - 1.0);
                let mut c = hi - g * (hi - lo);
                let mut d = lo + g * (hi - lo);
                let (mut fc, mut fd) = (f(c), f(d));
                for _ in 0..80 {
                    if fc >= fd {
                        hi = d;
                        d = c;
                        fd = fc;
                        c = hi - g * (hi - lo);
                        fc = f(c);
                    } else {
                        lo = c;
                        c = d;
                        fc = fd;
                        d = lo + g * (hi - lo);
                        fd = f(d);
                    }
                }
                best = best.max(fc).max(fd);
                best
            }
        }
    }
}

impl LogProposal for ProposalFamily {
    fn log_q(&self, from: &DrawState, to: &DrawState) -> f64 {
        match (from.as_scalar(), to.as_scalar()) {
            (Some(f), Some(t)) => self.log_q_scalar(f, t),
            _ => f64::NAN,
        }
    }

    fn log_q_star(&self, from: &DrawState) -> f64 {
        from.as_scalar().map_or(f64::NAN, |f| self.log_q_star_scalar(f))
    }
}

/// Wraps a one-dimensional log proposal density whose maximum has no closed
/// form; `Q*` is found by scanning a fixed grid over `[lo, hi]`.
pub struct GridSearchProposal<F> {
    log_q: F,
    lo: f64,
    hi: f64,
    points: usize,
}

impl<F: Fn(f64, f64) -> f64 + Send + Sync> GridSearchProposal<F> {
    pub const DEFAULT_POINTS: usize = 10_000;

    pub fn new(log_q: F, lo: f64, hi: f64) -> Result<Self> {
        if !lo.is_finite() || !hi.is_finite() || lo >= hi {
            return Err(Error::InvalidParameter(format!("grid bounds [{lo}, {hi}] are invalid")));
        }
        Ok(Self {
            log_q,
            lo,
            hi,
            points: Self::DEFAULT_POINTS,
        })
    }

    fn star(&self, from: f64) -> f64 {
        let step = (self.hi - self.lo) / (self.points - 1) as f64;
        (0..self.points)
            .map(|i| (self.log_q)(from, self.lo + i as f64 * step))
            // Evaluating at `from` keeps Q(x|x) <= Q*(x) for mode-at-current proposals.
            .chain(std::iter::once((self.log_q)(from, from)))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

impl<F: Fn(f64, f64) -> f64 + Send + Sync> LogProposal for GridSearchProposal<F> {
    fn log_q(&self, from: &DrawState, to: &DrawState) -> f64 {
        match (from.as_scalar(), to.as_scalar()) {
            (Some(f), Some(t)) => (self.log_q)(f, t),
            _ => f64::NAN,
        }
    }

    fn log_q_star(&self, from: &DrawState) -> f64 {
        from.as_scalar().map_or(f64::NAN, |f| self.star(f))
    }
}

/// A reproducible sampler run: one chain per start, `n_iter` draws each
/// (the start counts as the first draw).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    pub target: GaussianMixture1D,
    pub proposal: ProposalFamily,
    pub starts: Vec<f64>,
    pub n_iter: usize,
    pub seed: u64,
}

pub const DEFAULT_STARTS: [f64; 7] = [-6.0, -4.0, -2.0, 0.0, 2.0, 4.0, 6.0];
pub const DEFAULT_ITERS: usize = 2000;

pub const BUILTIN_SCENARIOS: [&str; 4] = ["m1", "m2", "m3", "m4"];

impl ScenarioSpec {
    /// The four univariate case studies: `m1`/`m2` on the tri-modal target,
    /// `m3`/`m4` on the bi-modal target.
    pub fn builtin(name: &str, seed: u64) -> Option<Self> {
        let (target, proposal) = match name {
            "m1" => (GaussianMixture1D::trimodal(), ProposalFamily::RandomWalk { sd: 1.0 }),
            "m2" => (
                GaussianMixture1D::trimodal(),
                ProposalFamily::ReflectMixture { sd: 0.1 },
            ),
            "m3" => (GaussianMixture1D::bimodal(), ProposalFamily::RandomWalk { sd: 0.1 }),
            "m4" => (GaussianMixture1D::bimodal(), ProposalFamily::RandomWalk { sd: 2.0 }),
            _ => return None,
        };
        Some(Self {
            name: name.to_string(),
            target,
            proposal,
            starts: DEFAULT_STARTS.to_vec(),
            n_iter: DEFAULT_ITERS,
            seed,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.proposal.validate()?;
        if self.starts.is_empty() {
            return Err(Error::EmptyInput("scenario has no starting points".into()));
        }
        if let Some(s) = self.starts.iter().find(|s| !s.is_finite()) {
            return Err(Error::InvalidParameter(format!("start {s} is not finite")));
        }
        if self.n_iter < 2 {
            return Err(Error::TooFew {
                what: "iterations",
                needed: 2,
                got: self.n_iter,
            });
        }
        Ok(())
    }
}

pub(crate) fn chain_rng(seed: u64, chain: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain as u64);
    rng
}

/// One chain of raw draws. Acceptance uses the target ratio only, which is
/// exact for both shipped proposal families since each is symmetric in its
/// two arguments.
pub fn mh_chain(spec: &ScenarioSpec, chain: usize) -> Vec<f64> {
    let mut rng = chain_rng(spec.seed, chain);
    let mut x = spec.starts[chain];
    let mut log_px = spec.target.log_pdf(x);
    let mut out = Vec::with_capacity(spec.n_iter);
    out.push(x);
    for _ in 1..spec.n_iter {
        let y = spec.proposal.propose(x, &mut rng);
        let log_py = spec.target.log_pdf(y);
        let log_alpha = (log_py - log_px).min(0.0);
        let u: f64 = rng.gen();
        if u.ln() <= log_alpha {
            x = y;
            log_px = log_py;
        }
        out.push(x);
    }
    out
}

pub fn mh_run(spec: &ScenarioSpec) -> Result<ChainSet> {
    spec.validate()?;
    let chains: Vec<Chain> = (0..spec.starts.len())
        .into_par_iter()
        .map(|c| Chain::new(c, mh_chain(spec, c).into_iter().map(DrawState::scalar).collect()))
        .collect();
    build_chain_set(chains)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SyntheticKind {
    /// Each entry flips independently with probability `flip_rate` per step.
    BinaryMatrix { rows: usize, cols: usize, flip_rate: f64 },
    /// Each observation is reassigned to a uniformly drawn cluster with
    /// probability `resample_rate` per step.
    Partition {
        n_obs: usize,
        n_clusters: u32,
        resample_rate: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    #[serde(flatten)]
    pub kind: SyntheticKind,
    pub chains: usize,
    pub n_iter: usize,
    pub seed: u64,
    /// Freeze chain 0 at an extreme state (all-ones matrix, or every
    /// observation in one cluster) for the whole run.
    #[serde(default)]
    pub trapped: bool,
}

fn check_rate(r: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&r) {
        return Err(Error::InvalidParameter(format!("rate {r} outside [0, 1]")));
    }
    Ok(())
}

fn synthetic_chain(spec: &SyntheticSpec, c: usize) -> Vec<DrawState> {
    let mut rng = chain_rng(spec.seed, c);
    let frozen = spec.trapped && c == 0;
    match spec.kind {
        SyntheticKind::BinaryMatrix { rows, cols, flip_rate } => {
            let mut m = if frozen {
                BinaryMatrix::new(rows, cols, vec![1; rows * cols]).unwrap()
            } else {
                BinaryMatrix::new(rows, cols, (0..rows * cols).map(|_| rng.gen_range(0..2)).collect()).unwrap()
            };
            let mut out = Vec::with_capacity(spec.n_iter);
            out.push(DrawState::BinaryMatrix(m.clone()));
            for _ in 1..spec.n_iter {
                if !frozen {
                    for idx in 0..rows * cols {
                        if rng.gen::<f64>() < flip_rate {
                            m.flip(idx);
                        }
                    }
                }
                out.push(DrawState::BinaryMatrix(m.clone()));
            }
            out
        }
        SyntheticKind::Partition {
            n_obs,
            n_clusters,
            resample_rate,
        } => {
            let mut labels: Vec<u32> = if frozen {
                vec![0; n_obs]
            } else {
                (0..n_obs).map(|_| rng.gen_range(0..n_clusters)).collect()
            };
            let mut out = Vec::with_capacity(spec.n_iter);
            out.push(DrawState::Partition(labels.clone()));
            for _ in 1..spec.n_iter {
                if !frozen {
                    for l in labels.iter_mut() {
                        if rng.gen::<f64>() < resample_rate {
                            *l = rng.gen_range(0..n_clusters);
                        }
                    }
                }
                out.push(DrawState::Partition(labels.clone()));
            }
            out
        }
    }
}

pub fn synthetic_discrete_chains(spec: &SyntheticSpec) -> Result<ChainSet> {
    match spec.kind {
        SyntheticKind::BinaryMatrix { rows, cols, flip_rate } => {
            if rows == 0 || cols == 0 {
                return Err(Error::InvalidParameter("matrix dimensions must be positive".into()));
            }
            check_rate(flip_rate)?;
        }
        SyntheticKind::Partition {
            n_obs,
            n_clusters,
            resample_rate,
        } => {
            if n_obs == 0 || n_clusters == 0 {
                return Err(Error::InvalidParameter(
                    "partitions need at least one observation and one cluster".into(),
                ));
            }
            check_rate(resample_rate)?;
        }
    }
    if spec.chains == 0 {
        return Err(Error::EmptyInput("no chains requested".into()));
    }
    let chains: Vec<Chain> = (0..spec.chains)
        .into_par_iter()
        .map(|c| Chain::new(c, synthetic_chain(spec, c)))
        .collect();
    build_chain_set(chains)
}

/// Common binning for [`kl_binned`]: `ceil((hi - lo) / width)` bins of the
/// given width starting at `lo`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bins {
    pub lo: f64,
    pub hi: f64,
    pub width: f64,
}

impl Bins {
    pub fn new(lo: f64, hi: f64, width: f64) -> Result<Self> {
        if !width.is_finite() || width <= 0.0 || !lo.is_finite() || !hi.is_finite() || lo >= hi {
            return Err(Error::InvalidParameter(format!(
                "bad binning: [{lo}, {hi}) with width {width}"
            )));
        }
        Ok(Self { lo, hi, width })
    }

    pub fn count(&self) -> usize {
        ((self.hi - self.lo) / self.width - 1e-9).ceil() as usize
    }

    fn edge(&self, b: usize) -> f64 {
        (self.lo + b as f64 * self.width).min(self.hi)
    }

    fn index(&self, x: f64) -> Option<usize> {
        if !(x >= self.lo && x < self.hi) {
            return None;
        }
        Some((((x - self.lo) / self.width) as usize).min(self.count() - 1))
    }
}

/// Target mass per bin, renormalized over the support. Fails if the support
/// misses more than 1e-6 of the target mass.
pub fn binned_target(target: &GaussianMixture1D, bins: &Bins) -> Result<Vec<f64>> {
    let covered = target.cdf(bins.hi) - target.cdf(bins.lo);
    if covered < 1.0 - 1e-6 {
        return Err(Error::InvalidParameter(format!(
            "support [{}, {}) covers only {covered} of the target mass",
            bins.lo, bins.hi
        )));
    }
    Ok((0..bins.count())
        .map(|b| (target.cdf(bins.edge(b + 1)) - target.cdf(bins.edge(b))).max(0.0) / covered)
        .collect())
}

/// Empirical bin probabilities with one pseudo-count in every empty bin.
pub fn smoothed_histogram(draws: &[f64], bins: &Bins) -> Result<Vec<f64>> {
    let mut counts = vec![0u64; bins.count()];
    for &x in draws {
        if let Some(b) = bins.index(x) {
            counts[b] += 1;
        }
    }
    if counts.iter().all(|&c| c == 0) {
        return Err(Error::EmptyHistogram);
    }
    let adjusted: Vec<f64> = counts.iter().map(|&c| c.max(1) as f64).collect();
    let total: f64 = adjusted.iter().sum();
    Ok(adjusted.into_iter().map(|c| c / total).collect())
}

/// `sum_b p_b ln(p_b / q_b)` over bins with `p_b > 0`.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::ShapeMismatch(format!("{} vs {} bins", p.len(), q.len())));
    }
    let mut kl = 0.0;
    for (&pb, &qb) in p.iter().zip(q) {
        if pb > 0.0 {
            if qb <= 0.0 {
                return Ok(f64::INFINITY);
            }
            kl += pb * (pb / qb).ln();
        }
    }
    Ok(kl.max(0.0))
}

/// KL divergence from the binned target to the smoothed empirical histogram
/// of `draws`.
pub fn kl_binned(target: &GaussianMixture1D, draws: &[f64], bin_width: f64, support: (f64, f64)) -> Result<f64> {
    let bins = Bins::new(support.0, support.1, bin_width)?;
    let p = binned_target(target, &bins)?;
    let q = smoothed_histogram(draws, &bins)?;
    kl_divergence(&p, &q)
}
