//! Distance functions between sampler states and their evaluation over the
//! unique pool.
//!
//! None of these are required to be metrics. The Metropolis-Hastings distance
//! in particular can give a state a nonzero distance to itself, so nothing
//! here or downstream assumes `d(x, x) == 0`.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::state::{BinaryMatrix, DrawState};

/// Log of an (unnormalized) target density. Must return a finite value or
/// negative infinity; NaN is treated as an evaluation error.
pub trait LogDensity: Send + Sync {
    fn log_density(&self, x: &DrawState) -> f64;
}

/// Log of a proposal density `Q(to | from)` together with its per-state
/// maximum `Q*(from) = max_y Q(y | from)`.
pub trait LogProposal: Send + Sync {
    fn log_q(&self, from: &DrawState, to: &DrawState) -> f64;
    fn log_q_star(&self, from: &DrawState) -> f64;
}

/// A user-supplied distance on states.
pub trait StateDistance: Send + Sync {
    fn distance(&self, a: &DrawState, b: &DrawState) -> Result<f64>;

    fn name(&self) -> &str {
        "custom"
    }
}

#[derive(Clone)]
pub enum DistanceSpec {
    Euclidean,
    /// Entry-wise Hamming distance. Partitions are compared through their
    /// co-association matrices.
    Hamming,
    MetropolisHastings {
        target: Arc<dyn LogDensity>,
        proposal: Arc<dyn LogProposal>,
    },
    /// Precomputed distances indexed by pool position.
    UserTable(Arc<PairwiseDistanceMatrix>),
    Custom(Arc<dyn StateDistance>),
}

impl fmt::Debug for DistanceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl DistanceSpec {
    pub fn metropolis_hastings(target: impl LogDensity + 'static, proposal: impl LogProposal + 'static) -> Self {
        DistanceSpec::MetropolisHastings {
            target: Arc::new(target),
            proposal: Arc::new(proposal),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DistanceSpec::Euclidean => "euclidean",
            DistanceSpec::Hamming => "hamming",
            DistanceSpec::MetropolisHastings { .. } => "metropolis_hastings",
            DistanceSpec::UserTable(_) => "user_table",
            DistanceSpec::Custom(_) => "custom",
        }
    }

    /// Distance between two arbitrary states. Not available for
    /// [`DistanceSpec::UserTable`], which only knows pool indices.
    pub fn between(&self, a: &DrawState, b: &DrawState) -> Result<f64> {
        match self {
            DistanceSpec::Euclidean => match (a, b) {
                (DrawState::RealVector(x), DrawState::RealVector(y)) => euclidean(x, y),
                _ => Err(unsupported(self, a)),
            },
            DistanceSpec::Hamming => match (a, b) {
                (DrawState::BinaryMatrix(x), DrawState::BinaryMatrix(y)) => hamming(x, y),
                (DrawState::Partition(x), DrawState::Partition(y)) => coassociation_hamming(x, y),
                _ => Err(unsupported(self, a)),
            },
            DistanceSpec::MetropolisHastings { target, proposal } => {
                mh_distance(a, b, target.as_ref(), proposal.as_ref())
            }
            DistanceSpec::UserTable(_) => Err(unsupported(self, a)),
            DistanceSpec::Custom(d) => d.distance(a, b),
        }
    }
}

fn unsupported(spec: &DistanceSpec, state: &DrawState) -> Error {
    Error::UnsupportedDistance {
        distance: spec.name(),
        variant: state.variant_name(),
    }
}

pub fn euclidean(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::ShapeMismatch(format!(
            "euclidean distance between vectors of length {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() == 1 {
        return Ok((x[0] - y[0]).abs());
    }
    Ok(x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
}

/// Number of entries in which two binary matrices differ.
pub fn hamming(a: &BinaryMatrix, b: &BinaryMatrix) -> Result<f64> {
    if a.rows() != b.rows() || a.cols() != b.cols() {
        return Err(Error::ShapeMismatch(format!(
            "hamming distance between {}x{} and {}x{} matrices",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    Ok(a.data().iter().zip(b.data()).filter(|(x, y)| x != y).count() as f64)
}

/// Hamming distance between the co-association matrices of two partitions,
/// computed without materializing either matrix.
pub fn coassociation_hamming(a: &[u32], b: &[u32]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch(format!(
            "partitions over {} and {} observations",
            a.len(),
            b.len()
        )));
    }
    let n = a.len();
    let mut upper = 0usize;
    for i in 0..n {
        for j in (i + 1)..n {
            if (a[i] == a[j]) != (b[i] == b[j]) {
                upper += 1;
            }
        }
    }
    // Off-diagonal disagreements come in symmetric pairs; the diagonal is
    // always 1 in both matrices.
    Ok((2 * upper) as f64)
}

/// Metropolis-Hastings distance between two states.
///
/// `1 - min(a(y -> x), a(x -> y))` where `a(s -> t)` is the acceptance
/// probability of moving from `s` to `t` times `Q(t|s) / Q*(s)`. Everything
/// is summed in log space and exponentiated once.
pub fn mh_distance(x: &DrawState, y: &DrawState, target: &dyn LogDensity, proposal: &dyn LogProposal) -> Result<f64> {
    mh_from_logs(
        MhLogs {
            log_p: target.log_density(x),
            log_q_star: proposal.log_q_star(x),
        },
        MhLogs {
            log_p: target.log_density(y),
            log_q_star: proposal.log_q_star(y),
        },
        proposal.log_q(y, x),
        proposal.log_q(x, y),
    )
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct MhLogs {
    log_p: f64,
    log_q_star: f64,
}

/// Log pseudo-probability of moving `from -> to`.
fn log_move_weight(to: MhLogs, from: MhLogs, log_q_to_given_from: f64) -> f64 {
    if to.log_p == f64::NEG_INFINITY || log_q_to_given_from == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    // from.log_p may be -inf here, in which case the ratio is +inf and the
    // acceptance term saturates at 0.
    let log_accept = (to.log_p - from.log_p).min(0.0);
    log_accept + (log_q_to_given_from - from.log_q_star)
}

pub(crate) fn mh_from_logs(x: MhLogs, y: MhLogs, log_q_x_given_y: f64, log_q_y_given_x: f64) -> Result<f64> {
    if x.log_p == f64::NEG_INFINITY && y.log_p == f64::NEG_INFINITY {
        return Err(Error::UndefinedRatio);
    }
    let inputs = [
        x.log_p,
        y.log_p,
        x.log_q_star,
        y.log_q_star,
        log_q_x_given_y,
        log_q_y_given_x,
    ];
    if inputs.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
        return Err(Error::InvalidParameter(
            "log density or log proposal evaluated to NaN or +inf".into(),
        ));
    }
    let to_x = log_move_weight(x, y, log_q_x_given_y);
    let to_y = log_move_weight(y, x, log_q_y_given_x);
    let w = to_x.min(to_y).exp();
    Ok((1.0 - w).clamp(0.0, 1.0))
}

/// Symmetric distances cached for all pairs of pool indices, stored as a
/// packed upper triangle including the diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseDistanceMatrix {
    n: usize,
    packed: Vec<f64>,
}

impl PairwiseDistanceMatrix {
    fn offset(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        i * (2 * self.n - i + 1) / 2 + (j - i)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.packed[self.offset(i, j)]
    }

    /// Builds a matrix from a full `n x n` table, rejecting asymmetric,
    /// negative, or non-finite entries.
    pub fn from_full(n: usize, values: &[f64]) -> Result<Self> {
        if values.len() != n * n {
            return Err(Error::ShapeMismatch(format!(
                "{n}x{n} distance table needs {} values, got {}",
                n * n,
                values.len()
            )));
        }
        let mut packed = Vec::with_capacity(n * (n + 1) / 2);
        for i in 0..n {
            for j in i..n {
                let v = values[i * n + j];
                check_table_value(i, j, v)?;
                if values[j * n + i] != v {
                    return Err(Error::InvalidParameter(format!(
                        "distance table is not symmetric at ({i}, {j})"
                    )));
                }
                packed.push(v);
            }
        }
        Ok(Self { n, packed })
    }

    /// Builds a matrix from `(i, j, distance)` triples. Every unordered
    /// off-diagonal pair must be present; missing diagonal entries are 0.
    pub fn from_triples(n: usize, triples: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyInput("distance table has no states".into()));
        }
        let mut packed: Vec<Option<f64>> = vec![None; n * (n + 1) / 2];
        let mut m = Self { n, packed: Vec::new() };
        for (i, j, v) in triples {
            if i >= n || j >= n {
                return Err(Error::InvalidParameter(format!(
                    "pool index pair ({i}, {j}) out of range for {n} states"
                )));
            }
            check_table_value(i, j, v)?;
            let slot = &mut packed[m.offset(i, j)];
            match slot {
                Some(old) if *old != v => {
                    return Err(Error::InvalidParameter(format!(
                        "conflicting distances for pair ({i}, {j}): {old} and {v}"
                    )))
                }
                _ => *slot = Some(v),
            }
        }
        let mut out = Vec::with_capacity(packed.len());
        for i in 0..n {
            for j in i..n {
                match packed[m.offset(i, j)] {
                    Some(v) => out.push(v),
                    None if i == j => out.push(0.0),
                    None => {
                        return Err(Error::InvalidParameter(format!(
                            "distance table is missing pair ({i}, {j})"
                        )))
                    }
                }
            }
        }
        m.packed = out;
        Ok(m)
    }
}

fn check_table_value(i: usize, j: usize, v: f64) -> Result<()> {
    if !v.is_finite() || v < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "distance for pair ({i}, {j}) must be finite and nonnegative, got {v}"
        )));
    }
    Ok(())
}

/// Random access to distances between pool members.
pub trait PoolDistances: Sync {
    fn n(&self) -> usize;
    fn dist(&self, i: usize, j: usize) -> Result<f64>;
}

impl PoolDistances for PairwiseDistanceMatrix {
    fn n(&self) -> usize {
        self.n
    }

    fn dist(&self, i: usize, j: usize) -> Result<f64> {
        Ok(self.get(i, j))
    }
}

enum Prepared<'a> {
    Plain,
    /// Bit-packed matrices or co-association matrices; Hamming is a popcount.
    Packed(Vec<Vec<u64>>),
    Mh {
        logs: Vec<MhLogs>,
        proposal: &'a dyn LogProposal,
    },
    Table(&'a PairwiseDistanceMatrix),
}

/// A distance bound to a pool, with per-state work (bit packing, target and
/// `Q*` evaluations) done once up front. Pairs are evaluated on demand.
pub struct PoolMetric<'a> {
    pool: &'a [DrawState],
    spec: &'a DistanceSpec,
    prepared: Prepared<'a>,
}

impl<'a> PoolMetric<'a> {
    pub fn new(pool: &'a [DrawState], spec: &'a DistanceSpec) -> Result<Self> {
        let first = pool.first().ok_or_else(|| Error::EmptyInput("empty pool".into()))?;
        let prepared = match spec {
            DistanceSpec::Euclidean => {
                if !matches!(first, DrawState::RealVector(_)) {
                    return Err(unsupported(spec, first));
                }
                Prepared::Plain
            }
            DistanceSpec::Hamming => Prepared::Packed(
                pool.par_iter()
                    .map(|s| match s {
                        DrawState::BinaryMatrix(m) => Ok(pack_bits(m.data().iter().map(|&b| b == 1))),
                        DrawState::Partition(p) => Ok(pack_bits(p.iter().flat_map(|a| p.iter().map(move |b| a == b)))),
                        other => Err(unsupported(spec, other)),
                    })
                    .collect::<Result<_>>()?,
            ),
            DistanceSpec::MetropolisHastings { target, proposal } => Prepared::Mh {
                logs: pool
                    .par_iter()
                    .map(|s| MhLogs {
                        log_p: target.log_density(s),
                        log_q_star: proposal.log_q_star(s),
                    })
                    .collect(),
                proposal: proposal.as_ref(),
            },
            DistanceSpec::UserTable(t) => {
                if t.len() != pool.len() {
                    return Err(Error::ShapeMismatch(format!(
                        "distance table covers {} states but the pool has {}",
                        t.len(),
                        pool.len()
                    )));
                }
                Prepared::Table(t.as_ref())
            }
            DistanceSpec::Custom(_) => Prepared::Plain,
        };
        Ok(Self { pool, spec, prepared })
    }

    fn eval(&self, i: usize, j: usize) -> Result<f64> {
        match &self.prepared {
            Prepared::Plain => self.spec.between(&self.pool[i], &self.pool[j]),
            Prepared::Packed(bits) => Ok(bits[i]
                .iter()
                .zip(&bits[j])
                .map(|(a, b)| (a ^ b).count_ones() as u64)
                .sum::<u64>() as f64),
            Prepared::Mh { logs, proposal } => mh_from_logs(
                logs[i],
                logs[j],
                proposal.log_q(&self.pool[j], &self.pool[i]),
                proposal.log_q(&self.pool[i], &self.pool[j]),
            ),
            Prepared::Table(t) => Ok(t.get(i, j)),
        }
    }

    /// Distance from pool member `i` to an arbitrary state.
    pub fn to_state(&self, i: usize, state: &DrawState) -> Result<f64> {
        match &self.prepared {
            Prepared::Table(_) => Err(unsupported(self.spec, state)),
            _ => self.spec.between(&self.pool[i], state),
        }
    }
}

impl PoolDistances for PoolMetric<'_> {
    fn n(&self) -> usize {
        self.pool.len()
    }

    fn dist(&self, i: usize, j: usize) -> Result<f64> {
        self.eval(i, j).map_err(|e| Error::PairDistance {
            i,
            j,
            cause: Box::new(e),
        })
    }
}

fn pack_bits(bits: impl Iterator<Item = bool>) -> Vec<u64> {
    let mut out = Vec::new();
    for (k, b) in bits.enumerate() {
        if k % 64 == 0 {
            out.push(0u64);
        }
        if b {
            *out.last_mut().unwrap() |= 1u64 << (k % 64);
        }
    }
    out
}

/// Evaluates `d` on every unordered pair of pool states (diagonal included),
/// in parallel across rows.
pub fn pairwise_matrix(pool: &[DrawState], d: &DistanceSpec) -> Result<PairwiseDistanceMatrix> {
    let metric = PoolMetric::new(pool, d)?;
    pairwise_from(&metric)
}

pub fn pairwise_from(metric: &dyn PoolDistances) -> Result<PairwiseDistanceMatrix> {
    let n = metric.n();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| (i..n).map(|j| metric.dist(i, j)).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    Ok(PairwiseDistanceMatrix {
        n,
        packed: rows.into_iter().flatten().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::{GaussianMixture1D, ProposalFamily};
    use crate::state::coassociation;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn s(x: f64) -> DrawState {
        DrawState::scalar(x)
    }

    fn bm(rows: usize, cols: usize, data: &[u8]) -> BinaryMatrix {
        BinaryMatrix::new(rows, cols, data.to_vec()).unwrap()
    }

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> BinaryMatrix {
        bm(r, c, &(0..r * c).map(|_| rng.gen_range(0..2)).collect::<Vec<u8>>())
    }

    #[test]
    fn euclidean_examples() {
        assert_eq!(euclidean(&[0.0], &[0.0]).unwrap(), 0.0);
        assert_eq!(euclidean(&[-3.0], &[3.0]).unwrap(), 6.0);
        assert_eq!(euclidean(&[1.0, 2.0, 3.0], &[4.0, 6.0, 3.0]).unwrap(), 5.0);
        assert!(matches!(euclidean(&[1.0], &[1.0, 2.0]), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn hamming_examples() {
        let a = bm(2, 2, &[0, 1, 1, 0]);
        assert_eq!(hamming(&a, &a).unwrap(), 0.0);
        assert_eq!(hamming(&a, &bm(2, 2, &[1, 1, 1, 0])).unwrap(), 1.0);
        assert!(matches!(
            hamming(&a, &bm(1, 4, &[0, 1, 1, 0])),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn hamming_matches_xor_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let a = random_matrix(&mut rng, 15, 15);
            let b = random_matrix(&mut rng, 15, 15);
            let mut count = 0;
            for r in 0..15 {
                for c in 0..15 {
                    count += (a.get(r, c) ^ b.get(r, c)) as usize;
                }
            }
            assert_eq!(hamming(&a, &b).unwrap(), count as f64);
        }
    }

    #[test]
    fn partition_hamming_equals_matrix_hamming() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            let a: Vec<u32> = (0..9).map(|_| rng.gen_range(0..3)).collect();
            let b: Vec<u32> = (0..9).map(|_| rng.gen_range(0..4)).collect();
            let direct = hamming(&coassociation(&a), &coassociation(&b)).unwrap();
            assert_eq!(coassociation_hamming(&a, &b).unwrap(), direct);
        }
    }

    #[test]
    fn packed_pool_hamming_matches_direct() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pool: Vec<DrawState> = (0..20)
            .map(|_| DrawState::BinaryMatrix(random_matrix(&mut rng, 9, 11)))
            .collect();
        let m = pairwise_matrix(&pool, &DistanceSpec::Hamming).unwrap();
        for i in 0..20 {
            for j in 0..20 {
                assert_eq!(m.get(i, j), DistanceSpec::Hamming.between(&pool[i], &pool[j]).unwrap());
            }
        }
        let parts: Vec<DrawState> = (0..20)
            .map(|_| DrawState::Partition((0..13).map(|_| rng.gen_range(0..3)).collect()))
            .collect();
        let m = pairwise_matrix(&parts, &DistanceSpec::Hamming).unwrap();
        for i in 0..20 {
            for j in 0..20 {
                assert_eq!(
                    m.get(i, j),
                    DistanceSpec::Hamming.between(&parts[i], &parts[j]).unwrap()
                );
            }
        }
    }

    fn x3() -> GaussianMixture1D {
        GaussianMixture1D::new(vec![1.0 / 3.0; 3], vec![-3.0, 0.0, 3.0], vec![0.1; 3]).unwrap()
    }

    #[test]
    fn mh_self_distance_zero_for_random_walk() {
        let rw = ProposalFamily::RandomWalk { sd: 1.0 };
        for x in [-3.0, 0.0, 1.7] {
            assert_eq!(mh_distance(&s(x), &s(x), &x3(), &rw).unwrap(), 0.0);
        }
    }

    // Closed-form distance evaluated independently of the trait plumbing,
    // straight from the defining expression with the densities written out.
    fn scripted_mh(x: f64, y: f64, log_q: &dyn Fn(f64, f64) -> f64, log_q_star: &dyn Fn(f64) -> f64) -> f64 {
        let log_p = |v: f64| {
            let terms: Vec<f64> = [-3.0, 0.0, 3.0]
                .iter()
                .map(|m: &f64| -(v - m).powi(2) / (2.0 * 0.01))
                .collect();
            let hi = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            hi + terms.iter().map(|t| (t - hi).exp()).sum::<f64>().ln()
        };
        let a = (log_p(x) - log_p(y)).min(0.0) + log_q(y, x) - log_q_star(y);
        let b = (log_p(y) - log_p(x)).min(0.0) + log_q(x, y) - log_q_star(x);
        1.0 - a.min(b).exp()
    }

    fn norm_lpdf(z: f64, sd: f64) -> f64 {
        -0.5 * (z / sd).powi(2) - sd.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
    }

    #[test]
    fn random_walk_ranks_centre_mode_nearer() {
        let rw = ProposalFamily::RandomWalk { sd: 1.0 };
        let near = mh_distance(&s(-3.0), &s(0.0), &x3(), &rw).unwrap();
        let far = mh_distance(&s(-3.0), &s(3.0), &x3(), &rw).unwrap();
        assert!(near < far, "{near} vs {far}");

        let lq = |from: f64, to: f64| norm_lpdf(to - from, 1.0);
        let lqs = |_: f64| norm_lpdf(0.0, 1.0);
        assert!((near - scripted_mh(-3.0, 0.0, &lq, &lqs)).abs() < 1e-12);
        assert!((far - scripted_mh(-3.0, 3.0, &lq, &lqs)).abs() < 1e-12);
    }

    #[test]
    fn reflect_mixture_ranks_opposite_mode_nearer() {
        let refl = ProposalFamily::ReflectMixture { sd: 0.1 };
        let to_centre = mh_distance(&s(-3.0), &s(0.0), &x3(), &refl).unwrap();
        let to_opposite = mh_distance(&s(-3.0), &s(3.0), &x3(), &refl).unwrap();
        assert!(to_opposite < to_centre, "{to_opposite} vs {to_centre}");

        // Q*(x) for well-separated components is the density at x.
        let lq = |from: f64, to: f64| {
            let a = (0.5f64).ln() + norm_lpdf(to - from, 0.1);
            let b = (0.5f64).ln() + norm_lpdf(to + from, 0.1);
            let hi = a.max(b);
            hi + ((a - hi).exp() + (b - hi).exp()).ln()
        };
        let lqs = |x: f64| lq(x, x);
        assert!((to_opposite - scripted_mh(-3.0, 3.0, &lq, &lqs)).abs() < 1e-9);
        assert!((to_centre - scripted_mh(-3.0, 0.0, &lq, &lqs)).abs() < 1e-9);
    }

    #[test]
    fn both_zero_density_is_undefined() {
        struct Zero;
        impl LogDensity for Zero {
            fn log_density(&self, _: &DrawState) -> f64 {
                f64::NEG_INFINITY
            }
        }
        let rw = ProposalFamily::RandomWalk { sd: 1.0 };
        assert_eq!(mh_distance(&s(0.0), &s(1.0), &Zero, &rw), Err(Error::UndefinedRatio));
    }

    #[test]
    fn one_zero_density_is_maximal_distance() {
        struct Half;
        impl LogDensity for Half {
            fn log_density(&self, x: &DrawState) -> f64 {
                if x.as_scalar().unwrap() < 0.0 {
                    f64::NEG_INFINITY
                } else {
                    0.0
                }
            }
        }
        let rw = ProposalFamily::RandomWalk { sd: 1.0 };
        assert_eq!(mh_distance(&s(-0.1), &s(0.1), &Half, &rw).unwrap(), 1.0);
    }

    #[test]
    fn extreme_density_ratios_stay_finite() {
        // Ratios far below the smallest normal double.
        let g = GaussianMixture1D::new(vec![1.0], vec![0.0], vec![0.01]).unwrap();
        let rw = ProposalFamily::RandomWalk { sd: 1.0 };
        for y in [0.5, 1.0, 3.0, 30.0] {
            let d = mh_distance(&s(0.0), &s(y), &g, &rw).unwrap();
            assert!(d.is_finite() && (0.0..=1.0).contains(&d));
        }
    }

    #[test]
    fn monotone_in_separation_under_flat_target() {
        struct Flat;
        impl LogDensity for Flat {
            fn log_density(&self, _: &DrawState) -> f64 {
                0.0
            }
        }
        let rw = ProposalFamily::RandomWalk { sd: 0.7 };
        let mut prev = -1.0;
        for k in 0..50 {
            let d = mh_distance(&s(0.0), &s(k as f64 * 0.05), &Flat, &rw).unwrap();
            assert!(d >= prev);
            prev = d;
        }
    }

    #[test]
    fn pool_of_one() {
        let m = pairwise_matrix(&[s(2.0)], &DistanceSpec::Euclidean).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m.get(0, 0), 0.0);
    }

    #[test]
    fn pool_of_three_off_diagonals() {
        let m = pairwise_matrix(&[s(-3.0), s(0.0), s(3.0)], &DistanceSpec::Euclidean).unwrap();
        assert_eq!((m.get(0, 1), m.get(0, 2), m.get(1, 2)), (3.0, 6.0, 3.0));
    }

    #[test]
    fn cached_matrix_matches_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let pool: Vec<DrawState> = (0..50).map(|_| s(rng.gen_range(-5.0..5.0))).collect();
        let specs = [
            DistanceSpec::Euclidean,
            DistanceSpec::metropolis_hastings(x3(), ProposalFamily::ReflectMixture { sd: 0.1 }),
            DistanceSpec::metropolis_hastings(x3(), ProposalFamily::RandomWalk { sd: 1.0 }),
        ];
        for spec in &specs {
            let m = pairwise_matrix(&pool, spec).unwrap();
            for i in 0..50 {
                for j in 0..50 {
                    assert_eq!(m.get(i, j), spec.between(&pool[i], &pool[j]).unwrap(), "{spec:?}");
                    assert_eq!(m.get(i, j), m.get(j, i));
                }
            }
        }
    }

    #[test]
    fn pair_errors_carry_indices() {
        let pool = vec![s(0.0), DrawState::Partition(vec![0, 1])];
        let err = pairwise_matrix(&pool, &DistanceSpec::Euclidean).unwrap_err();
        assert!(matches!(err, Error::PairDistance { i: 0, j: 1, .. }), "{err:?}");
    }

    #[test]
    fn hamming_rejects_real_states() {
        let err = pairwise_matrix(&[s(0.0)], &DistanceSpec::Hamming).unwrap_err();
        assert!(matches!(err, Error::UnsupportedDistance { .. }));
    }

    #[test]
    fn table_from_triples() {
        let t = PairwiseDistanceMatrix::from_triples(3, [(0, 1, 1.0), (2, 0, 4.0), (1, 2, 2.5)]).unwrap();
        assert_eq!(t.get(1, 0), 1.0);
        assert_eq!(t.get(0, 2), 4.0);
        assert_eq!(t.get(2, 2), 0.0);
        assert!(PairwiseDistanceMatrix::from_triples(3, [(0, 1, 1.0), (1, 2, 2.5)]).is_err());
        assert!(PairwiseDistanceMatrix::from_triples(2, [(0, 1, 1.0), (1, 0, 2.0)]).is_err());
        assert!(PairwiseDistanceMatrix::from_triples(2, [(0, 1, -1.0)]).is_err());
        assert!(PairwiseDistanceMatrix::from_triples(2, [(0, 5, 1.0)]).is_err());
    }

    proptest! {
        #[test]
        fn mh_distance_symmetric_and_bounded(x in -8.0f64..8.0, y in -8.0f64..8.0, reflect in any::<bool>()) {
            let q = if reflect { ProposalFamily::ReflectMixture { sd: 0.1 } } else { ProposalFamily::RandomWalk { sd: 1.0 } };
            let a = mh_distance(&s(x), &s(y), &x3(), &q).unwrap();
            let b = mh_distance(&s(y), &s(x), &x3(), &q).unwrap();
            prop_assert_eq!(a.to_bits(), b.to_bits());
            prop_assert!((0.0..=1.0).contains(&a));
        }

        #[test]
        fn hamming_identity_and_triangle(seed in any::<u64>(), r in 1usize..6, c in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_matrix(&mut rng, r, c);
            let b = random_matrix(&mut rng, r, c);
            let e = random_matrix(&mut rng, r, c);
            let ab = hamming(&a, &b).unwrap();
            prop_assert_eq!(ab == 0.0, a == b);
            prop_assert!(ab <= hamming(&a, &e).unwrap() + hamming(&e, &b).unwrap());
        }
    }
}
