//! Maps from the unique pool to the real line.
//!
//! The nearest-neighbour map orders the pool along a greedy travelling
//! salesman tour and assigns each state its distance travelled along the
//! tour from a cut point. The cut point is chosen to minimize the total
//! vertical travel of all chains on the resulting traceplot.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::distance::{DistanceSpec, PoolDistances, PoolMetric};
use crate::error::{Error, Result};
use crate::state::{ChainSet, DrawState};

/// Relative tolerance under which two cut-point objectives count as tied.
pub const CUT_TIE_TOLERANCE: f64 = 1e-9;

/// A closed greedy tour through the pool.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Tour {
    /// Pool indices in visiting order, `ordering[0]` being the start.
    pub ordering: Vec<usize>,
    /// `cumdist[j]`: distance travelled from `ordering[0]` to `ordering[j]`.
    pub cumdist: Vec<f64>,
    /// Total length including the closing edge back to the start.
    pub cycle_length: f64,
}

impl Tour {
    pub fn len(&self) -> usize {
        self.ordering.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ordering.is_empty()
    }

    /// Tour position of every pool index.
    pub fn positions(&self) -> Vec<usize> {
        let mut pos = vec![0; self.ordering.len()];
        for (p, &i) in self.ordering.iter().enumerate() {
            pos[i] = p;
        }
        pos
    }

    /// Distance along the tour from the state at position `m` to the state
    /// at position `j`, walking forward and wrapping through the closing edge.
    pub fn offset(&self, m: usize, j: usize) -> f64 {
        if self.ordering.len() == 1 {
            return 0.0;
        }
        if j >= m {
            self.cumdist[j] - self.cumdist[m]
        } else {
            (self.cycle_length - self.cumdist[m]) + self.cumdist[j]
        }
    }

    /// Values of the map cut before position `m`, indexed by tour position.
    pub fn rotated(&self, m: usize) -> Vec<f64> {
        (0..self.len()).map(|j| self.offset(m, j)).collect()
    }
}

/// Greedy nearest-neighbour tour from `start`. Ties go to the lowest pool
/// index. Self-distances are never used as edges, except that a one-state
/// tour closes on itself.
pub fn nn_tour(d: &(impl PoolDistances + ?Sized), start: usize) -> Result<Tour> {
    let n = d.n();
    if n == 0 {
        return Err(Error::EmptyInput("cannot build a tour over an empty pool".into()));
    }
    if start >= n {
        return Err(Error::InvalidParameter(format!(
            "start index {start} outside pool of {n}"
        )));
    }
    let mut ordering = Vec::with_capacity(n);
    let mut cumdist = Vec::with_capacity(n);
    ordering.push(start);
    cumdist.push(0.0);
    let mut unvisited: Vec<usize> = (0..n).filter(|&i| i != start).collect();
    let mut current = start;
    let mut travelled = 0.0;

    while !unvisited.is_empty() {
        let dists: Vec<f64> = if unvisited.len() > 2048 {
            unvisited
                .par_iter()
                .map(|&j| d.dist(current, j))
                .collect::<Result<_>>()?
        } else {
            unvisited.iter().map(|&j| d.dist(current, j)).collect::<Result<_>>()?
        };
        let mut best = 0;
        for k in 1..dists.len() {
            let better = dists[k] < dists[best] || (dists[k] == dists[best] && unvisited[k] < unvisited[best]);
            if better {
                best = k;
            }
        }
        travelled += dists[best];
        current = unvisited.swap_remove(best);
        ordering.push(current);
        cumdist.push(travelled);
    }
    let closing = d.dist(current, start)?;
    Ok(Tour {
        ordering,
        cumdist,
        cycle_length: travelled + closing,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MapKind {
    Lanfear {
        reference: DrawState,
    },
    NearestNeighbor {
        tour: Tour,
        cut_index: usize,
        /// Total traceplot travel at the chosen cut.
        objective: f64,
    },
}

/// One real value per pool state.
#[derive(Debug, Clone, PartialEq)]
pub struct ProximityMap {
    pub values: Vec<f64>,
    pub kind: MapKind,
}

/// `values[i] = d(pool[i], reference)`, using exactly one distance
/// evaluation per pool state.
pub fn lanfear_map(cs: &ChainSet, d: &DistanceSpec, reference: &DrawState) -> Result<ProximityMap> {
    if reference.shape() != cs.shape() {
        return Err(Error::ShapeMismatch(format!(
            "reference is {} but chains hold {}",
            reference.shape(),
            cs.shape()
        )));
    }
    reference.validate()?;
    let values = match d {
        DistanceSpec::UserTable(t) => {
            let r = cs.pool_index_of(reference).ok_or_else(|| {
                Error::InvalidParameter("with a distance table the reference must be one of the pooled states".into())
            })?;
            if t.len() != cs.n_unique() {
                return Err(Error::ShapeMismatch(format!(
                    "distance table covers {} states but the pool has {}",
                    t.len(),
                    cs.n_unique()
                )));
            }
            (0..cs.n_unique()).map(|i| t.get(i, r)).collect()
        }
        _ => {
            let metric = PoolMetric::new(cs.pool(), d)?;
            (0..cs.n_unique())
                .into_par_iter()
                .map(|i| metric.to_state(i, reference))
                .collect::<Result<Vec<_>>>()?
        }
    };
    Ok(ProximityMap {
        values,
        kind: MapKind::Lanfear {
            reference: reference.clone(),
        },
    })
}

/// Compensated running sum.
#[derive(Default)]
struct Neumaier {
    sum: f64,
    c: f64,
}

impl Neumaier {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.c += (self.sum - t) + x;
        } else {
            self.c += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.c
    }
}

/// Total vertical travel `D(m)` of all chains for every cut position `m`.
///
/// A transition between tour positions `lo < hi` costs `C[hi] - C[lo]` when
/// the cut is outside `(lo, hi]` and `L - (C[hi] - C[lo])` when the cut
/// separates them, so each transition adds a constant plus a correction on
/// one contiguous range of cuts.
pub fn cut_objectives(tour: &Tour, cs: &ChainSet) -> Result<Vec<f64>> {
    let n = tour.len();
    if n != cs.n_unique() {
        return Err(Error::ShapeMismatch(format!(
            "tour covers {n} states but the pool has {}",
            cs.n_unique()
        )));
    }
    let pos = tour.positions();
    let l = tour.cycle_length;
    let mut base = Neumaier::default();
    let mut delta = vec![0.0; n + 1];
    let mut delta_c = vec![0.0; n + 1];
    for idx in cs.index_chains() {
        for w in idx.windows(2) {
            let (a, b) = (pos[w[0]], pos[w[1]]);
            if a == b {
                continue;
            }
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let span = tour.cumdist[hi] - tour.cumdist[lo];
            base.add(span);
            let corr = l - 2.0 * span;
            delta[lo + 1] += corr;
            delta_c[lo + 1] += 1.0;
            delta[hi + 1] -= corr;
            delta_c[hi + 1] -= 1.0;
        }
    }
    let mut out = Vec::with_capacity(n);
    let mut running = Neumaier::default();
    let mut crossing = 0.0;
    for m in 0..n {
        running.add(delta[m]);
        crossing += delta_c[m];
        // No transition crosses the cut: the correction is exactly zero.
        let corr = if crossing == 0.0 { 0.0 } else { running.value() };
        out.push(base.value() + corr);
    }
    Ok(out)
}

/// Smallest index whose value is within the tie tolerance of the minimum.
pub fn first_minimum(values: &[f64], scale: f64) -> usize {
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let tol = CUT_TIE_TOLERANCE * min.abs().max(scale.abs());
    values.iter().position(|&v| v <= min + tol).unwrap_or(0)
}

/// Cuts the tour where total chain travel is smallest and returns the
/// resulting map. A single-state pool maps to 0.
pub fn cut_point_select(tour: &Tour, cs: &ChainSet) -> Result<ProximityMap> {
    let objectives = cut_objectives(tour, cs)?;
    let m = first_minimum(&objectives, tour.cycle_length);
    let mut values = vec![0.0; tour.len()];
    for (j, &i) in tour.ordering.iter().enumerate() {
        values[i] = tour.offset(m, j);
    }
    Ok(ProximityMap {
        values,
        kind: MapKind::NearestNeighbor {
            tour: tour.clone(),
            cut_index: m,
            objective: objectives[m],
        },
    })
}

/// Where the nearest-neighbour tour starts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TourStart {
    Index(usize),
    /// Uniformly drawn pool index from a seeded generator.
    Random {
        seed: u64,
    },
}

impl Default for TourStart {
    fn default() -> Self {
        TourStart::Index(0)
    }
}

impl TourStart {
    pub fn resolve(&self, n: usize) -> usize {
        match *self {
            TourStart::Index(i) => i,
            TourStart::Random { seed } => crate::sampler::chain_rng(seed, 0).gen_range(0..n.max(1)),
        }
    }
}

pub fn nn_map(cs: &ChainSet, d: &DistanceSpec, start: TourStart) -> Result<ProximityMap> {
    let tour = match d {
        DistanceSpec::UserTable(t) => {
            if t.len() != cs.n_unique() {
                return Err(Error::ShapeMismatch(format!(
                    "distance table covers {} states but the pool has {}",
                    t.len(),
                    cs.n_unique()
                )));
            }
            nn_tour(t.as_ref(), start.resolve(cs.n_unique()))?
        }
        _ => {
            let metric = PoolMetric::new(cs.pool(), d)?;
            nn_tour(&metric, start.resolve(cs.n_unique()))?
        }
    };
    cut_point_select(&tour, cs)
}

/// `k` univariate chains obtained by mapping every draw through a proximity
/// map.
#[derive(Debug, Clone, PartialEq)]
pub struct MappedChainSet {
    pub chain_ids: Vec<usize>,
    pub chains: Vec<Vec<f64>>,
}

impl MappedChainSet {
    pub fn new(chains: Vec<Vec<f64>>) -> Self {
        Self {
            chain_ids: (0..chains.len()).collect(),
            chains,
        }
    }
}

pub fn apply_map(cs: &ChainSet, pm: &ProximityMap) -> Result<MappedChainSet> {
    if pm.values.len() != cs.n_unique() {
        return Err(Error::ShapeMismatch(format!(
            "map has {} values but the pool has {} states",
            pm.values.len(),
            cs.n_unique()
        )));
    }
    Ok(MappedChainSet {
        chain_ids: cs.chains().iter().map(|c| c.chain_id).collect(),
        chains: cs
            .index_chains()
            .iter()
            .map(|idx| idx.iter().map(|&i| pm.values[i]).collect())
            .collect(),
    })
}
