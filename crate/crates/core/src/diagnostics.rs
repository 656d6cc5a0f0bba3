//! Univariate multi-chain diagnostics and the end-to-end generalized
//! diagnostic pipeline.
//!
//! ESS is the sum over chains of `n / tau`, where `tau` is the integrated
//! autocorrelation time estimated with Geyer's initial positive sequence.
//! PSRF is the original Gelman-Rubin ratio without chain splitting or rank
//! normalization. Absolute ESS values depend on the estimator; compare them
//! between samplers, not against numbers produced by other tools.

use rayon::prelude::*;
use serde::Serialize;

use crate::distance::DistanceSpec;
use crate::error::{Error, Result};
use crate::proximity::{apply_map, lanfear_map, nn_map, MapKind, MappedChainSet, TourStart};
use crate::state::{ChainSet, DrawState};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EssResult {
    pub total: f64,
    pub per_chain: Vec<f64>,
    /// Positions (in input order) of chains with zero sample variance. Each
    /// contributes its full length to the total.
    pub zero_variance: Vec<usize>,
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Integrated autocorrelation time `1 + 2 sum_t rho(t)`, truncated by the
/// initial positive sequence rule. `None` for a constant chain.
pub fn integrated_autocorr_time(x: &[f64]) -> Option<f64> {
    let n = x.len();
    let m = mean(x);
    let centred: Vec<f64> = x.iter().map(|v| v - m).collect();
    let c0 = centred.iter().map(|v| v * v).sum::<f64>() / n as f64;
    if x.iter().all(|&v| v == x[0]) || c0 == 0.0 {
        return None;
    }
    let rho = |t: usize| -> f64 {
        let s: f64 = centred[..n - t].iter().zip(&centred[t..]).map(|(a, b)| a * b).sum();
        s / n as f64 / c0
    };
    let mut sum_pairs = 0.0;
    let mut k = 0;
    while 2 * k + 1 < n {
        let gamma = if k == 0 {
            1.0 + rho(1)
        } else {
            rho(2 * k) + rho(2 * k + 1)
        };
        if gamma <= 0.0 {
            break;
        }
        sum_pairs += gamma;
        k += 1;
    }
    Some(-1.0 + 2.0 * sum_pairs)
}

pub fn ess(chains: &[Vec<f64>]) -> Result<EssResult> {
    check_chains(chains, 1)?;
    let n = chains[0].len() as f64;
    let taus: Vec<Option<f64>> = chains.par_iter().map(|c| integrated_autocorr_time(c)).collect();
    let mut zero_variance = Vec::new();
    let per_chain: Vec<f64> = taus
        .iter()
        .enumerate()
        .map(|(i, tau)| match tau {
            None => {
                zero_variance.push(i);
                n
            }
            Some(t) => (n / t).clamp(f64::MIN_POSITIVE, n),
        })
        .collect();
    Ok(EssResult {
        total: per_chain.iter().sum(),
        per_chain,
        zero_variance,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Psrf {
    Value(f64),
    /// Every draw in every chain is identical.
    Degenerate,
    /// No within-chain variation but the chains sit at different values.
    Infinite,
}

impl Psrf {
    pub fn value(&self) -> f64 {
        match *self {
            Psrf::Value(v) => v,
            Psrf::Degenerate => f64::NAN,
            Psrf::Infinite => f64::INFINITY,
        }
    }
}

/// Gelman-Rubin potential scale reduction factor,
/// `sqrt(((n-1)/n W + B/n) / W)`, floored at 1.
pub fn psrf(chains: &[Vec<f64>]) -> Result<Psrf> {
    check_chains(chains, 2)?;
    let k = chains.len() as f64;
    let n = chains[0].len() as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let vars: Vec<f64> = chains
        .iter()
        .zip(&means)
        .map(|(c, m)| c.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0))
        .collect();
    let w = mean(&vars);
    let grand = mean(&means);
    let b_over_n = means.iter().map(|m| (m - grand) * (m - grand)).sum::<f64>() / (k - 1.0);
    let constant = chains.iter().all(|c| c.iter().all(|&v| v == c[0]));
    if w == 0.0 || constant {
        let all_equal = chains.iter().all(|c| c[0] == chains[0][0]);
        return Ok(if all_equal { Psrf::Degenerate } else { Psrf::Infinite });
    }
    let v_hat = (n - 1.0) / n * w + b_over_n;
    Ok(Psrf::Value((v_hat / w).sqrt().max(1.0)))
}

fn check_chains(chains: &[Vec<f64>], min_chains: usize) -> Result<()> {
    if chains.len() < min_chains {
        return Err(Error::TooFew {
            what: "chains",
            needed: min_chains,
            got: chains.len(),
        });
    }
    let n = chains[0].len();
    if n < 4 {
        return Err(Error::TooFew {
            what: "draws per chain",
            needed: 4,
            got: n,
        });
    }
    if let Some(c) = chains.iter().find(|c| c.len() != n) {
        return Err(Error::ShapeMismatch(format!("chains of length {} and {n}", c.len())));
    }
    if chains.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("chain values must be finite".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub chain: usize,
    pub iter: usize,
    pub value: f64,
}

/// Long-format traceplot rows, chain by chain, iterations ascending.
pub fn traceplot_table(mapped: &MappedChainSet) -> Vec<TraceRow> {
    mapped
        .chain_ids
        .iter()
        .zip(&mapped.chains)
        .flat_map(|(&chain, values)| {
            values
                .iter()
                .enumerate()
                .map(move |(iter, &value)| TraceRow { chain, iter, value })
        })
        .collect()
}

/// Length of the overlap between the value range of chain `chain` and the
/// combined value range of all other chains. Zero when the bands are
/// disjoint or merely touch.
pub fn band_overlap(chains: &[Vec<f64>], chain: usize) -> f64 {
    let range = |vals: &mut dyn Iterator<Item = f64>| {
        vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
    };
    let (lo, hi) = range(&mut chains[chain].iter().cloned());
    let (olo, ohi) = range(
        &mut chains
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != chain)
            .flat_map(|(_, c)| c.iter().cloned()),
    );
    (hi.min(ohi) - lo.max(olo)).max(0.0)
}

#[derive(Debug, Clone, PartialEq)]
pub enum MapChoice {
    Lanfear { reference: DrawState },
    NearestNeighbor { start: TourStart },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosticOptions {
    pub ess: bool,
    pub psrf: bool,
}

impl Default for DiagnosticOptions {
    fn default() -> Self {
        Self { ess: true, psrf: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MapProvenance {
    pub kind: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference: Option<DrawState>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub start: Option<TourStart>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub start_index: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cut_index: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cycle_length: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub objective: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportConfig {
    pub distance: &'static str,
    pub map: MapProvenance,
    pub n_chains: usize,
    pub n_draws: usize,
    pub n_unique: usize,
    pub ess_estimator: &'static str,
    pub psrf_estimator: &'static str,
}

pub const ESS_ESTIMATOR: &str = "sum over chains of n / tau, tau from initial positive sequence autocorrelations";
pub const PSRF_ESTIMATOR: &str = "Gelman-Rubin, no splitting, no rank normalization, floored at 1";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticReport {
    /// Absent when ESS was not requested.
    pub ess: Option<f64>,
    /// Absent when PSRF was not requested or is not a finite number; see
    /// `flags` for the reason.
    pub psrf: Option<f64>,
    pub per_chain_ess: Vec<f64>,
    pub flags: Vec<String>,
    pub config: ReportConfig,
    #[serde(skip)]
    pub mapped: MappedChainSet,
}

impl DiagnosticReport {
    pub fn traceplot(&self) -> Vec<TraceRow> {
        traceplot_table(&self.mapped)
    }
}

struct Evaluation {
    ess: Option<f64>,
    per_chain_ess: Vec<f64>,
    psrf: Option<f64>,
    flags: Vec<String>,
}

/// ESS and PSRF on already-univariate chains, with flags for the cases that
/// have no finite value.
fn evaluate(mapped: &[Vec<f64>], opts: DiagnosticOptions) -> Result<Evaluation> {
    let mut flags = Vec::new();
    let (mut ess_total, mut per_chain, mut psrf_value) = (None, Vec::new(), None);
    if opts.ess {
        let e = ess(mapped)?;
        for &i in &e.zero_variance {
            flags.push(format!("zero_variance:chain={i}"));
        }
        ess_total = Some(e.total);
        per_chain = e.per_chain;
    }
    if opts.psrf {
        if mapped.len() < 2 {
            if mapped.iter().all(|c| c.iter().all(|&v| v == mapped[0][0])) {
                flags.push("psrf_degenerate".into());
            } else {
                flags.push("psrf_undefined_single_chain".into());
            }
        } else {
            match psrf(mapped)? {
                Psrf::Value(v) => psrf_value = Some(v),
                Psrf::Degenerate => flags.push("psrf_degenerate".into()),
                Psrf::Infinite => flags.push("psrf_infinite".into()),
            }
        }
    }
    Ok(Evaluation {
        ess: ess_total,
        per_chain_ess: per_chain,
        psrf: psrf_value,
        flags,
    })
}

/// Maps every draw to the real line with the chosen distance and proximity
/// map, then evaluates ESS and PSRF on the mapped chains.
pub fn run_generalized_diagnostic(
    cs: &ChainSet,
    d: &DistanceSpec,
    map_choice: &MapChoice,
    opts: DiagnosticOptions,
) -> Result<DiagnosticReport> {
    let pm = match map_choice {
        MapChoice::Lanfear { reference } => lanfear_map(cs, d, reference),
        MapChoice::NearestNeighbor { start } => nn_map(cs, d, *start),
    }
    .map_err(|e| e.at_stage("proximity map"))?;
    let mapped = apply_map(cs, &pm).map_err(|e| e.at_stage("apply map"))?;
    let ev = evaluate(&mapped.chains, opts).map_err(|e| e.at_stage("diagnostics"))?;

    let map = match (&pm.kind, map_choice) {
        (MapKind::Lanfear { reference }, _) => MapProvenance {
            kind: "lanfear",
            reference: Some(reference.clone()),
            start: None,
            start_index: None,
            cut_index: None,
            cycle_length: None,
            objective: None,
        },
        (
            MapKind::NearestNeighbor {
                tour,
                cut_index,
                objective,
            },
            MapChoice::NearestNeighbor { start },
        ) => MapProvenance {
            kind: "nearest_neighbor",
            reference: None,
            start: Some(*start),
            start_index: tour.ordering.first().copied(),
            cut_index: Some(*cut_index),
            cycle_length: Some(tour.cycle_length),
            objective: Some(*objective),
        },
        _ => unreachable!("map kind follows the requested choice"),
    };

    Ok(DiagnosticReport {
        ess: ev.ess,
        psrf: ev.psrf,
        per_chain_ess: ev.per_chain_ess,
        flags: ev.flags,
        config: ReportConfig {
            distance: d.name(),
            map,
            n_chains: cs.n_chains(),
            n_draws: cs.chain_len(),
            n_unique: cs.n_unique(),
            ess_estimator: ESS_ESTIMATOR,
            psrf_estimator: PSRF_ESTIMATOR,
        },
        mapped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::chain_rng;
    use crate::state::{build_chain_set, Chain};
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn iid_normal(seed: u64, k: usize, n: usize) -> Vec<Vec<f64>> {
        (0..k)
            .map(|c| {
                let mut rng = chain_rng(seed, c);
                (0..n).map(|_| rng.sample(StandardNormal)).collect()
            })
            .collect()
    }

    fn ar1(seed: u64, phi: f64, n: usize) -> Vec<f64> {
        let mut rng = chain_rng(seed, 0);
        let mut x = rng.sample::<f64, _>(StandardNormal) / (1.0 - phi * phi).sqrt();
        (0..n)
            .map(|_| {
                x = phi * x + rng.sample::<f64, _>(StandardNormal);
                x
            })
            .collect()
    }

    #[test]
    fn ess_of_iid_chains() {
        let e = ess(&iid_normal(1, 5, 1000)).unwrap();
        assert!((0.85 * 5000.0..=1.15 * 5000.0).contains(&e.total), "{}", e.total);
        assert!(e.zero_variance.is_empty());
    }

    #[test]
    fn ess_of_ar1_chain() {
        let phi = 0.9;
        let n = 10_000;
        let analytic = n as f64 * (1.0 - phi) / (1.0 + phi);
        let e = ess(&[ar1(6, phi, n)]).unwrap();
        assert!(
            (e.total - analytic).abs() <= 0.25 * analytic,
            "{} vs {analytic}",
            e.total
        );
    }

    #[test]
    fn ess_of_constant_chain() {
        let e = ess(&[vec![3.0; 50], iid_normal(2, 1, 50).remove(0)]).unwrap();
        assert_eq!(e.per_chain[0], 50.0);
        assert_eq!(e.zero_variance, vec![0]);
        assert!(e.total <= 100.0);
    }

    #[test]
    fn ess_needs_four_draws() {
        assert!(matches!(ess(&[vec![1.0, 2.0, 3.0]]), Err(Error::TooFew { .. })));
    }

    #[test]
    fn psrf_identical_chains_is_one() {
        let c = iid_normal(3, 1, 100).remove(0);
        assert_eq!(psrf(&[c.clone(), c.clone(), c]).unwrap(), Psrf::Value(1.0));
    }

    #[test]
    fn psrf_of_long_iid_chains() {
        let r = psrf(&iid_normal(4, 2, 1_000_000)).unwrap().value();
        assert!((1.0..=1.01).contains(&r), "{r}");
    }

    #[test]
    fn psrf_degenerate_cases() {
        assert_eq!(psrf(&[vec![1.0; 5], vec![1.0; 5]]).unwrap(), Psrf::Degenerate);
        assert_eq!(psrf(&[vec![1.0; 5], vec![2.0; 5]]).unwrap(), Psrf::Infinite);
        assert!(matches!(psrf(&[vec![1.0; 5]]), Err(Error::TooFew { .. })));
    }

    #[test]
    fn psrf_separated_chains_is_large() {
        let mut chains = iid_normal(5, 4, 500);
        for (i, c) in chains.iter_mut().enumerate() {
            c.iter_mut().for_each(|v| *v += 5.0 * i as f64);
        }
        assert!(psrf(&chains).unwrap().value() > 5.0);
    }

    #[test]
    fn traceplot_shapes() {
        let rows = traceplot_table(&MappedChainSet::new(vec![vec![0.5, 1.5, 2.5]]));
        assert_eq!(rows.len(), 3);
        assert_eq!(
            rows[2],
            TraceRow {
                chain: 0,
                iter: 2,
                value: 2.5
            }
        );

        let rows = traceplot_table(&MappedChainSet::new(iid_normal(1, 7, 2000)));
        assert_eq!(rows.len(), 14000);
        for c in 0..7 {
            let iters: Vec<usize> = rows.iter().filter(|r| r.chain == c).map(|r| r.iter).collect();
            assert!(iters.windows(2).all(|w| w[1] == w[0] + 1));
        }
    }

    #[test]
    fn band_overlap_disjoint_and_nested() {
        let chains = vec![vec![10.0, 11.0], vec![0.0, 2.0], vec![1.0, 3.0]];
        assert_eq!(band_overlap(&chains, 0), 0.0);
        assert_eq!(band_overlap(&chains, 1), 1.0);
    }

    #[test]
    fn single_constant_chain_report() {
        let cs = build_chain_set(vec![Chain::new(0, vec![DrawState::scalar(2.0); 10])]).unwrap();
        for choice in [
            MapChoice::NearestNeighbor {
                start: TourStart::Index(0),
            },
            MapChoice::Lanfear {
                reference: DrawState::scalar(0.0),
            },
        ] {
            let r = run_generalized_diagnostic(&cs, &DistanceSpec::Euclidean, &choice, DiagnosticOptions::default())
                .unwrap();
            assert_eq!(r.ess, Some(10.0));
            assert!(r.flags.contains(&"zero_variance:chain=0".to_string()));
            assert!(r.flags.contains(&"psrf_degenerate".to_string()));
            assert_eq!(r.psrf, None);
        }
    }

    #[test]
    fn stage_labels_on_errors() {
        let cs = build_chain_set(vec![Chain::new(0, vec![DrawState::scalar(2.0); 10])]).unwrap();
        let err = run_generalized_diagnostic(
            &cs,
            &DistanceSpec::Hamming,
            &MapChoice::NearestNeighbor {
                start: TourStart::Index(0),
            },
            DiagnosticOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(
            err,
            Error::Stage {
                stage: "proximity map",
                ..
            }
        ));
        assert!(matches!(err.root(), Error::UnsupportedDistance { .. }));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn affine_invariance(seed in any::<u64>(), a in prop_oneof![-50.0f64..-0.01, 0.01f64..50.0], b in -100.0f64..100.0) {
            let mut chains = iid_normal(seed, 3, 200);
            // Add persistence and a chain offset so the statistics are not trivial.
            for (i, c) in chains.iter_mut().enumerate() {
                for j in 1..c.len() { c[j] += 0.7 * c[j - 1]; }
                c.iter_mut().for_each(|v| *v += i as f64);
            }
            let moved: Vec<Vec<f64>> = chains.iter().map(|c| c.iter().map(|v| a * v + b).collect()).collect();
            let (e0, e1) = (ess(&chains).unwrap().total, ess(&moved).unwrap().total);
            let (r0, r1) = (psrf(&chains).unwrap().value(), psrf(&moved).unwrap().value());
            prop_assert!(((e0 - e1) / e0).abs() <= 1e-9);
            prop_assert!(((r0 - r1) / r0).abs() <= 1e-9);
        }

        #[test]
        fn chain_order_irrelevant(seed in any::<u64>()) {
            let chains = iid_normal(seed, 4, 100);
            let mut rev = chains.clone();
            rev.reverse();
            let (e0, e1) = (ess(&chains).unwrap().total, ess(&rev).unwrap().total);
            prop_assert!(((e0 - e1) / e0).abs() <= 1e-12);
            let (r0, r1) = (psrf(&chains).unwrap().value(), psrf(&rev).unwrap().value());
            prop_assert!(((r0 - r1) / r0).abs() <= 1e-12);
        }

        #[test]
        fn ess_bounded_psrf_at_least_one(seed in any::<u64>(), k in 2usize..5, n in 4usize..60) {
            let chains = iid_normal(seed, k, n);
            let e = ess(&chains).unwrap();
            prop_assert!(e.total > 0.0 && e.total <= (k * n) as f64);
            prop_assert!(psrf(&chains).unwrap().value() >= 1.0 - 1e-9);
        }
    }
}
