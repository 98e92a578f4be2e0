//! Ground-truth bit error probability for tiny instances.
//!
//! For a handful of sockets the ensemble average can be computed exactly:
//! enumerate every socket matching (all `E!` of them), and for each graph
//! enumerate every erasure pattern, weighting pattern `S` by
//! `eps^|S| (1-eps)^(n-|S|)`. The result is an exact polynomial in `eps`
//! with rational coefficients. A sampled variant averages the exact
//! per-graph polynomial over randomly drawn graphs instead, which scales
//! to slightly larger `n` while keeping the erasure expectation exact.

use itertools::Itertools;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::ensemble::Ensemble;
use crate::simulator::{bp_decode, degree_counts, sample_graph, TannerGraph};
use crate::{Error, Result};

/// Feasibility guard for full matching enumeration (`E!` graphs).
pub const MAX_FULL_EDGES: usize = 8;
/// Feasibility guard for exact erasure enumeration (`2^n` patterns).
pub const MAX_SAMPLED_VARS: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleMethod {
    FullMatchingEnumeration,
    GraphSampledExactErasure,
}

/// Exact (or graph-sampled exact-erasure) bit error probability as a
/// polynomial in the channel erasure probability.
#[derive(Debug, Clone)]
pub struct ExactResult {
    pub n: usize,
    pub t: usize,
    pub method: OracleMethod,
    /// `coeffs[k]` multiplies `eps^k`.
    coeffs: Vec<BigRational>,
    /// Number of graphs averaged (matchings or samples).
    graphs: usize,
    /// Flattened second-moment matrix of the per-graph coefficient
    /// vectors; present only for the sampled method.
    moment2: Option<Vec<f64>>,
}

impl ExactResult {
    pub fn coefficients(&self) -> &[BigRational] {
        &self.coeffs
    }

    pub fn graphs(&self) -> usize {
        self.graphs
    }

    /// Evaluate the polynomial at a rational erasure probability.
    pub fn pb_rational(&self, eps: &BigRational) -> BigRational {
        let mut acc = BigRational::zero();
        for c in self.coeffs.iter().rev() {
            acc = acc * eps + c;
        }
        acc
    }

    pub fn pb_at(&self, eps: f64) -> f64 {
        self.coeffs
            .iter()
            .rev()
            .fold(0.0, |acc, c| acc * eps + rational_to_f64(c))
    }

    /// 95% confidence halfwidth of `pb_at(eps)` over graph sampling; zero
    /// for the full enumeration.
    pub fn ci_at(&self, eps: f64) -> f64 {
        let Some(m2) = &self.moment2 else {
            return 0.0;
        };
        let d = self.coeffs.len();
        let powers: Vec<f64> = (0..d).map(|k| eps.powi(k as i32)).collect();
        let mean = self.pb_at(eps);
        let mut second = 0.0;
        for a in 0..d {
            for b in 0..d {
                second += powers[a] * powers[b] * m2[a * d + b];
            }
        }
        let variance = (second - mean * mean).max(0.0);
        if self.graphs > 1 {
            1.96 * (variance / (self.graphs - 1) as f64).sqrt()
        } else {
            0.0
        }
    }
}

fn rational_to_f64(x: &BigRational) -> f64 {
    x.to_f64().unwrap_or_else(|| {
        // fall back for giant numerators: scale both parts
        let num = x.numer().to_f64().unwrap_or(f64::MAX);
        let den = x.denom().to_f64().unwrap_or(f64::MAX);
        num / den
    })
}

/// Erased-bit totals per erasure-pattern weight class for one graph:
/// `totals[k]` sums erased bits after `t` iterations over all patterns
/// with exactly `k` erasures.
fn erased_totals(graph: &TannerGraph, t: usize) -> Vec<u64> {
    let n = graph.n;
    let mut totals = vec![0u64; n + 1];
    let mut erased = vec![false; n];
    for pattern in 0u64..(1 << n) {
        for (v, flag) in erased.iter_mut().enumerate() {
            *flag = pattern >> v & 1 == 1;
        }
        let weight = pattern.count_ones() as usize;
        let still = bp_decode(graph, &erased, t);
        totals[weight] += still.iter().filter(|&&b| b).count() as u64;
    }
    totals
}

/// Convert per-weight erased totals into monomial coefficients of the
/// polynomial `sum_k totals[k]/norm * eps^k (1-eps)^(n-k)`.
fn totals_to_coeffs(totals: &[u64], n: usize, norm: &BigInt) -> Vec<BigRational> {
    let binomial = |a: usize, b: usize| -> BigInt {
        let mut value = BigInt::one();
        for i in 0..b {
            value = value * BigInt::from(a - i) / BigInt::from(i + 1);
        }
        value
    };
    let mut coeffs = vec![BigRational::zero(); n + 1];
    for (k, &total) in totals.iter().enumerate() {
        if total == 0 {
            continue;
        }
        let base = BigRational::new(BigInt::from(total), norm.clone());
        // eps^k (1-eps)^(n-k) = sum_j C(n-k, j) (-1)^j eps^(k+j)
        for j in 0..=n - k {
            let sign = if j % 2 == 0 { 1 } else { -1 };
            let term = BigRational::new(binomial(n - k, j) * sign, BigInt::one());
            coeffs[k + j] += &base * term;
        }
    }
    coeffs
}

/// Exact `Pb(n, eps, t)` by enumerating all `E!` socket matchings and all
/// `2^n` erasure patterns. The polynomial identities `pb(0) = 0` and
/// `pb(1) = 1` hold by construction.
pub fn exact_pb_full(ensemble: &Ensemble, n: usize, t: usize) -> Result<ExactResult> {
    let (var_counts, chk_counts, _) = degree_counts(ensemble, n)?;
    let edges: usize = var_counts.iter().map(|&(i, c)| i as usize * c).sum();
    if edges > MAX_FULL_EDGES {
        return Err(Error::OracleTooLarge(format!(
            "{edges} edges would need {edges}! matchings (limit {MAX_FULL_EDGES})"
        )));
    }
    let expand = |counts: &[(u32, usize)]| -> Vec<u32> {
        counts
            .iter()
            .flat_map(|&(d, c)| std::iter::repeat(d).take(c))
            .collect()
    };
    let var_degrees = expand(&var_counts);
    let check_degrees = expand(&chk_counts);

    let mut totals = vec![0u64; n + 1];
    let mut matchings = 0u64;
    for perm in (0..edges as u32).permutations(edges) {
        let graph = TannerGraph::from_matching(var_degrees.clone(), check_degrees.clone(), &perm);
        for (k, total) in erased_totals(&graph, t).into_iter().enumerate() {
            totals[k] += total;
        }
        matchings += 1;
    }
    let norm = BigInt::from(matchings) * BigInt::from(n as u64);
    Ok(ExactResult {
        n,
        t,
        method: OracleMethod::FullMatchingEnumeration,
        coeffs: totals_to_coeffs(&totals, n, &norm),
        graphs: matchings as usize,
        moment2: None,
    })
}

/// `Pb(n, eps, t)` averaged over `graphs` sampled matchings, with the
/// expectation over erasure patterns still exact. The confidence interval
/// reported by [`ExactResult::ci_at`] covers graph sampling only.
pub fn exact_pb_sampled(
    ensemble: &Ensemble,
    n: usize,
    t: usize,
    graphs: usize,
    master_seed: u64,
) -> Result<ExactResult> {
    if n > MAX_SAMPLED_VARS {
        return Err(Error::OracleTooLarge(format!(
            "{n} variables would need 2^{n} erasure patterns (limit {MAX_SAMPLED_VARS})"
        )));
    }
    assert!(graphs >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    let norm = BigInt::from(n as u64);
    let d = n + 2;
    let mut sum_coeffs = vec![BigRational::zero(); n + 1];
    let mut moment2 = vec![0.0f64; d * d];
    for _ in 0..graphs {
        let graph = sample_graph(ensemble, n, &mut rng)?;
        let totals = erased_totals(&graph, t);
        let coeffs = totals_to_coeffs(&totals, n, &norm);
        let as_f64: Vec<f64> = coeffs.iter().map(rational_to_f64).collect();
        for (a, &ca) in as_f64.iter().enumerate() {
            for (b, &cb) in as_f64.iter().enumerate() {
                moment2[a * d + b] += ca * cb;
            }
        }
        for (slot, c) in sum_coeffs.iter_mut().zip(coeffs) {
            *slot += c;
        }
    }
    let g = BigRational::new(BigInt::from(graphs as u64), BigInt::one());
    let coeffs: Vec<BigRational> = sum_coeffs.into_iter().map(|c| c / &g).collect();
    for slot in moment2.iter_mut() {
        *slot /= graphs as f64;
    }
    // moment matrix is laid out for the final coefficient length
    let dd = coeffs.len();
    let mut trimmed = vec![0.0; dd * dd];
    for a in 0..dd {
        for b in 0..dd {
            trimmed[a * dd + b] = moment2[a * d + b];
        }
    }
    Ok(ExactResult {
        n,
        t,
        method: OracleMethod::GraphSampledExactErasure,
        coeffs,
        graphs,
        moment2: Some(trimmed),
    })
}
