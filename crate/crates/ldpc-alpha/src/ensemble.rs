//! Degree distributions and irregular ensemble parameters.
//!
//! A degree distribution is a sparse polynomial over node degrees, kept
//! either from the node perspective (`L(x) = sum_i L_i x^i`) or from the
//! edge perspective (`lambda(x) = sum_i lambda_i x^(i-1)`, the coefficient
//! of degree `i` multiplying `x^(i-1)`). An [`Ensemble`] pairs a variable
//! and a check edge-perspective distribution and caches the derivative
//! values every analytic recursion keeps asking for.

use std::collections::BTreeMap;
use std::fmt;

use crate::real::Real;
use crate::{Error, Result};

/// Tolerance for "coefficients sum to one" and for the node/edge
/// conversion identities. Chosen to pass double-precision round trips
/// while catching genuinely unnormalized input.
pub const NORMALIZATION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Perspective {
    Node,
    Edge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Variable,
    Check,
}

/// A normalized degree distribution for one side of the bipartite graph.
///
/// Coefficients are stored exactly as given; no re-normalization is
/// applied beyond the tolerance check, so user input errors surface
/// instead of being silently repaired.
#[derive(Debug, Clone, PartialEq)]
pub struct DegreeDistribution {
    coeffs: BTreeMap<u32, f64>,
    perspective: Perspective,
    side: Side,
}

impl DegreeDistribution {
    pub fn new(
        coeffs: BTreeMap<u32, f64>,
        perspective: Perspective,
        side: Side,
    ) -> Result<Self> {
        if coeffs.is_empty() || coeffs.values().all(|&c| c == 0.0) {
            return Err(Error::InvalidDistribution(
                "distribution has no nonzero coefficients".into(),
            ));
        }
        if let Some((&d, _)) = coeffs.iter().find(|(&d, _)| d == 0) {
            return Err(Error::InvalidDistribution(format!(
                "degree {d} entries are not allowed (degrees start at 1)"
            )));
        }
        if let Some((&d, &c)) = coeffs.iter().find(|(_, &c)| !(c >= 0.0) || !c.is_finite()) {
            return Err(Error::InvalidDistribution(format!(
                "coefficient of degree {d} is {c}; coefficients must be finite and nonnegative"
            )));
        }
        let sum: f64 = coeffs.values().sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::InvalidDistribution(format!(
                "coefficients sum to {sum}, expected 1 within {NORMALIZATION_TOL}"
            )));
        }
        Ok(DegreeDistribution {
            coeffs,
            perspective,
            side,
        })
    }

    /// Single-degree (regular) distribution.
    pub fn regular(degree: u32, perspective: Perspective, side: Side) -> Result<Self> {
        Self::new(BTreeMap::from([(degree, 1.0)]), perspective, side)
    }

    pub fn perspective(&self) -> Perspective {
        self.perspective
    }

    pub fn side(&self) -> Side {
        self.side
    }

    /// Degrees with strictly positive coefficient, ascending.
    pub fn support(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.coeffs
            .iter()
            .filter(|(_, &c)| c > 0.0)
            .map(|(&d, &c)| (d, c))
    }

    pub fn coefficient(&self, degree: u32) -> f64 {
        self.coeffs.get(&degree).copied().unwrap_or(0.0)
    }

    pub fn max_degree(&self) -> u32 {
        self.support().map(|(d, _)| d).max().unwrap_or(0)
    }

    /// Average degree seen from the node perspective (`L'(1)` resp. `R'(1)`).
    fn mean_node_degree(&self) -> f64 {
        debug_assert_eq!(self.perspective, Perspective::Node);
        self.support().map(|(d, c)| d as f64 * c).sum()
    }

    /// Convert a node-perspective distribution to the edge perspective:
    /// `lambda_i = i * L_i / sum_k k * L_k`.
    pub fn node_to_edge(&self) -> Result<DegreeDistribution> {
        if self.perspective != Perspective::Node {
            return Err(Error::InvalidDistribution(
                "node_to_edge requires a node-perspective distribution".into(),
            ));
        }
        let mean = self.mean_node_degree();
        if mean == 0.0 {
            return Err(Error::InvalidDistribution("zero mean degree".into()));
        }
        let coeffs = self
            .support()
            .map(|(d, c)| (d, d as f64 * c / mean))
            .collect();
        DegreeDistribution::new(coeffs, Perspective::Edge, self.side)
    }

    /// Convert an edge-perspective distribution to the node perspective:
    /// `L_i = (lambda_i / i) / sum_k (lambda_k / k)`.
    pub fn edge_to_node(&self) -> Result<DegreeDistribution> {
        if self.perspective != Perspective::Edge {
            return Err(Error::InvalidDistribution(
                "edge_to_node requires an edge-perspective distribution".into(),
            ));
        }
        let total: f64 = self.support().map(|(d, c)| c / d as f64).sum();
        let coeffs = self
            .support()
            .map(|(d, c)| (d, (c / d as f64) / total))
            .collect();
        DegreeDistribution::new(coeffs, Perspective::Node, self.side)
    }

    /// Evaluate the distribution polynomial or one of its first two
    /// derivatives, in the convention fixed by the perspective: degree `i`
    /// contributes `x^i` (node) or `x^(i-1)` (edge).
    pub fn eval_deriv(&self, x: f64, order: u8) -> f64 {
        self.eval_deriv_in(&x, order)
    }

    /// Generic-precision version of [`eval_deriv`](Self::eval_deriv).
    pub fn eval_deriv_in<R: Real>(&self, x: &R, order: u8) -> R {
        assert!(order <= 2, "only orders 0, 1, 2 are supported");
        // Horner over the sparse map, descending exponents, gap powers via powi.
        let mut acc: Option<R> = None;
        let mut prev_exp: u32 = 0;
        for (degree, coef) in self.support().collect::<Vec<_>>().into_iter().rev() {
            let exp = match self.perspective {
                Perspective::Node => degree,
                Perspective::Edge => degree - 1,
            };
            if exp < order as u32 {
                continue; // derivative of a lower-order monomial vanishes
            }
            let mut factor = 1.0;
            for k in 0..order as u32 {
                factor *= (exp - k) as f64;
            }
            let term = x.of(coef * factor);
            let e = exp - order as u32;
            acc = Some(match acc {
                None => term,
                Some(a) => a * x.powi(prev_exp - e) + term,
            });
            prev_exp = e;
        }
        match acc {
            None => x.of(0.0),
            Some(a) => a * x.powi(prev_exp),
        }
    }
}

impl fmt::Display for DegreeDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (d, c) in self.support() {
            if !first {
                write!(f, "+")?;
            }
            first = false;
            let exp = match self.perspective {
                Perspective::Node => d,
                Perspective::Edge => d - 1,
            };
            write!(f, "{c}*x^{exp}")?;
        }
        Ok(())
    }
}

/// Parse the CLI text syntax `"0.5*x^1+0.153*x^2+..."`.
///
/// Exponents are interpreted in the stated perspective's convention:
/// `x^k` maps to degree `k+1` for edge-perspective input and to degree `k`
/// for node-perspective input. A bare `x` means `x^1`; a bare coefficient
/// means `x^0`.
pub fn parse_distribution(
    input: &str,
    perspective: Perspective,
    side: Side,
) -> Result<DegreeDistribution> {
    let err = |reason: &str| Error::Parse {
        input: input.to_string(),
        reason: reason.to_string(),
    };
    let mut coeffs: BTreeMap<u32, f64> = BTreeMap::new();
    for raw_term in input.split('+') {
        let term = raw_term.trim();
        if term.is_empty() {
            return Err(err("empty term"));
        }
        let (coef_str, exp) = match term.find('x') {
            None => (term, None),
            Some(pos) => {
                let coef = term[..pos].trim().trim_end_matches('*').trim();
                let rest = term[pos + 1..].trim();
                let exp = if rest.is_empty() {
                    1u32
                } else {
                    let stripped = rest
                        .strip_prefix('^')
                        .ok_or_else(|| err("expected `^` after `x`"))?;
                    stripped
                        .trim()
                        .parse::<u32>()
                        .map_err(|_| err("bad exponent"))?
                };
                (coef, Some(exp))
            }
        };
        let coef: f64 = if coef_str.is_empty() {
            1.0
        } else {
            coef_str.parse().map_err(|_| err("bad coefficient"))?
        };
        let exp = match exp {
            Some(e) => e,
            None => 0,
        };
        let degree = match perspective {
            Perspective::Edge => exp + 1,
            Perspective::Node => exp,
        };
        if degree == 0 {
            return Err(err("constant term maps to degree 0"));
        }
        *coeffs.entry(degree).or_insert(0.0) += coef;
    }
    DegreeDistribution::new(coeffs, perspective, side)
}

/// A validated `(lambda, rho)` pair with cached derived quantities.
#[derive(Debug, Clone)]
pub struct Ensemble {
    lambda: DegreeDistribution,
    rho: DegreeDistribution,
    l_node: DegreeDistribution,
    r_node: DegreeDistribution,
    lambda_prime_zero: f64,
    lambda_prime_one: f64,
    lambda_double_prime_one: f64,
    rho_prime_one: f64,
    rho_double_prime_one: f64,
    l_prime_one: f64,
    r_prime_one: f64,
}

impl Ensemble {
    /// Build from edge-perspective `lambda` (variable side) and `rho`
    /// (check side).
    pub fn new(lambda: DegreeDistribution, rho: DegreeDistribution) -> Result<Self> {
        if lambda.perspective() != Perspective::Edge || lambda.side() != Side::Variable {
            return Err(Error::InvalidEnsemble(
                "lambda must be an edge-perspective variable-side distribution".into(),
            ));
        }
        if rho.perspective() != Perspective::Edge || rho.side() != Side::Check {
            return Err(Error::InvalidEnsemble(
                "rho must be an edge-perspective check-side distribution".into(),
            ));
        }
        if rho.support().any(|(d, _)| d < 2) {
            return Err(Error::InvalidEnsemble(
                "check degrees below 2 are not supported".into(),
            ));
        }
        let l_node = lambda.edge_to_node()?;
        let r_node = rho.edge_to_node()?;
        // The pair (L, lambda) must satisfy L'(x)/L'(1) = lambda(x); a
        // violation here means the conversion above is inconsistent.
        let l_prime_one = l_node.eval_deriv(1.0, 1);
        for &x in &[0.0, 0.25, 0.5, 0.75, 1.0] {
            let lhs = l_node.eval_deriv(x, 1) / l_prime_one;
            let rhs = lambda.eval_deriv(x, 0);
            if (lhs - rhs).abs() > NORMALIZATION_TOL {
                return Err(Error::InvalidEnsemble(format!(
                    "L'(x)/L'(1) differs from lambda(x) by {} at x = {x}",
                    (lhs - rhs).abs()
                )));
            }
        }
        Ok(Ensemble {
            lambda_prime_zero: lambda.eval_deriv(0.0, 1),
            lambda_prime_one: lambda.eval_deriv(1.0, 1),
            lambda_double_prime_one: lambda.eval_deriv(1.0, 2),
            rho_prime_one: rho.eval_deriv(1.0, 1),
            rho_double_prime_one: rho.eval_deriv(1.0, 2),
            l_prime_one,
            r_prime_one: r_node.eval_deriv(1.0, 1),
            lambda,
            rho,
            l_node,
            r_node,
        })
    }

    /// The `(l, r)`-regular ensemble: `lambda(x) = x^(l-1)`, `rho(x) = x^(r-1)`.
    pub fn regular(l: u32, r: u32) -> Result<Self> {
        if l < 2 || r < 2 {
            return Err(Error::InvalidEnsemble(format!(
                "regular ensemble needs l >= 2 and r >= 2, got ({l}, {r})"
            )));
        }
        Ensemble::new(
            DegreeDistribution::regular(l, Perspective::Edge, Side::Variable)?,
            DegreeDistribution::regular(r, Perspective::Edge, Side::Check)?,
        )
    }

    pub fn lambda(&self) -> &DegreeDistribution {
        &self.lambda
    }

    pub fn rho(&self) -> &DegreeDistribution {
        &self.rho
    }

    /// Node-perspective variable distribution `L(x)`.
    pub fn l_node(&self) -> &DegreeDistribution {
        &self.l_node
    }

    /// Node-perspective check distribution `R(x)`.
    pub fn r_node(&self) -> &DegreeDistribution {
        &self.r_node
    }

    pub fn lambda_prime_zero(&self) -> f64 {
        self.lambda_prime_zero
    }

    pub fn lambda_prime_one(&self) -> f64 {
        self.lambda_prime_one
    }

    pub fn lambda_double_prime_one(&self) -> f64 {
        self.lambda_double_prime_one
    }

    pub fn rho_prime_one(&self) -> f64 {
        self.rho_prime_one
    }

    pub fn rho_double_prime_one(&self) -> f64 {
        self.rho_double_prime_one
    }

    pub fn l_prime_one(&self) -> f64 {
        self.l_prime_one
    }

    pub fn r_prime_one(&self) -> f64 {
        self.r_prime_one
    }

    /// Number of edges `E = n L'(1)` for blocklength `n` (not rounded).
    pub fn edge_count(&self, n: usize) -> f64 {
        n as f64 * self.l_prime_one
    }

    /// Number of checks `m = n L'(1) / R'(1)` for blocklength `n` (not rounded).
    pub fn check_count(&self, n: usize) -> f64 {
        self.edge_count(n) / self.r_prime_one
    }

    pub fn design_rate(&self) -> f64 {
        1.0 - self.l_prime_one / self.r_prime_one
    }
}

/// The irregular benchmark ensemble with
/// `lambda(x) = 0.500x + 0.153x^2 + 0.112x^3 + 0.055x^4 + 0.180x^8`,
/// `rho(x) = 0.492x^2 + 0.508x^3` (threshold near 0.8).
pub fn irregular_example() -> Ensemble {
    let lambda = parse_distribution(
        "0.500*x^1+0.153*x^2+0.112*x^3+0.055*x^4+0.180*x^8",
        Perspective::Edge,
        Side::Variable,
    )
    .expect("valid lambda");
    let rho = parse_distribution("0.492*x^2+0.508*x^3", Perspective::Edge, Side::Check)
        .expect("valid rho");
    Ensemble::new(lambda, rho).expect("valid ensemble")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn node(entries: &[(u32, f64)], side: Side) -> DegreeDistribution {
        DegreeDistribution::new(entries.iter().copied().collect(), Perspective::Node, side)
            .unwrap()
    }

    #[test]
    fn node_to_edge_regular_cases() {
        // L(x) = x^2 -> lambda(x) = x, L(x) = x^3 -> lambda(x) = x^2
        for l in [2u32, 3] {
            let d = node(&[(l, 1.0)], Side::Variable);
            let e = d.node_to_edge().unwrap();
            assert_eq!(e.coefficient(l), 1.0);
            assert_eq!(e.support().count(), 1);
        }
    }

    #[test]
    fn node_to_edge_mixed() {
        // L_2 = L_3 = 1/2 -> lambda_2 = 2/5, lambda_3 = 3/5
        let d = node(&[(2, 0.5), (3, 0.5)], Side::Variable);
        let e = d.node_to_edge().unwrap();
        assert_abs_diff_eq!(e.coefficient(2), 0.4, epsilon = 1e-15);
        assert_abs_diff_eq!(e.coefficient(3), 0.6, epsilon = 1e-15);
    }

    #[test]
    fn edge_to_node_regular_cases() {
        for l in [2u32, 3] {
            let e = DegreeDistribution::regular(l, Perspective::Edge, Side::Variable).unwrap();
            let d = e.edge_to_node().unwrap();
            assert_eq!(d.coefficient(l), 1.0);
        }
    }

    #[test]
    fn round_trip_on_irregular_lambda() {
        let ens = irregular_example();
        let back = ens.lambda().edge_to_node().unwrap().node_to_edge().unwrap();
        for (d, c) in ens.lambda().support() {
            assert_abs_diff_eq!(back.coefficient(d), c, epsilon = 1e-12);
        }
    }

    #[test]
    fn eval_deriv_monomial() {
        // rho(x) = x^5 from edge perspective is degree 6
        let rho = DegreeDistribution::regular(6, Perspective::Edge, Side::Check).unwrap();
        assert_eq!(rho.eval_deriv(1.0, 1), 5.0);
        assert_eq!(rho.eval_deriv(1.0, 2), 20.0);
        assert_abs_diff_eq!(rho.eval_deriv(0.5, 0), 0.5f64.powi(5), epsilon = 1e-15);
    }

    #[test]
    fn irregular_cached_derivatives() {
        let ens = irregular_example();
        assert_abs_diff_eq!(ens.lambda_prime_one(), 2.802, epsilon = 1e-12);
        assert_abs_diff_eq!(ens.rho_prime_one(), 2.508, epsilon = 1e-12);
        assert_abs_diff_eq!(
            ens.lambda_prime_one() * ens.rho_prime_one(),
            7.027416,
            epsilon = 1e-9
        );
        // lambda'(0) equals the degree-2 edge fraction
        assert_abs_diff_eq!(ens.lambda_prime_zero(), 0.500, epsilon = 1e-15);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(DegreeDistribution::new(
            BTreeMap::from([(2, 0.5)]),
            Perspective::Edge,
            Side::Variable
        )
        .is_err());
        assert!(DegreeDistribution::new(
            BTreeMap::from([(0, 1.0)]),
            Perspective::Node,
            Side::Variable
        )
        .is_err());
        assert!(DegreeDistribution::new(
            BTreeMap::from([(2, 1.5), (3, -0.5)]),
            Perspective::Edge,
            Side::Variable
        )
        .is_err());
        assert!(DegreeDistribution::new(BTreeMap::new(), Perspective::Node, Side::Check).is_err());
        // check degrees below 2 rejected at the ensemble level
        let lam = DegreeDistribution::regular(2, Perspective::Edge, Side::Variable).unwrap();
        let rho1 = DegreeDistribution::regular(1, Perspective::Edge, Side::Check).unwrap();
        assert!(Ensemble::new(lam, rho1).is_err());
    }

    #[test]
    fn parse_syntax() {
        let d = parse_distribution("0.5*x^1 + 0.5*x^2", Perspective::Edge, Side::Variable)
            .unwrap();
        assert_eq!(d.coefficient(2), 0.5);
        assert_eq!(d.coefficient(3), 0.5);
        let d = parse_distribution("x^2", Perspective::Node, Side::Variable).unwrap();
        assert_eq!(d.coefficient(2), 1.0);
        let d = parse_distribution("x", Perspective::Edge, Side::Check).unwrap();
        assert_eq!(d.coefficient(2), 1.0);
        assert!(parse_distribution("0.5", Perspective::Edge, Side::Check).is_err());
        assert!(parse_distribution("0.5*y^2", Perspective::Edge, Side::Check).is_err());
        assert!(parse_distribution("", Perspective::Edge, Side::Check).is_err());
    }

    #[test]
    fn regular_ensemble_parameters() {
        let e = Ensemble::regular(3, 6).unwrap();
        assert_eq!(e.l_prime_one(), 3.0);
        assert_eq!(e.r_prime_one(), 6.0);
        assert_eq!(e.lambda_prime_one(), 2.0);
        assert_eq!(e.rho_prime_one(), 5.0);
        assert_eq!(e.lambda_double_prime_one(), 2.0);
        assert_eq!(e.rho_double_prime_one(), 20.0);
        assert_eq!(e.design_rate(), 0.5);
        assert_eq!(e.edge_count(128), 384.0);
        assert_eq!(e.check_count(128), 64.0);
    }

    proptest! {
        /// node_to_edge and edge_to_node invert each other and keep the
        /// coefficients normalized.
        #[test]
        fn conversion_round_trip(raw in proptest::collection::btree_map(1u32..40, 0.05f64..1.0, 1..6)) {
            let total: f64 = raw.values().sum();
            let coeffs: BTreeMap<u32, f64> = raw.iter().map(|(&d, &c)| (d, c / total)).collect();
            let d = DegreeDistribution::new(coeffs, Perspective::Node, Side::Variable).unwrap();
            let back = d.node_to_edge().unwrap().edge_to_node().unwrap();
            for (deg, c) in d.support() {
                prop_assert!((back.coefficient(deg) - c).abs() < 1e-12);
            }
            let sum: f64 = back.support().map(|(_, c)| c).sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
        }
    }
}
