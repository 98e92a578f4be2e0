//! The single-cycle contribution `gamma(eps, t)` to the 1/n coefficient.
//!
//! Single-cycle neighborhood graphs fall into six types according to
//! whether the shallowest node of the cycle is a non-root variable node, a
//! check node or the root itself, and whether the deepest one is a
//! variable or a check node. Each type contributes a product of a
//! combinatorial prefactor and an erasure probability along the cycle,
//! evaluated by recursions on the density-evolution trajectory. The
//! boundary cases where the two cycle check nodes or variable nodes
//! coincide are the `s = 0` base cases of the recursions below.

use std::collections::HashMap;

use crate::density_evolution::{evolve_in, DensityTrajectory};
use crate::ensemble::Ensemble;
use crate::real::{MpReal, Real};
use crate::{Error, Result};

/// Which of the six single-cycle graph types a term belongs to.
/// `V` covers types I/II (shallowest cycle node is a non-root variable),
/// `C` covers III/IV (a check node), `R` covers V/VI (the root).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CycleKind {
    V,
    C,
    R,
}

/// Parameters of one single-cycle term. Types `V` and `C` use the depth
/// `s1` of the shallowest cycle node and the path-length parameter `s2`;
/// type `R` uses a single parameter stored in `s2` (with `s1 = 0`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CycleParams {
    pub kind: CycleKind,
    pub s1: usize,
    pub s2: usize,
}

impl CycleParams {
    /// Validate the parameter ranges for horizon `t`.
    pub fn new(kind: CycleKind, s1: usize, s2: usize, t: usize) -> Result<Self> {
        let ok = match kind {
            CycleKind::V => {
                t >= 2 && (1..=t - 1).contains(&s1) && (2 * s1 + 1..=2 * t).contains(&s2)
            }
            CycleKind::C => t >= 1 && s1 <= t - 1 && (2 * s1 + 2..=2 * t).contains(&s2),
            CycleKind::R => t >= 1 && s1 == 0 && (1..=2 * t).contains(&s2),
        };
        if ok {
            Ok(CycleParams { kind, s1, s2 })
        } else {
            Err(Error::InvalidEnsemble(format!(
                "cycle parameters out of range: {kind:?} s1={s1} s2={s2} at t={t}"
            )))
        }
    }
}

/// Memoized evaluation of the cycle recursions for one `(ensemble, traj, t)`.
///
/// The probability-valued recursions `f` and `g` are parameterized by a
/// boundary probability `p`; they are memoized at `p = 1` (the value the
/// inner cycle recursions consume) and evaluated directly for the one
/// boundary value each outer term requires.
pub struct CycleRecursions<'a, R> {
    ensemble: &'a Ensemble,
    traj: &'a DensityTrajectory<R>,
    t: usize,
    f_at_one: HashMap<(usize, usize), R>,
    g1: HashMap<(usize, usize), R>,
    g2: HashMap<(usize, usize), R>,
    g3: HashMap<(usize, usize), R>,
}

impl<'a, R: Real> CycleRecursions<'a, R> {
    pub fn new(ensemble: &'a Ensemble, traj: &'a DensityTrajectory<R>, t: usize) -> Self {
        assert!(traj.horizon() >= t, "trajectory horizon below t");
        CycleRecursions {
            ensemble,
            traj,
            t,
            f_at_one: HashMap::new(),
            g1: HashMap::new(),
            g2: HashMap::new(),
            g3: HashMap::new(),
        }
    }

    fn eps(&self) -> R {
        self.traj.epsilon().clone()
    }

    /// `eps * lambda'(P(tau)) / lambda'(1)`
    fn var_ratio(&self, tau: usize) -> R {
        let lam_p = self.ensemble.lambda().eval_deriv_in(self.traj.p(tau), 1);
        self.eps() * lam_p.of(1.0 / self.ensemble.lambda_prime_one()) * lam_p
    }

    /// `rho'(1 - Q(tau)) / rho'(1)`
    fn chk_ratio(&self, tau: usize) -> R {
        let one = self.eps().of(1.0);
        let omq = one - self.traj.q(tau).clone();
        let rho_p = self.ensemble.rho().eval_deriv_in(&omq, 1);
        rho_p.of(1.0 / self.ensemble.rho_prime_one()) * rho_p
    }

    /// Erasure probability of a variable-to-check message `s` steps along
    /// the cycle path, with boundary probability `p`.
    pub fn f(&mut self, tau: usize, s: usize, p: &R) -> R {
        if tau == 0 {
            return self.eps();
        }
        debug_assert!(s >= 1, "f needs s >= 1 unless tau = 0");
        self.var_ratio(tau) * self.g(tau, s - 1, p)
    }

    /// Check-to-variable counterpart of [`f`](Self::f).
    pub fn g(&mut self, tau: usize, s: usize, p: &R) -> R {
        if s == 0 {
            return p.clone();
        }
        debug_assert!(tau >= 1, "g needs tau >= 1 unless s = 0");
        let one = p.of(1.0);
        let inner = one.clone() - self.f(tau - 1, s, p);
        one - self.chk_ratio(tau) * inner
    }

    fn f_one(&mut self, tau: usize, s: usize) -> R {
        if let Some(v) = self.f_at_one.get(&(tau, s)) {
            return v.clone();
        }
        let one = self.eps().of(1.0);
        let v = self.f(tau, s, &one);
        self.f_at_one.insert((tau, s), v.clone());
        v
    }

    /// Probability that both cycle messages into the shallowest variable
    /// node are erased; `s = 0` is the coinciding-check-nodes case.
    pub fn g1(&mut self, tau: usize, s: usize) -> R {
        if s == 0 {
            return self.eps().of(1.0);
        }
        if let Some(v) = self.g1.get(&(tau, s)) {
            return v.clone();
        }
        debug_assert!(tau >= 1);
        let one = self.eps().of(1.0);
        let two = self.eps().of(2.0);
        let rr = self.chk_ratio(tau);
        let miss = one.clone() - rr.clone();
        let v = miss.clone() * miss.clone()
            + two * rr.clone() * miss * self.f_one(tau - 1, s)
            + rr.clone() * rr * self.g2(tau - 1, s - 1);
        self.g1.insert((tau, s), v.clone());
        v
    }

    /// Probability that the two messages from the deepest cycle variable
    /// pair are both erased; `s = 0` is the coinciding-variables case.
    pub fn g2(&mut self, tau: usize, s: usize) -> R {
        if s == 0 {
            return self.var_ratio(tau);
        }
        if let Some(v) = self.g2.get(&(tau, s)) {
            return v.clone();
        }
        let vr = self.var_ratio(tau);
        let v = vr.clone() * vr * self.g1(tau, s - 1);
        self.g2.insert((tau, s), v.clone());
        v
    }

    /// Joint-erasure correction entering the check-type boundary.
    pub fn g3(&mut self, tau: usize, s: usize) -> R {
        let one = self.eps().of(1.0);
        if s == 0 {
            return one - self.var_ratio(tau);
        }
        if let Some(v) = self.g3.get(&(tau, s)) {
            return v.clone();
        }
        let two = self.eps().of(2.0);
        let vr = self.var_ratio(tau);
        let v = one - two * self.f_one(tau, s + 1) + vr.clone() * vr * self.g1(tau, s - 1);
        self.g3.insert((tau, s), v.clone());
        v
    }

    /// `(lambda'(1) rho'(1))^exp`
    fn growth_pow(&self, exp: usize) -> R {
        self.eps()
            .of(self.ensemble.lambda_prime_one() * self.ensemble.rho_prime_one())
            .powi(exp as u32)
    }

    /// Contribution of types I/II (shallowest cycle node is a non-root
    /// variable node). Zero when `lambda''(1) = 0`: no variable node has
    /// the three edges needed to host the cycle fork.
    pub fn term_v(&mut self, s1: usize, s2: usize) -> R {
        let lam_pp1 = self.ensemble.lambda_double_prime_one();
        if lam_pp1 == 0.0 {
            return self.eps().of(0.0);
        }
        let t = self.t;
        let one = self.eps().of(1.0);
        let prefactor = self
            .eps()
            .of(0.5 * lam_pp1 * self.ensemble.rho_prime_one().powi(2))
            * self.growth_pow(s2 - s1 - 2);
        let lam_pp_ratio = {
            let lam_pp = self.ensemble.lambda().eval_deriv_in(self.traj.p(t - s1), 2);
            self.eps() * lam_pp.of(1.0 / lam_pp1) * lam_pp
        };
        let inner = one.clone() - lam_pp_ratio * self.g1(t - s1, s2 - 2 * s1 - 1);
        let boundary = one - self.chk_ratio(t - s1 + 1) * inner;
        let tail = self.g(t, s1 - 1, &boundary);
        prefactor * self.traj.q(t + 1).clone() * tail
    }

    /// Contribution of types III/IV (shallowest cycle node is a check
    /// node). Zero when `rho''(1) = 0`, mirroring the `lambda''(1) = 0`
    /// rule: the prefactor vanishes, so the product is zero without ever
    /// forming the `rho''(1 - Q)/rho''(1)` ratio.
    pub fn term_c(&mut self, s1: usize, s2: usize) -> R {
        let rho_pp1 = self.ensemble.rho_double_prime_one();
        if rho_pp1 == 0.0 {
            return self.eps().of(0.0);
        }
        let t = self.t;
        let one = self.eps().of(1.0);
        let prefactor = self
            .eps()
            .of(0.5 * rho_pp1 * self.ensemble.lambda_prime_one())
            * self.growth_pow(s2 - s1 - 2);
        let rho_pp_ratio = {
            let omq = one.clone() - self.traj.q(t - s1).clone();
            let rho_pp = self.ensemble.rho().eval_deriv_in(&omq, 2);
            rho_pp.of(1.0 / rho_pp1) * rho_pp
        };
        let boundary = one - rho_pp_ratio * self.g3(t - s1 - 1, s2 - 2 * s1 - 2);
        let tail = self.g(t, s1, &boundary);
        prefactor * self.traj.q(t + 1).clone() * tail
    }

    /// Contribution of types V/VI (the cycle passes through the root).
    pub fn term_r(&mut self, s: usize) -> R {
        let t = self.t;
        self.eps().of(0.5) * self.growth_pow(s) * self.var_ratio(t) * self.g1(t, s - 1)
    }

    /// Evaluate one validated term.
    pub fn term(&mut self, params: CycleParams) -> R {
        match params.kind {
            CycleKind::V => self.term_v(params.s1, params.s2),
            CycleKind::C => self.term_c(params.s1, params.s2),
            CycleKind::R => self.term_r(params.s2),
        }
    }
}

/// All parameter combinations contributing to `gamma(eps, t)`.
pub fn cycle_params(t: usize) -> Vec<CycleParams> {
    let mut all = Vec::new();
    if t == 0 {
        return all;
    }
    for s1 in 1..t {
        for s2 in 2 * s1 + 1..=2 * t {
            all.push(CycleParams {
                kind: CycleKind::V,
                s1,
                s2,
            });
        }
    }
    for s1 in 0..t {
        for s2 in 2 * s1 + 2..=2 * t {
            all.push(CycleParams {
                kind: CycleKind::C,
                s1,
                s2,
            });
        }
    }
    for s in 1..=2 * t {
        all.push(CycleParams {
            kind: CycleKind::R,
            s1: 0,
            s2: s,
        });
    }
    all
}

/// `gamma(eps, t)` at the precision of the trajectory, which must reach
/// horizon `t` (the terms consume `Q(t+1)`).
pub fn gamma_in<R: Real>(ensemble: &Ensemble, traj: &DensityTrajectory<R>, t: usize) -> R {
    let mut rec = CycleRecursions::new(ensemble, traj, t);
    let mut total = traj.epsilon().of(0.0);
    for params in cycle_params(t) {
        total = total + rec.term(params);
    }
    total
}

/// `gamma(eps, t)` evaluated with `precision_bits` mantissa bits.
pub fn gamma(ensemble: &Ensemble, epsilon: f64, t: usize, precision_bits: u32) -> f64 {
    let eps = MpReal::with_bits(epsilon, precision_bits as usize);
    let traj = evolve_in(ensemble, &eps, t);
    gamma_in(ensemble, &traj, t).to_f64()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density_evolution::evolve;
    use crate::ensemble::irregular_example;
    use approx::assert_abs_diff_eq;

    /// Direct triple sum for `xi(t)`: the gamma prefactors without the
    /// erasure probabilities.
    fn xi_direct(ens: &Ensemble, t: usize) -> f64 {
        let c = ens.lambda_prime_one() * ens.rho_prime_one();
        let mut sum = 0.0;
        for s1 in 1..t {
            for s2 in 2 * s1 + 1..=2 * t {
                sum += 0.5
                    * ens.lambda_double_prime_one()
                    * ens.rho_prime_one().powi(2)
                    * c.powi((s2 - s1 - 2) as i32);
            }
        }
        for s1 in 0..t {
            for s2 in 2 * s1 + 2..=2 * t {
                sum += 0.5
                    * ens.rho_double_prime_one()
                    * ens.lambda_prime_one()
                    * c.powi((s2 - s1 - 2) as i32);
            }
        }
        for s in 1..=2 * t {
            sum += 0.5 * c.powi(s as i32);
        }
        sum
    }

    #[test]
    fn recursion_base_cases() {
        let ens = Ensemble::regular(3, 6).unwrap();
        let traj = evolve(&ens, 0.4, 3);
        let mut rec = CycleRecursions::new(&ens, &traj, 3);
        // f(0, s, p) = eps
        for s in 0..4 {
            assert_eq!(rec.f(0, s, &0.77), 0.4);
        }
        // g(t, 0, p) = p
        for tau in 0..=3 {
            assert_eq!(rec.g(tau, 0, &0.77), 0.77);
        }
        // G2(t, 0) = eps * lambda'(P(t)) / lambda'(1)
        for tau in 0..=3 {
            let expected =
                0.4 * ens.lambda().eval_deriv(*traj.p(tau), 1) / ens.lambda_prime_one();
            assert_abs_diff_eq!(rec.g2(tau, 0), expected, epsilon = 1e-15);
        }
    }

    #[test]
    fn gamma_edge_cases() {
        for ens in [
            Ensemble::regular(2, 3).unwrap(),
            Ensemble::regular(3, 6).unwrap(),
            irregular_example(),
        ] {
            // t = 0: every parameter range is empty
            let traj = evolve(&ens, 0.5, 0);
            assert_eq!(gamma_in(&ens, &traj, 0), 0.0);
            assert!(cycle_params(0).is_empty());
            // eps = 0: the Q(t+1) and eps*lambda'(P)/lambda'(1) prefactors vanish
            for t in 1..5 {
                let traj = evolve(&ens, 0.0, t);
                assert_eq!(gamma_in(&ens, &traj, t), 0.0);
            }
        }
    }

    #[test]
    fn regular_23_eps_one_t_one() {
        // type III/IV contributes 1, types V/VI contribute 3, and types
        // I/II vanish because lambda''(1) = 0
        let ens = Ensemble::regular(2, 3).unwrap();
        let traj = evolve(&ens, 1.0, 1);
        let mut rec = CycleRecursions::new(&ens, &traj, 1);
        assert_abs_diff_eq!(rec.term_c(0, 2), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(rec.term_r(1) + rec.term_r(2), 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(gamma_in(&ens, &traj, 1), 4.0, epsilon = 1e-12);
    }

    #[test]
    fn lambda_second_derivative_zero_kills_type_v() {
        let ens = Ensemble::regular(2, 4).unwrap();
        let traj = evolve(&ens, 0.7, 3);
        let mut rec = CycleRecursions::new(&ens, &traj, 3);
        for s1 in 1..3usize {
            for s2 in 2 * s1 + 1..=6 {
                assert_eq!(rec.term_v(s1, s2), 0.0);
            }
        }
    }

    #[test]
    fn gamma_at_eps_one_equals_xi() {
        for ens in [
            Ensemble::regular(2, 3).unwrap(),
            Ensemble::regular(3, 6).unwrap(),
            irregular_example(),
        ] {
            for t in 0..=8 {
                let g = gamma(&ens, 1.0, t, 256);
                let xi = xi_direct(&ens, t);
                assert!(
                    (g - xi).abs() <= 1e-10 * xi.abs().max(1.0),
                    "t={t}: gamma(1,t)={g} vs xi={xi}"
                );
            }
        }
    }

    #[test]
    fn gamma_nonnegative_on_unit_interval() {
        for ens in [
            Ensemble::regular(2, 3).unwrap(),
            Ensemble::regular(3, 6).unwrap(),
            irregular_example(),
        ] {
            for t in 0..=5 {
                for eps10 in 0..=10 {
                    let traj = evolve(&ens, eps10 as f64 / 10.0, t);
                    assert!(gamma_in(&ens, &traj, t) >= 0.0);
                }
            }
        }
    }

    #[test]
    fn cycle_params_validation() {
        assert!(CycleParams::new(CycleKind::V, 1, 3, 2).is_ok());
        assert!(CycleParams::new(CycleKind::V, 0, 3, 2).is_err());
        assert!(CycleParams::new(CycleKind::V, 1, 2, 2).is_err());
        assert!(CycleParams::new(CycleKind::C, 0, 2, 1).is_ok());
        assert!(CycleParams::new(CycleKind::C, 1, 3, 1).is_err());
        assert!(CycleParams::new(CycleKind::R, 0, 2, 1).is_ok());
        assert!(CycleParams::new(CycleKind::R, 0, 3, 1).is_err());
        // every enumerated parameter set validates
        for t in 0..5 {
            for p in cycle_params(t) {
                assert!(CycleParams::new(p.kind, p.s1, p.s2, t).is_ok());
            }
        }
    }

    #[test]
    fn cycle_probabilities_stay_in_unit_interval() {
        let ens = irregular_example();
        for eps in [0.3, 0.8] {
            let traj = evolve(&ens, eps, 4);
            let mut rec = CycleRecursions::new(&ens, &traj, 4);
            for tau in 1..=4usize {
                for s in 0..=2 * tau - 1 {
                    let v = rec.g1(tau, s);
                    assert!((-1e-12..=1.0 + 1e-12).contains(&v), "g1({tau},{s})={v}");
                }
            }
        }
    }
}
