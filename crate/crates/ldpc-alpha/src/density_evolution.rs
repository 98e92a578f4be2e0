//! Density evolution on the binary erasure channel.
//!
//! With `P(0) = 1`, the erasure probabilities of messages evolve as
//! `Q(t) = eps * lambda(P(t-1))` and `P(t) = 1 - rho(1 - Q(t))`, and the
//! bit error probability after `t` iterations is `Pb(t) = eps * L(P(t))`.

use crate::ensemble::Ensemble;
use crate::real::Real;

/// The sequences `P(0..=t)`, `Q(1..=t+1)` and `Pb(0..=t)` for one erasure
/// probability. One extra `Q` value is kept because the single-cycle
/// contribution formulas consume `Q(t+1)`.
#[derive(Debug, Clone)]
pub struct DensityTrajectory<R = f64> {
    epsilon: R,
    horizon: usize,
    p: Vec<R>,
    q: Vec<R>,
    pb: Vec<R>,
}

impl<R: Real> DensityTrajectory<R> {
    pub fn epsilon(&self) -> &R {
        &self.epsilon
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// `P(t)` for `0 <= t <= horizon`.
    pub fn p(&self, t: usize) -> &R {
        &self.p[t]
    }

    /// `Q(t)` for `1 <= t <= horizon + 1`.
    pub fn q(&self, t: usize) -> &R {
        assert!(t >= 1, "Q is defined from iteration 1 on");
        &self.q[t - 1]
    }

    /// `Pb(t) = eps * L(P(t))` for `0 <= t <= horizon`.
    pub fn pb(&self, t: usize) -> &R {
        &self.pb[t]
    }
}

/// Run density evolution for `t` iterations at the precision of `epsilon`.
pub fn evolve_in<R: Real>(ensemble: &Ensemble, epsilon: &R, t: usize) -> DensityTrajectory<R> {
    let one = epsilon.of(1.0);
    let mut p = Vec::with_capacity(t + 1);
    let mut q = Vec::with_capacity(t + 1);
    let mut pb = Vec::with_capacity(t + 1);
    p.push(one.clone());
    for tau in 1..=t + 1 {
        let prev = &p[tau - 1];
        let q_tau = epsilon.clone() * ensemble.lambda().eval_deriv_in(prev, 0);
        if tau <= t {
            let p_tau = one.clone()
                - ensemble
                    .rho()
                    .eval_deriv_in(&(one.clone() - q_tau.clone()), 0);
            p.push(p_tau);
        }
        q.push(q_tau);
    }
    for p_tau in &p {
        pb.push(epsilon.clone() * ensemble.l_node().eval_deriv_in(p_tau, 0));
    }
    DensityTrajectory {
        epsilon: epsilon.clone(),
        horizon: t,
        p,
        q,
        pb,
    }
}

/// Double-precision density evolution.
pub fn evolve(ensemble: &Ensemble, epsilon: f64, t: usize) -> DensityTrajectory<f64> {
    evolve_in(ensemble, &epsilon, t)
}

/// Default convergence tolerance for [`fixed_point`].
pub const FIXED_POINT_TOL: f64 = 1e-14;
/// Default iteration cap for [`fixed_point`].
pub const FIXED_POINT_MAX_ITER: usize = 100_000;
/// A fixed-point `Q` above this value counts as a decoding failure in the
/// threshold predicate.
pub const DELTA_ZERO: f64 = 1e-10;

/// The infinite-iteration limit of density evolution.
#[derive(Debug, Clone, Copy)]
pub struct FixedPoint {
    pub p_inf: f64,
    pub q_inf: f64,
    pub converged: bool,
    pub iterations_used: usize,
}

/// Iterate `Q -> eps * lambda(1 - rho(1 - Q))` from `P(0) = 1` until the
/// step size drops below `tol` or `max_iter` is reached. Monotonicity of
/// the map makes this converge to the largest stable fixed point.
///
/// Near a continuous transition the linear convergence becomes arbitrarily
/// slow and the stalled iterate overstates the limit. The iterates descend
/// monotonically onto the largest fixed point below them, so when the loop
/// stalls (or stops at a near-zero value) the limit is re-located exactly:
/// probe `f(x) - x` on a geometric grid below the last iterate and bisect
/// the first sign change. This keeps the threshold predicate sharp at
/// 1e-6 resolution without an absurd iteration cap.
pub fn fixed_point(ensemble: &Ensemble, epsilon: f64, tol: f64, max_iter: usize) -> FixedPoint {
    assert!(tol > 0.0);
    let step = |q: f64| -> f64 {
        let p = 1.0 - ensemble.rho().eval_deriv(1.0 - q, 0);
        epsilon * ensemble.lambda().eval_deriv(p, 0)
    };
    // Q(1) = eps * lambda(P(0)) = eps
    let mut q = epsilon * ensemble.lambda().eval_deriv(1.0, 0);
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..max_iter {
        let next = step(q);
        iterations += 1;
        let done = (next - q).abs() < tol;
        q = next;
        if done {
            converged = true;
            break;
        }
    }
    let q_inf = if !converged || q <= 1e-6 {
        largest_fixed_point_below(&step, q)
    } else {
        q
    };
    let p_inf = 1.0 - ensemble.rho().eval_deriv(1.0 - q_inf, 0);
    FixedPoint {
        p_inf,
        q_inf,
        converged,
        iterations_used: iterations,
    }
}

/// Largest `x` in `[0, b]` with `step(x) = x`, assuming `step(b) <= b`
/// (which monotone-decreasing iterates guarantee for their last value).
/// Returns 0 when no probe sees `step(x) > x`.
fn largest_fixed_point_below(step: &impl Fn(f64) -> f64, b: f64) -> f64 {
    if b <= 0.0 {
        return 0.0;
    }
    let g = |x: f64| step(x) - x;
    let mut hi = b;
    let mut lo = None;
    for j in 1..=120 {
        let x = b * 2f64.powi(-j);
        if g(x) > 0.0 {
            lo = Some(x);
            break;
        }
        hi = x;
    }
    let mut lo = match lo {
        None => return 0.0,
        Some(lo) => lo,
    };
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// BP threshold by bisection of the predicate
/// `fixed_point(eps).q_inf > DELTA_ZERO` over `[0, 1]`; the result is
/// accurate to `tol`.
pub fn threshold(ensemble: &Ensemble, tol: f64) -> f64 {
    assert!(tol > 0.0);
    let fails = |eps: f64| {
        fixed_point(ensemble, eps, FIXED_POINT_TOL, FIXED_POINT_MAX_ITER).q_inf > DELTA_ZERO
    };
    let mut lo = 0.0;
    let mut hi = 1.0;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if fails(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::irregular_example;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn depth_zero_is_channel_only() {
        for ens in [Ensemble::regular(2, 3).unwrap(), irregular_example()] {
            for eps in [0.0, 0.3, 1.0] {
                let traj = evolve(&ens, eps, 0);
                assert_abs_diff_eq!(*traj.pb(0), eps, epsilon = 1e-14);
                assert_eq!(*traj.p(0), 1.0);
                assert_eq!(*traj.q(1), eps * ens.lambda().eval_deriv(1.0, 0));
            }
        }
    }

    #[test]
    fn zero_erasure_collapses() {
        let ens = Ensemble::regular(3, 6).unwrap();
        let traj = evolve(&ens, 0.0, 4);
        for t in 1..=4 {
            assert_eq!(*traj.p(t), 0.0);
            assert_eq!(*traj.pb(t), 0.0);
        }
    }

    #[test]
    fn regular_36_one_iteration() {
        let ens = Ensemble::regular(3, 6).unwrap();
        let traj = evolve(&ens, 0.4, 1);
        assert_abs_diff_eq!(*traj.q(1), 0.4, epsilon = 1e-15);
        assert_abs_diff_eq!(*traj.p(1), 1.0 - 0.6f64.powi(5), epsilon = 1e-15);
        assert_abs_diff_eq!(*traj.pb(1), 0.3137558671261697, epsilon = 1e-15);
    }

    #[test]
    fn fixed_point_below_threshold() {
        let ens = Ensemble::regular(3, 6).unwrap();
        let fp = fixed_point(&ens, 0.3, 1e-14, 100_000);
        assert!(fp.converged);
        assert!(fp.q_inf.abs() < 1e-12);
        assert!(fp.p_inf.abs() < 1e-11);
    }

    #[test]
    fn fixed_point_at_eps_one() {
        for ens in [Ensemble::regular(2, 3).unwrap(), irregular_example()] {
            let fp = fixed_point(&ens, 1.0, 1e-14, 100_000);
            assert!(fp.converged);
            assert_abs_diff_eq!(fp.q_inf, 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(fp.p_inf, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn fixed_point_above_threshold_self_consistent() {
        let ens = Ensemble::regular(3, 6).unwrap();
        let fp = fixed_point(&ens, 0.45, 1e-14, 100_000);
        assert!(fp.q_inf > 1e-3);
        // residuals of the two fixed-point equations
        let lam_p = ens.lambda().eval_deriv(fp.p_inf, 0);
        assert!((fp.q_inf - 0.45 * lam_p).abs() < 1e-13);
        let p = 1.0 - ens.rho().eval_deriv(1.0 - fp.q_inf, 0);
        assert!((fp.p_inf - p).abs() < 1e-13);
    }

    #[test]
    fn threshold_values() {
        let e23 = Ensemble::regular(2, 3).unwrap();
        assert_abs_diff_eq!(threshold(&e23, 1e-7), 0.5, epsilon = 1e-6);
        let e36 = Ensemble::regular(3, 6).unwrap();
        assert_abs_diff_eq!(threshold(&e36, 1e-6), 0.42944, epsilon = 1e-3);
        let irr = irregular_example();
        assert_abs_diff_eq!(threshold(&irr, 1e-5), 0.8, epsilon = 5e-3);
    }

    #[test]
    fn high_precision_matches_f64() {
        use crate::real::MpReal;
        let ens = irregular_example();
        let traj64 = evolve(&ens, 0.7, 6);
        let traj_mp = evolve_in(&ens, &MpReal::with_bits(0.7, 192), 6);
        for t in 0..=6 {
            assert_abs_diff_eq!(*traj64.p(t), traj_mp.p(t).to_f64(), epsilon = 1e-13);
            assert_abs_diff_eq!(*traj64.pb(t), traj_mp.pb(t).to_f64(), epsilon = 1e-13);
        }
    }

    proptest! {
        /// P and Q stay in [0,1], are non-increasing in t, and Pb is
        /// non-decreasing in eps.
        #[test]
        fn trajectory_monotonicity(eps in 0.0f64..=1.0, l in 2u32..5, r in 3u32..8) {
            prop_assume!(r >= l);
            let ens = Ensemble::regular(l, r).unwrap();
            let traj = evolve(&ens, eps, 8);
            for t in 0..=8 {
                prop_assert!(*traj.p(t) >= 0.0 && *traj.p(t) <= 1.0);
                prop_assert!(*traj.pb(t) >= 0.0 && *traj.pb(t) <= 1.0);
                if t >= 1 {
                    prop_assert!(*traj.p(t) <= *traj.p(t - 1) + 1e-15);
                    prop_assert!(*traj.q(t + 1) <= *traj.q(t) + 1e-15);
                    prop_assert!(*traj.pb(t) <= *traj.pb(t - 1) + 1e-15);
                }
            }
            let lower = evolve(&ens, eps * 0.5, 8);
            for t in 0..=8 {
                prop_assert!(*lower.pb(t) <= *traj.pb(t) + 1e-15);
            }
        }
    }
}
