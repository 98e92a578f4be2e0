//! Assembly of `alpha(eps, t) = beta + gamma`, the single-cycle
//! probability coefficient `xi(t)`, a cancellation-free direct form for
//! regular ensembles, and the `t -> inf` limit.
//!
//! `beta` and `gamma` grow exponentially in `t` with opposite signs while
//! their sum stays bounded, so the general path runs at configurable
//! precision and escalates automatically when the measured cancellation
//! eats into the requested accuracy. The regular-ensemble direct form
//! cancels the two parts analytically and is safe in plain doubles.

use std::collections::HashMap;

use crate::cycle_contribution::{cycle_params, gamma_in, CycleKind};
use crate::density_evolution::{
    evolve, evolve_in, fixed_point, DensityTrajectory, FIXED_POINT_MAX_ITER, FIXED_POINT_TOL,
};
use crate::ensemble::Ensemble;
use crate::real::{MpReal, Real};
use crate::tree_contribution::{augmented_de, beta_from_expectations, expectations};

/// Hard ceiling for automatic precision escalation.
pub const MAX_PRECISION_BITS: u32 = 4096;
/// `alpha_limit` reports "undefined" when `p*q` comes this close to 1.
pub const LIMIT_PQ_TOL: f64 = 1e-9;

/// One evaluation of `alpha(eps, t)` with its parts and precision
/// diagnostics. The `beta`, `gamma` and `alpha` fields are double
/// projections of values computed (and summed) in the working precision.
#[derive(Debug, Clone, Copy)]
pub struct AlphaBreakdown {
    pub epsilon: f64,
    pub t: usize,
    pub beta: f64,
    pub gamma: f64,
    pub alpha: f64,
    /// Mantissa bits actually used (after any escalation).
    pub precision_bits: u32,
    /// `log10(max(|beta|, |gamma|) / |alpha|)`; 0 when all parts vanish.
    pub cancellation_digits: f64,
}

/// `xi(t)`: the coefficient of 1/n in the total probability of
/// single-cycle neighborhood graphs, in closed form. At
/// `lambda'(1) rho'(1) = 1` the geometric ratios degenerate to plain term
/// counts.
pub fn xi(ensemble: &Ensemble, t: usize) -> f64 {
    if t == 0 {
        return 0.0;
    }
    let lp = ensemble.lambda_prime_one();
    let lpp = ensemble.lambda_double_prime_one();
    let rp = ensemble.rho_prime_one();
    let rpp = ensemble.rho_double_prime_one();
    let c = lp * rp;
    let t_i = t as i32;
    let (pairs_v, pairs_c, run_r) = if c == 1.0 {
        ((t * (t - 1)) as f64, (t * t) as f64, 2.0 * t as f64)
    } else {
        let c_t = c.powi(t_i);
        let denom = (1.0 - c).powi(2);
        (
            (1.0 - c.powi(t_i - 1)) * (1.0 - c_t) / denom,
            (1.0 - c_t) * (1.0 - c_t) / denom,
            (1.0 - c.powi(2 * t_i)) / (1.0 - c),
        )
    };
    0.5 * (lpp * rp * rp * pairs_v + rpp * lp * pairs_c + c * run_r)
}

/// `alpha(eps, t)` via the general tree + single-cycle path at
/// `precision_bits >= 53` mantissa bits, escalating (doubling, up to
/// [`MAX_PRECISION_BITS`]) while the measured cancellation leaves fewer
/// than 12 significant decimal digits.
pub fn alpha(ensemble: &Ensemble, epsilon: f64, t: usize, precision_bits: u32) -> AlphaBreakdown {
    assert!(precision_bits >= 53, "precision must be at least 53 bits");
    let mut bits = precision_bits;
    loop {
        let breakdown = alpha_at_bits(ensemble, epsilon, t, bits);
        let digits_available = bits as f64 * std::f64::consts::LOG10_2 - 12.0;
        if breakdown.cancellation_digits > digits_available && bits < MAX_PRECISION_BITS {
            bits = (bits * 2).min(MAX_PRECISION_BITS);
            continue;
        }
        return breakdown;
    }
}

fn alpha_at_bits(ensemble: &Ensemble, epsilon: f64, t: usize, bits: u32) -> AlphaBreakdown {
    let eps = MpReal::with_bits(epsilon, bits as usize);
    let traj = evolve_in(ensemble, &eps, t);
    let state = augmented_de(ensemble, &traj, t);
    let beta = beta_from_expectations(ensemble, &expectations(&state, ensemble, &traj));
    let gamma = gamma_in(ensemble, &traj, t);
    let alpha = beta.clone() + gamma.clone();
    let largest = if beta.abs() > gamma.abs() {
        beta.abs()
    } else {
        gamma.abs()
    };
    let cancellation_digits = if largest.is_zero() {
        0.0
    } else if alpha.is_zero() {
        f64::INFINITY
    } else {
        (largest / alpha.abs()).to_f64().log10()
    };
    AlphaBreakdown {
        epsilon,
        t,
        beta: beta.to_f64(),
        gamma: gamma.to_f64(),
        alpha: alpha.to_f64(),
        precision_bits: bits,
        cancellation_digits,
    }
}

/// Direct evaluation of `alpha(eps, t)` for the `(l, r)`-regular ensemble.
///
/// The tree part is folded into the cycle sums term by term, which removes
/// the `beta`/`gamma` cancellation; everything runs in plain doubles.
pub fn alpha_regular(l: u32, r: u32, epsilon: f64, t: usize) -> f64 {
    let ensemble = Ensemble::regular(l, r).expect("valid regular ensemble");
    let traj = evolve(&ensemble, epsilon, t);
    let mut rec = RegularRecursions {
        ensemble: &ensemble,
        traj: &traj,
        epsilon,
        h1: HashMap::new(),
        h2: HashMap::new(),
        h3: HashMap::new(),
    };
    let mut total = 0.0;
    for params in cycle_params(t) {
        total += match params.kind {
            CycleKind::V => rec.term_v(t, params.s1, params.s2),
            CycleKind::C => rec.term_c(t, params.s1, params.s2),
            CycleKind::R => rec.term_r(t, params.s2),
        };
    }
    total
}

struct RegularRecursions<'a> {
    ensemble: &'a Ensemble,
    traj: &'a DensityTrajectory<f64>,
    epsilon: f64,
    h1: HashMap<(usize, usize), f64>,
    h2: HashMap<(usize, usize), f64>,
    h3: HashMap<(usize, usize), f64>,
}

impl RegularRecursions<'_> {
    /// `eps * lambda'(P(tau))`
    fn el(&self, tau: usize) -> f64 {
        self.epsilon * self.ensemble.lambda().eval_deriv(*self.traj.p(tau), 1)
    }

    /// `rho'(1 - Q(tau))`
    fn rq(&self, tau: usize) -> f64 {
        self.ensemble.rho().eval_deriv(1.0 - self.traj.q(tau), 1)
    }

    /// `prod_{k=0}^{s-1} rho'(1-Q(tau-k)) * eps*lambda'(P(tau-k-1))`
    fn path(&self, tau: usize, s: usize) -> f64 {
        (0..s)
            .map(|k| self.rq(tau - k) * self.el(tau - k - 1))
            .product()
    }

    fn h1(&mut self, tau: usize, s: usize) -> f64 {
        if let Some(&v) = self.h1.get(&(tau, s)) {
            return v;
        }
        let v = if s == 0 {
            self.ensemble.rho_prime_one() * (1.0 - self.traj.p(tau).powi(2))
        } else if s >= tau {
            self.rq(tau).powi(2) * self.h2(tau - 1, s - 1)
        } else {
            2.0 * (self.ensemble.rho_prime_one() - self.rq(tau))
                * (1.0 - self.traj.p(tau - s))
                * self.path(tau, s)
                + self.rq(tau).powi(2) * self.h2(tau - 1, s - 1)
        };
        self.h1.insert((tau, s), v);
        v
    }

    fn h2(&mut self, tau: usize, s: usize) -> f64 {
        if let Some(&v) = self.h2.get(&(tau, s)) {
            return v;
        }
        let v = if s == 0 {
            self.el(tau) - self.ensemble.lambda_prime_one() * self.traj.q(tau + 1).powi(2)
        } else {
            self.el(tau).powi(2) * self.h1(tau, s - 1)
        };
        self.h2.insert((tau, s), v);
        v
    }

    fn h3(&mut self, tau: usize, s: usize) -> f64 {
        if let Some(&v) = self.h3.get(&(tau, s)) {
            return v;
        }
        let v = if s == 0 {
            let q_next = self.traj.q(tau + 1);
            self.el(tau) - self.ensemble.lambda_prime_one() * q_next * (2.0 - q_next)
        } else if s >= tau {
            -self.el(tau).powi(2) * self.h1(tau, s - 1)
        } else {
            2.0 * self.el(tau) * (1.0 - self.traj.p(tau - s)) * self.path(tau, s)
                - self.el(tau).powi(2) * self.h1(tau, s - 1)
        };
        self.h3.insert((tau, s), v);
        v
    }

    fn term_v(&mut self, t: usize, s1: usize, s2: usize) -> f64 {
        if self.ensemble.lambda_double_prime_one() == 0.0 {
            return 0.0;
        }
        let lam_pp = self.ensemble.lambda().eval_deriv(*self.traj.p(t - s1), 2);
        let chain: f64 = (1..s1).map(|k| self.el(t - k) * self.rq(t - k)).product();
        0.5 * self.traj.q(t + 1)
            * self.rq(t)
            * self.epsilon
            * lam_pp
            * chain
            * self.h1(t - s1, s2 - 2 * s1 - 1)
    }

    fn term_c(&mut self, t: usize, s1: usize, s2: usize) -> f64 {
        let rho_pp = self.ensemble.rho().eval_deriv(1.0 - self.traj.q(t - s1), 2);
        let chain: f64 = (0..s1).map(|k| self.el(t - k - 1) * self.rq(t - k)).product();
        0.5 * self.traj.q(t + 1) * rho_pp * chain * self.h3(t - s1 - 1, s2 - 2 * s1 - 2)
    }

    fn term_r(&mut self, t: usize, s: usize) -> f64 {
        0.5 * self.el(t) * self.h1(t, s - 1)
    }
}

/// Inputs of the `t -> inf` limit for an `(l, r)`-regular ensemble: the
/// density-evolution fixed point and the local slope factors around it.
#[derive(Debug, Clone, Copy)]
pub struct RegularLimitInputs {
    pub p: f64,
    pub q: f64,
    pub v: f64,
    pub w: f64,
    pub p_inf: f64,
    pub q_inf: f64,
}

/// Build the limit inputs from the density-evolution fixed point, or
/// `None` when the fixed-point iteration fails to converge.
pub fn limit_inputs(l: u32, r: u32, epsilon: f64) -> Option<RegularLimitInputs> {
    let ensemble = Ensemble::regular(l, r).expect("valid regular ensemble");
    let fp = fixed_point(&ensemble, epsilon, FIXED_POINT_TOL, FIXED_POINT_MAX_ITER);
    if !fp.converged {
        return None;
    }
    // x^0 = 1 even at x = 0; the (l-2) and (r-2) factors kill the
    // negative-exponent cases before they are formed
    let pow0 = |x: f64, e: i32| if e == 0 { 1.0 } else { x.powi(e) };
    let p = epsilon * (l - 1) as f64 * pow0(fp.p_inf, l as i32 - 2);
    let q = (r - 1) as f64 * pow0(1.0 - fp.q_inf, r as i32 - 2);
    let v = if l == 2 {
        0.0
    } else {
        epsilon * ((l - 1) * (l - 2)) as f64 * pow0(fp.p_inf, l as i32 - 3)
    };
    let w = if r == 2 {
        0.0
    } else {
        ((r - 1) * (r - 2)) as f64 * pow0(1.0 - fp.q_inf, r as i32 - 3)
    };
    Some(RegularLimitInputs {
        p,
        q,
        v,
        w,
        p_inf: fp.p_inf,
        q_inf: fp.q_inf,
    })
}

/// `lim_{t->inf} alpha(eps, t)` for the `(l, r)`-regular ensemble.
///
/// Defined only when `p*q < 1`; at the threshold and at jump
/// discontinuities of the fixed point (`p*q = 1`) the limit is undefined
/// and `None` is returned.
pub fn alpha_limit(l: u32, r: u32, epsilon: f64) -> Option<f64> {
    let inp = limit_inputs(l, r, epsilon)?;
    let pq = inp.p * inp.q;
    if pq >= 1.0 - LIMIT_PQ_TOL {
        return None;
    }
    let resolvent = 1.0 / (1.0 - pq);
    let (p_inf, q_inf) = (inp.p_inf, inp.q_inf);
    let first = 0.5
        * resolvent
        * (pq + q_inf * resolvent * inp.q * inp.q * inp.v)
        * (resolvent * (p_inf - q_inf) + 1.0 - p_inf * q_inf);
    let second = 0.5
        * q_inf
        * resolvent
        * resolvent
        * inp.w
        * inp.p
        * (resolvent * (q_inf - p_inf) + (1.0 - p_inf) * (1.0 - q_inf));
    Some(first + second)
}
