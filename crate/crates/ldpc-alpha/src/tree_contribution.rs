//! The cycle-free contribution `beta(eps, t)` to the 1/n coefficient.
//!
//! `beta` is an expectation over the depth-`t` tree ensemble of
//! `K(K-1)P`, `V_i(V_i-1)P` and `C_j(C_j-1)P`, where `K` counts edges,
//! `V_i` (`C_j`) counts variable (check) nodes of degree `i` (`j`) and `P`
//! is the root erasure probability. The expectations are second
//! derivatives of a canonical generating function and are evaluated by
//! augmenting density evolution with census moments: for each census a
//! quartet of sequences — plain and erasure-reweighted first and second
//! derivatives — on check-rooted and variable-rooted subtrees.

use std::collections::BTreeMap;

use crate::density_evolution::{evolve_in, DensityTrajectory};
use crate::ensemble::Ensemble;
use crate::real::{MpReal, Real};

/// First/second derivative of one census generating function, plain and
/// erasure-reweighted. At level 0 all four values are 0.
#[derive(Debug, Clone)]
pub struct Moments<R> {
    pub d1: R,
    pub d2: R,
    pub w1: R,
    pub w2: R,
}

impl<R: Real> Moments<R> {
    fn zero(like: &R) -> Self {
        Moments {
            d1: like.of(0.0),
            d2: like.of(0.0),
            w1: like.of(0.0),
            w2: like.of(0.0),
        }
    }
}

/// Census moments of one iteration level. `*_c` lives on check-rooted
/// subtrees, `*_v` on variable-rooted ones; per-degree maps hold only
/// degrees with nonzero coefficient.
#[derive(Debug, Clone)]
pub struct Level<R> {
    pub edge_c: Moments<R>,
    pub edge_v: Moments<R>,
    pub var_c: BTreeMap<u32, Moments<R>>,
    pub var_v: BTreeMap<u32, Moments<R>>,
    pub chk_c: BTreeMap<u32, Moments<R>>,
    pub chk_v: BTreeMap<u32, Moments<R>>,
}

/// Augmented density evolution state up to `t` iterations.
#[derive(Debug, Clone)]
pub struct AugmentedState<R> {
    levels: Vec<Level<R>>,
}

impl<R: Real> AugmentedState<R> {
    pub fn t(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn level(&self, tau: usize) -> &Level<R> {
        &self.levels[tau]
    }

    pub fn last(&self) -> &Level<R> {
        self.levels.last().expect("base level always present")
    }
}

/// Expectations of `K(K-1)P`, `V_i(V_i-1)P`, `C_j(C_j-1)P` over the
/// depth-`t` tree ensemble.
#[derive(Debug, Clone)]
pub struct TreeExpectations<R> {
    pub ek: R,
    pub ev: BTreeMap<u32, R>,
    pub ec: BTreeMap<u32, R>,
}

/// Run the augmented density evolution for `t` iterations at the precision
/// of the trajectory, which must have horizon at least `t`.
pub fn augmented_de<R: Real>(
    ensemble: &Ensemble,
    traj: &DensityTrajectory<R>,
    t: usize,
) -> AugmentedState<R> {
    assert!(traj.horizon() >= t, "trajectory horizon below t");
    let eps = traj.epsilon().clone();
    let zero = eps.of(0.0);

    let var_degrees: Vec<(u32, f64)> = ensemble.lambda().support().collect();
    let chk_degrees: Vec<(u32, f64)> = ensemble.rho().support().collect();
    let zero_map = |degrees: &[(u32, f64)]| -> BTreeMap<u32, Moments<R>> {
        degrees
            .iter()
            .map(|&(d, _)| (d, Moments::zero(&zero)))
            .collect()
    };

    let mut levels = Vec::with_capacity(t + 1);
    levels.push(Level {
        edge_c: Moments::zero(&zero),
        edge_v: Moments::zero(&zero),
        var_c: zero_map(&var_degrees),
        var_v: zero_map(&var_degrees),
        chk_c: zero_map(&chk_degrees),
        chk_v: zero_map(&chk_degrees),
    });

    let one = eps.of(1.0);
    let two = eps.of(2.0);
    let lam_p1 = eps.of(ensemble.lambda_prime_one());
    let lam_pp1 = eps.of(ensemble.lambda_double_prime_one());
    let rho_p1 = eps.of(ensemble.rho_prime_one());
    let rho_pp1 = eps.of(ensemble.rho_double_prime_one());

    for tau in 1..=t {
        let new_level = {
        let prev = levels.last().expect("previous level");
        let p_prev = traj.p(tau - 1);
        let omq = one.clone() - traj.q(tau).clone(); // 1 - Q(tau)
        let eps_lam = eps.clone() * ensemble.lambda().eval_deriv_in(p_prev, 0);
        let eps_lam_p = eps.clone() * ensemble.lambda().eval_deriv_in(p_prev, 1);
        let eps_lam_pp = eps.clone() * ensemble.lambda().eval_deriv_in(p_prev, 2);
        let rho_at = ensemble.rho().eval_deriv_in(&omq, 0);
        let rho_p_at = ensemble.rho().eval_deriv_in(&omq, 1);
        let rho_pp_at = ensemble.rho().eval_deriv_in(&omq, 2);

        // variable-rooted updates consume the previous check-rooted level
        let step_v = |c: &Moments<R>, lin_d: &R, lin_w: &R, extra_d2: &R, extra_w2: &R| Moments {
            d1: lin_d.clone() + lam_p1.clone() * c.d1.clone(),
            d2: lam_pp1.clone() * c.d1.clone() * c.d1.clone()
                + lam_p1.clone() * c.d2.clone()
                + extra_d2.clone(),
            w1: lin_d.clone() + lam_p1.clone() * c.d1.clone()
                - lin_w.clone()
                - eps_lam_p.clone() * c.w1.clone(),
            w2: lam_pp1.clone() * c.d1.clone() * c.d1.clone()
                + lam_p1.clone() * c.d2.clone()
                + extra_d2.clone()
                - eps_lam_pp.clone() * c.w1.clone() * c.w1.clone()
                - eps_lam_p.clone() * c.w2.clone()
                - extra_w2.clone(),
        };
        // check-rooted updates consume this level's variable-rooted moments
        let step_c = |v: &Moments<R>, lin_d: &R, lin_w: &R, extra_d2: &R, extra_w2: &R| Moments {
            d1: lin_d.clone() + rho_p1.clone() * v.d1.clone(),
            d2: rho_pp1.clone() * v.d1.clone() * v.d1.clone()
                + rho_p1.clone() * v.d2.clone()
                + extra_d2.clone(),
            w1: lin_d.clone() + rho_p1.clone() * v.d1.clone()
                - lin_w.clone()
                - rho_p_at.clone() * v.w1.clone(),
            w2: rho_pp1.clone() * v.d1.clone() * v.d1.clone()
                + rho_p1.clone() * v.d2.clone()
                + extra_d2.clone()
                - rho_pp_at.clone() * v.w1.clone() * v.w1.clone()
                - rho_p_at.clone() * v.w2.clone()
                - extra_w2.clone(),
        };

        // edge census
        let edge_v = step_v(
            &prev.edge_c,
            &one,
            &eps_lam,
            &(two.clone() * lam_p1.clone() * prev.edge_c.d1.clone()),
            &(two.clone() * eps_lam_p.clone() * prev.edge_c.w1.clone()),
        );
        let edge_c = step_c(
            &edge_v,
            &one,
            &rho_at,
            &(two.clone() * rho_p1.clone() * edge_v.d1.clone()),
            &(two.clone() * rho_p_at.clone() * edge_v.w1.clone()),
        );

        // per-variable-degree census
        let mut var_v = BTreeMap::new();
        let mut var_c = BTreeMap::new();
        for &(i, lam_i) in &var_degrees {
            let c_prev = &prev.var_c[&i];
            let lin_d = eps.of(lam_i);
            // eps * lambda_i * P(tau-1)^(i-1)
            let lin_w = eps.clone() * eps.of(lam_i) * p_prev.powi(i - 1);
            let extra_d2 = eps.of(2.0 * lam_i * (i as f64 - 1.0)) * c_prev.d1.clone();
            let extra_w2 = if i >= 2 {
                eps.clone()
                    * eps.of(2.0 * lam_i * (i as f64 - 1.0))
                    * p_prev.powi(i - 2)
                    * c_prev.w1.clone()
            } else {
                zero.clone()
            };
            let v = step_v(c_prev, &lin_d, &lin_w, &extra_d2, &extra_w2);
            // the check-rooted update of a variable census has no linear term
            let c = step_c(&v, &zero, &zero, &zero, &zero);
            var_v.insert(i, v);
            var_c.insert(i, c);
        }

        // per-check-degree census
        let mut chk_v = BTreeMap::new();
        let mut chk_c = BTreeMap::new();
        for &(j, rho_j) in &chk_degrees {
            let c_prev = &prev.chk_c[&j];
            // the variable-rooted update of a check census has no linear term
            let v = step_v(c_prev, &zero, &zero, &zero, &zero);
            let lin_d = eps.of(rho_j);
            // rho_j * (1 - Q(tau))^(j-1)
            let lin_w = eps.of(rho_j) * omq.powi(j - 1);
            let extra_d2 = eps.of(2.0 * rho_j * (j as f64 - 1.0)) * v.d1.clone();
            let extra_w2 = if j >= 2 {
                eps.of(2.0 * rho_j * (j as f64 - 1.0)) * omq.powi(j - 2) * v.w1.clone()
            } else {
                zero.clone()
            };
            let c = step_c(&v, &lin_d, &lin_w, &extra_d2, &extra_w2);
            chk_v.insert(j, v);
            chk_c.insert(j, c);
        }

        Level {
            edge_c,
            edge_v,
            var_c,
            var_v,
            chk_c,
            chk_v,
        }
        };
        levels.push(new_level);
    }
    AugmentedState { levels }
}

/// Assemble the tree-ensemble expectations from the final level of the
/// augmented state.
pub fn expectations<R: Real>(
    state: &AugmentedState<R>,
    ensemble: &Ensemble,
    traj: &DensityTrajectory<R>,
) -> TreeExpectations<R> {
    let t = state.t();
    let eps = traj.epsilon().clone();
    let p_t = traj.p(t);
    let l_p = ensemble.l_node().eval_deriv_in(p_t, 1);
    let l_pp = ensemble.l_node().eval_deriv_in(p_t, 2);
    let last = state.last();

    let second_moment = |m: &Moments<R>| -> R {
        eps.clone() * l_pp.clone() * m.w1.clone() * m.w1.clone()
            + eps.clone() * l_p.clone() * m.w2.clone()
    };

    let ek = second_moment(&last.edge_c);
    let ev = ensemble
        .lambda()
        .support()
        .map(|(i, _)| {
            let m = &last.var_c[&i];
            let l_i = ensemble.l_node().coefficient(i);
            let root_term = eps.of(2.0 * l_i * i as f64)
                * eps.clone()
                * p_t.powi(i - 1)
                * m.w1.clone();
            (i, second_moment(m) + root_term)
        })
        .collect();
    let ec = ensemble
        .rho()
        .support()
        .map(|(j, _)| (j, second_moment(&last.chk_c[&j])))
        .collect();
    TreeExpectations { ek, ev, ec }
}

/// `beta(eps, t)` at the precision of `eps`.
pub fn beta_in<R: Real>(ensemble: &Ensemble, epsilon: &R, t: usize) -> R {
    let traj = evolve_in(ensemble, epsilon, t);
    let state = augmented_de(ensemble, &traj, t);
    let exp = expectations(&state, ensemble, &traj);
    beta_from_expectations(ensemble, &exp)
}

/// Combine the expectations into `beta`. Degrees with zero coefficient are
/// absent from the maps, so the `i/lambda_i`, `j/rho_j` weights are always
/// well defined.
pub fn beta_from_expectations<R: Real>(ensemble: &Ensemble, exp: &TreeExpectations<R>) -> R {
    let mut acc = exp.ek.clone();
    for (i, lam_i) in ensemble.lambda().support() {
        acc = acc - exp.ek.of(i as f64 / lam_i) * exp.ev[&i].clone();
    }
    for (j, rho_j) in ensemble.rho().support() {
        acc = acc - exp.ek.of(j as f64 / rho_j) * exp.ec[&j].clone();
    }
    acc * exp.ek.of(0.5 / ensemble.l_prime_one())
}

/// `beta(eps, t)` evaluated with `precision_bits` mantissa bits.
pub fn beta(ensemble: &Ensemble, epsilon: f64, t: usize, precision_bits: u32) -> f64 {
    beta_in(ensemble, &MpReal::with_bits(epsilon, precision_bits as usize), t).to_f64()
}

/// Closed form of `beta` for the `(l, r)`-regular ensemble, where the
/// cycle-free neighborhood graph is unique:
/// `beta = -1/2 * l(r-1) * (1 - c^t)/(1 - c) * c^t * eps * P(t)^l` with
/// `c = (l-1)(r-1)`.
///
/// The formula itself is cancellation-free, but `P(t)` evaluated by plain
/// double-precision density evolution loses digits to `1 - rho(1 - Q)`
/// when `Q` is small, so `P(t)` is taken from a 512-bit trajectory (enough for `t <= 8`
/// anywhere on the unit interval).
pub fn beta_regular_closed_form(l: u32, r: u32, epsilon: f64, t: usize) -> f64 {
    let ensemble = Ensemble::regular(l, r).expect("valid regular ensemble");
    let traj = evolve_in(&ensemble, &MpReal::with_bits(epsilon, 512), t);
    let p_t = traj.p(t).to_f64();
    let c = ((l - 1) * (r - 1)) as f64;
    let c_t = c.powi(t as i32);
    let geometric = if c == 1.0 {
        t as f64
    } else {
        (1.0 - c_t) / (1.0 - c)
    };
    -0.5 * (l * (r - 1)) as f64 * geometric * c_t * epsilon * p_t.powi(l as i32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density_evolution::evolve;
    use crate::ensemble::irregular_example;
    use approx::assert_abs_diff_eq;

    fn relative_close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300)
    }

    #[test]
    fn depth_zero_is_all_zero() {
        let ens = irregular_example();
        let traj = evolve(&ens, 0.6, 0);
        let state = augmented_de(&ens, &traj, 0);
        let last = state.last();
        for m in [&last.edge_c, &last.edge_v] {
            assert_eq!(m.d1, 0.0);
            assert_eq!(m.d2, 0.0);
            assert_eq!(m.w1, 0.0);
            assert_eq!(m.w2, 0.0);
        }
        let exp = expectations(&state, &ens, &traj);
        assert_eq!(exp.ek, 0.0);
        assert!(exp.ev.values().all(|&v| v == 0.0));
        assert!(exp.ec.values().all(|&v| v == 0.0));
        assert_eq!(beta_in(&ens, &0.6, 0), 0.0);
    }

    #[test]
    fn regular_23_first_level_by_hand() {
        // edge census on (2,3): after one iteration the variable-rooted
        // first moment is 1 and the check-rooted one is 1 + rho'(1) = 3
        let ens = Ensemble::regular(2, 3).unwrap();
        let traj = evolve(&ens, 0.7, 1);
        let state = augmented_de(&ens, &traj, 1);
        assert_eq!(state.level(1).edge_v.d1, 1.0);
        assert_eq!(state.level(1).edge_c.d1, 3.0);
    }

    #[test]
    fn eps_one_weighted_equals_plain_for_23() {
        // at eps = 1, rho(1-Q) = rho(0) = 0 and rho'(0) = 0 for the (2,3)
        // ensemble, so the reweighted edge census equals the plain one
        let ens = Ensemble::regular(2, 3).unwrap();
        let traj = evolve(&ens, 1.0, 4);
        let state = augmented_de(&ens, &traj, 4);
        for tau in 1..=4 {
            let level = state.level(tau);
            assert_abs_diff_eq!(level.edge_c.d1, level.edge_c.w1, epsilon = 1e-12);
            assert_abs_diff_eq!(level.edge_c.d2, level.edge_c.w2, epsilon = 1e-9);
        }
    }

    #[test]
    fn weighted_dominated_by_plain() {
        // erasure probabilities lie in [0,1], so reweighting cannot grow
        // the first moment
        for ens in [
            Ensemble::regular(2, 3).unwrap(),
            Ensemble::regular(3, 6).unwrap(),
            irregular_example(),
        ] {
            for eps in [0.2, 0.5, 0.9] {
                let traj = evolve(&ens, eps, 6);
                let state = augmented_de(&ens, &traj, 6);
                for tau in 0..=6 {
                    let level = state.level(tau);
                    assert!(level.edge_c.w1 <= level.edge_c.d1 + 1e-12);
                }
            }
        }
    }

    #[test]
    fn beta_edge_cases() {
        for ens in [
            Ensemble::regular(2, 3).unwrap(),
            Ensemble::regular(3, 6).unwrap(),
            irregular_example(),
        ] {
            for eps in [0.0, 0.3, 1.0] {
                assert_eq!(beta_in(&ens, &eps, 0), 0.0);
            }
            for t in 0..6 {
                assert_eq!(beta_in(&ens, &0.0, t), 0.0);
            }
        }
    }

    #[test]
    fn beta_23_at_eps_one_t_one() {
        assert_abs_diff_eq!(beta(&Ensemble::regular(2, 3).unwrap(), 1.0, 1, 128), -4.0);
        assert_abs_diff_eq!(beta_regular_closed_form(2, 3, 1.0, 1), -4.0);
    }

    #[test]
    fn general_path_matches_regular_closed_form() {
        // Deep below threshold P(t) collapses doubly exponentially and the
        // reweighted recursions cancel ~100 digits internally, so the
        // general path runs at 1024 bits here.
        for (l, r) in [(2u32, 3u32), (3, 6), (3, 4)] {
            let ens = Ensemble::regular(l, r).unwrap();
            for t in 0..=8 {
                for eps10 in 1..=9 {
                    let eps = eps10 as f64 / 10.0;
                    let general = beta(&ens, eps, t, 1024);
                    let closed = beta_regular_closed_form(l, r, eps, t);
                    assert!(
                        relative_close(general, closed, 1e-10),
                        "(l,r)=({l},{r}) eps={eps} t={t}: {general} vs {closed}"
                    );
                }
            }
        }
    }

    #[test]
    fn f64_and_mp_agree_at_small_t() {
        let ens = irregular_example();
        let b64 = beta_in(&ens, &0.5, 3);
        let bmp = beta(&ens, 0.5, 3, 256);
        assert!(relative_close(b64, bmp, 1e-10), "{b64} vs {bmp}");
    }
}
