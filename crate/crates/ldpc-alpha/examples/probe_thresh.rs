use ldpc_alpha::ensemble::Ensemble;
use ldpc_alpha::density_evolution::fixed_point;
fn main() {
    let e = Ensemble::regular(2, 3).unwrap();
    for eps in [0.49990, 0.4999254643917084, 0.49995, 0.499999, 0.5, 0.500001] {
        let fp = fixed_point(&e, eps, 1e-14, 100_000);
        println!("eps={eps:.12} q_inf={:e} converged={} iters={}", fp.q_inf, fp.converged, fp.iterations_used);
    }
}
