use ldpc_alpha::ensemble::Ensemble;
use ldpc_alpha::simulator::estimate_pb;
use std::time::Instant;

fn main() {
    let ens36 = Ensemble::regular(3, 6).unwrap();
    let start = Instant::now();
    let r = estimate_pb(&ens36, 100_000, 0.4, 3, 100, 1).unwrap();
    println!("(3,6) n=1e5 t=3 100 trials: {:?} pb={}", start.elapsed(), r.pb_hat);

    let ens23 = Ensemble::regular(2, 3).unwrap();
    let start = Instant::now();
    let r = estimate_pb(&ens23, 801, 0.4, 20, 10_000, 1).unwrap();
    println!("(2,3) n=801 t=20 1e4 trials: {:?} pb={}", start.elapsed(), r.pb_hat);
}
