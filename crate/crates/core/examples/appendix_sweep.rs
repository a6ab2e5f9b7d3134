//! Prints the worst-case Appendix ratios over the certification sweep.
use vnfp_core::geometry::{lipschitz_ratios, sweep_points, AppendixRatios};

fn main() {
    let pts = sweep_points(100, 100, (-10.0, 2.0), 100.0);
    let worst = pts
        .iter()
        .map(|(fv, mp)| AppendixRatios::at(fv, mp))
        .fold(AppendixRatios::default(), AppendixRatios::max);
    for (name, v) in worst.entries() {
        println!("{name:40} {v:.6}");
    }
    let (mut a, mut b) = (0.0_f64, 0.0_f64);
    for (n, (fv, mp)) in pts.iter().enumerate() {
        let phi2 = -10.0 + 12.0 * ((n as f64 * 0.618_033_988_749_894_9).fract());
        let (x, y) = lipschitz_ratios(fv.phi(), phi2, mp);
        a = a.max(x);
        b = b.max(y);
    }
    println!("lipschitz D {a:.6}  div {b:.6}");
}
