use sphae::spectral::*;
use std::time::Instant;
fn main() {
    for b in [8usize, 16, 30] {
        let f = S2Signal::<f64>::constant(20, b, 1.0);
        let t = Instant::now();
        let _ = S2Transform::<f64>::shared(b);
        let setup = t.elapsed();
        let t = Instant::now();
        let s = s2_analyze(&f).unwrap();
        let a = t.elapsed();
        let t = Instant::now();
        let _ = s2_synthesize(&s).unwrap();
        println!("s2 b={b} setup {setup:?} analyze(20ch) {a:?} synth {:?}", t.elapsed());
    }
    for b in [4usize, 6, 8, 12] {
        let f = SO3Signal::<f64>::constant(20, b, 1.0);
        let t = Instant::now();
        let _ = SO3Transform::<f64>::shared(b);
        let setup = t.elapsed();
        let t = Instant::now();
        let s = so3_analyze(&f).unwrap();
        let a = t.elapsed();
        let t = Instant::now();
        let _ = so3_synthesize(&s).unwrap();
        println!("so3 b={b} setup {setup:?} analyze(20ch) {a:?} synth {:?}", t.elapsed());
    }
}
