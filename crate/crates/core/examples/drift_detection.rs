// Compare a training summary against shifted production summaries.

use chrono::NaiveDate;
use driftwatch::{drift_evaluate, ks_critical_distance, ApproxCdf, QuantileSketch};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn summary(rng: &mut ChaCha8Rng, n: usize, shift: f64) -> driftwatch::Result<ApproxCdf> {
    let mut sketch = QuantileSketch::new(0.001)?;
    sketch.extend((0..n).map(|_| shift + rng.sample::<f64, _>(StandardNormal)))?;
    ApproxCdf::build(&sketch, 100, "feature")
}

pub fn run() -> driftwatch::Result<()> {
    let n = 20_000;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let baseline = summary(&mut rng, n, 0.0)?;
    let critical = ks_critical_distance(0.05, n as u64, n as u64)?;
    println!("critical distance at alpha = 0.05: {critical:.5}");
    let day = NaiveDate::from_ymd_opt(2022, 3, 20).expect("valid date");
    println!("{:>6}  {:>8}  {:>10}  {:>6}  drift?", "shift", "d_ks", "p", "bc");
    for shift in [0.0, 0.02, 0.05, 0.1, 0.5] {
        let current = summary(&mut rng, n, shift)?;
        let m = drift_evaluate(&baseline, &current, day, 100)?;
        println!(
            "{shift:>6}  {:>8.5}  {:>10.3e}  {:>6.4}  {}",
            m.d_ks,
            m.p_value,
            m.bc,
            if m.d_ks > critical { "yes" } else { "no" }
        );
    }
    Ok(())
}

fn main() -> driftwatch::Result<()> {
    run()
}
