// Generate synthetic supply-chain data and inspect it.

use driftwatch::{generate_synthetic, SynthSpec};

pub fn run() -> driftwatch::Result<()> {
    let dir = std::env::temp_dir().join(format!("driftwatch-synth-{}", std::process::id()));
    let spec = SynthSpec {
        n_units: 1_000,
        location_shift: 0.5,
        ..SynthSpec::default()
    };
    let ds = generate_synthetic(&spec, &dir)?;
    for handle in [&ds.training, &ds.daily_inference, &ds.daily_sales] {
        println!("{:?}: {} columns {:?}", handle.kind(), handle.columns().len(), handle.columns());
    }
    for col in ds.training.feature_columns() {
        let train = ds.training.read_column(col)?.values;
        let prod = ds.daily_inference.read_column(col)?.values;
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        println!("{col}: training mean {:>8.3}  production mean {:>8.3}", mean(&train), mean(&prod));
    }
    let units = ds.daily_sales.read_column("units")?.values;
    println!("{} sales rows, {} units sold", units.len(), units.iter().sum::<f64>());
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}

fn main() -> driftwatch::Result<()> {
    run()
}
