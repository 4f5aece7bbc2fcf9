// The full workflow: register a model, snapshot baselines at training time,
// run monitors in production, react to the metrics, and read the logs.

use chrono::{DateTime, Utc};
use driftwatch::monitor::{Comparator, PARAM_EPSILON};
use driftwatch::{
    generate_synthetic, FsStore, MonitorConfig, Monitoring, ProductionData, ReactionConfig, ReactionSpec,
    SynthSpec,
};

pub fn run() -> driftwatch::Result<()> {
    let root = std::env::temp_dir().join(format!("driftwatch-lifecycle-{}", std::process::id()));
    let spec = SynthSpec {
        n_units: 5_000,
        location_shift: 0.3,
        ..SynthSpec::default()
    };
    // Model data and monitoring data live under separate roots.
    let ds = generate_synthetic(&spec, root.join("model-data"))?;
    let svc = Monitoring::new(FsStore::open(root.join("monitoring"))?);

    svc.register_model("velocity", "seven-day velocity forecaster")?;
    svc.set_monitor(
        MonitorConfig::drift("velocity", "features", ["f1", "f2", "f3", "prediction"])
            .with_parameter(PARAM_EPSILON, 0.001),
    )?;
    svc.set_monitor(MonitorConfig::performance("velocity", "accuracy"))?;

    // Training time.
    for cdf in svc.snapshot_baseline("velocity", "features", &ds.training)? {
        println!("baseline {:<10} n={} range [{:.3}, {:.3}]", cdf.label(), cdf.sample_count(), cdf.min(), cdf.max());
    }

    // Production: drift the same day, accuracy once the week of sales is in.
    let day = spec.inference_date;
    let data = ProductionData::with_sales(ds.daily_inference.clone(), ds.daily_sales.clone());
    for r in svc.run_monitor("velocity", "features", day, &data)? {
        println!("{} {:<10} {:?}", r.eval_date, r.quantity_label(), r.metrics);
    }
    for r in svc.run_monitor("velocity", "accuracy", day, &data)? {
        println!("{} accuracy   {:?}", r.eval_date, r.metrics);
    }

    svc.set_reaction(ReactionConfig {
        reaction_id: "ks-alert".into(),
        model_id: "velocity".into(),
        spec: ReactionSpec::Threshold {
            monitor_id: "features".into(),
            metric_name: "ks_distance".into(),
            comparator: Comparator::Gt,
            threshold: 0.05,
            quantity: None,
        },
    })?;
    svc.run_reaction("velocity", "ks-alert", day)?;
    for log in svc.get_logs("velocity", "ks-alert", DateTime::<Utc>::MIN_UTC, DateTime::<Utc>::MAX_UTC)? {
        println!(
            "{:?}: {} ks_distance = {:.4}",
            log.severity, log.body["quantity_label"], log.body["value"].as_f64().unwrap_or(f64::NAN)
        );
    }
    std::fs::remove_dir_all(&root)?;
    Ok(())
}

fn main() -> driftwatch::Result<()> {
    run()
}
