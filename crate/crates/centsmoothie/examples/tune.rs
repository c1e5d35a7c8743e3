// Scratch harness for training-speed and quality probes on the synthetic
// benchmark. Not part of the test suite.

use std::time::Instant;

use centsmoothie::metrics::cross_validate_method;
use centsmoothie::model::Method;
use centsmoothie::synth::{generate, SynthConfig};
use centsmoothie::train::{train, TrainConfig};
use centsmoothie::derive_seed;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let mode = args.get(1).map(String::as_str).unwrap_or("speed");
    let m: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(6);
    let epochs: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(100);
    let lr: f64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(0.01);
    let folds: usize = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(2);
    let method = match args.get(6).map(String::as_str) {
        Some("centsimple") => Method::CentSimple,
        Some("baseline") => Method::Baseline,
        _ => Method::CentSmoothie,
    };

    let synth = SynthConfig {
        num_drugs: 200,
        max_groups_per_drug: m,
        seed: derive_seed(7, m as u64),
        ..SynthConfig::default()
    };
    let (g, _) = generate(&synth).unwrap();
    eprintln!(
        "m={m}: |V_D|={} |V_S|={} |E|={}",
        g.num_drugs(),
        g.num_side_effects(),
        g.num_edges()
    );

    let config = TrainConfig {
        method,
        embedding_dim: 20,
        num_layers: 2,
        lambda: 0.01,
        learning_rate: lr,
        epochs,
        seed: 11,
        neg_resample_every: 10,
    };

    match mode {
        "speed" => {
            let t0 = Instant::now();
            let result = train(&g, &config).unwrap();
            let dt = t0.elapsed().as_secs_f64();
            eprintln!(
                "epochs={epochs} lr={lr}: {:.2}s total, {:.1}ms/epoch, loss {:.4} -> {:.4}",
                dt,
                1000.0 * dt / epochs as f64,
                result.loss_trace.first().unwrap_or(&f64::NAN),
                result.loss_trace.last().unwrap_or(&f64::NAN)
            );
            let quarter = result.loss_trace.len() / 4;
            for i in [0, quarter, 2 * quarter, 3 * quarter, result.loss_trace.len() - 1] {
                eprintln!("  epoch {i}: loss {:.5}", result.loss_trace[i]);
            }
        }
        "cv" => {
            let t0 = Instant::now();
            let report = cross_validate_method(&g, method, &config, folds, 99).unwrap();
            let dt = t0.elapsed().as_secs_f64();
            eprintln!(
                "{method} m={m} epochs={epochs} lr={lr} F={folds}: AUC {:.4} +- {:.4}, AUPR {:.4} +- {:.4} ({:.1}s)",
                report.mean_auc, report.std_auc, report.mean_aupr, report.std_aupr, dt
            );
        }
        other => eprintln!("unknown mode {other}"),
    }
}
