// Temporary calibration harness for the statistical-test scale.
use lpsample::cdf::QuadratureConfig;
use lpsample::pipeline::{run_stream, SamplerConfig};
use rayon::prelude::*;

fn pass_rate(x: &[i64], p: f64, eps: f64, k: usize, runs: u64) -> f64 {
    let n = x.len() as u64;
    let updates: Vec<(u64, i64)> = x.iter().enumerate().map(|(i, &v)| (i as u64, v)).collect();
    let hits: u64 = (0..runs)
        .into_par_iter()
        .map(|run| {
            let mut cfg = SamplerConfig::defaults_for(n, p, 0.3, 77000 + run * 7919).unwrap();
            cfg.tau = 3 * ((n.max(4) as f64).log2().ceil() as usize);
            cfg.sketch_rows = k;
            cfg.sketch_reps = 5;
            cfg.eps_test = eps;
            cfg.instances = 1;
            cfg.quad = QuadratureConfig::with_tolerance(1e-4);
            u64::from(run_stream(cfg, &updates).unwrap().result.is_some())
        })
        .sum();
    hits as f64 / runs as f64
}

fn main() {
    let runs = 1000;
    let vectors: Vec<(&str, Vec<i64>)> = vec![
        ("(1,1)", vec![1, 1]),
        ("(2,1)", vec![2, 1]),
        ("(1,2,3,4)", vec![1, 2, 3, 4]),
        ("(16,1x15)", { let mut v = vec![1i64; 16]; v[0] = 16; v }),
        ("(16,pm1x15)", { let mut v: Vec<i64> = (0..16).map(|i| if i % 2 == 0 { 1 } else { -1 }).collect(); v[0] = 16; v }),
    ];
    let k = 128usize;
    for &eps in &[0.0005f64, 0.001, 0.002, 0.003] {
        println!("=== k={k} eps={eps}");
        for &p in &[0.5, 1.0, 1.5] {
            for (name, x) in &vectors {
                let r = pass_rate(x, p, eps, k, runs);
                println!("  p={p} {name:12}: {r:.3}");
            }
        }
    }
}
