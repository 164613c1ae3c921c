use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, Normal};
use sandmine::bench::{fit_design, fit_logistic, tool_column, Formula, Observation, RegressionError, INTERCEPT, STATIC};

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// n draws from `y ~ Bernoulli(logistic(x·beta))`, with x = [1, N(0,1), Bernoulli(0.4)].
fn simulate(n: usize, beta: &[f64; 3], seed: u64) -> (DMatrix<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let coin = Bernoulli::new(0.4).unwrap();
    let mut rows = Vec::with_capacity(n * 3);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let x = [1.0, normal.sample(&mut rng), f64::from(u8::from(coin.sample(&mut rng)))];
        let eta: f64 = x.iter().zip(beta).map(|(a, b)| a * b).sum();
        y.push(f64::from(u8::from(rng.random_bool(logistic(eta)))));
        rows.extend(x);
    }
    (DMatrix::from_row_slice(n, 3, &rows), y)
}

#[test]
fn recovers_known_coefficients_within_three_standard_errors() {
    let beta = [-0.4, 1.1, 0.7];
    let names: Vec<String> = [INTERCEPT, "x", "flag"].map(String::from).to_vec();
    for seed in [2, 3, 4] {
        let (x, y) = simulate(5_000, &beta, seed);
        let fit = fit_design(&x, &y, &names).unwrap();
        for (c, truth) in fit.coefficients.iter().zip(beta) {
            let z = (c.estimate - truth) / c.std_error;
            assert!(z.abs() < 3.0, "seed {seed}: {} = {:.4} ± {:.4}, truth {truth}", c.name, c.estimate, c.std_error);
            assert!(c.ci_low < c.estimate && c.estimate < c.ci_high);
        }
        assert!((fit.aic - (-2.0 * fit.log_likelihood + 6.0)).abs() < 1e-9);
    }
}

#[test]
fn standardized_errors_are_calibrated() {
    // over many replicates (estimate - truth) / se should look standard normal
    let beta = [-0.4, 1.1, 0.7];
    let names: Vec<String> = [INTERCEPT, "x", "flag"].map(String::from).to_vec();
    let mut zs = vec![Vec::new(); 3];
    for seed in 100..300 {
        let (x, y) = simulate(2_000, &beta, seed);
        let fit = fit_design(&x, &y, &names).unwrap();
        for (k, c) in fit.coefficients.iter().enumerate() {
            zs[k].push((c.estimate - beta[k]) / c.std_error);
        }
    }
    for (k, z) in zs.iter().enumerate() {
        let n = z.len() as f64;
        let mean = z.iter().sum::<f64>() / n;
        let sd = (z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!(mean.abs() < 0.25 && (0.8..1.2).contains(&sd), "{}: mean {mean:.3}, sd {sd:.3}", names[k]);
    }
}

#[test]
fn recovers_tool_and_static_effects_from_observations() {
    // detection probabilities built from known log-odds per tool and static setting
    let (base, humanoid, random, with_static) = (-1.0, 0.5, 0.9, 1.4);
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut observations = Vec::new();
    for i in 0..6_000u32 {
        let tool = ["alpha", "humanoid", "random"][(i % 3) as usize];
        let static_enabled = i % 2 == 0;
        let eta = base
            + match tool {
                "humanoid" => humanoid,
                "random" => random,
                _ => 0.0,
            }
            + if static_enabled { with_static } else { 0.0 };
        observations.push(Observation {
            tool: tool.into(),
            repetition: 1 + (i / 6) % 3,
            static_enabled,
            pair_id: format!("p{}", i / 6),
            detected: rng.random_bool(logistic(eta)),
        });
    }
    let fit = fit_logistic(&observations, Formula::Full).unwrap();
    assert_eq!(fit.reference_tool.as_deref(), Some("alpha"));
    let expected = [(INTERCEPT.to_owned(), base), (tool_column("humanoid"), humanoid), (tool_column("random"), random), (STATIC.to_owned(), with_static)];
    for (name, truth) in expected {
        let c = fit.coefficient(&name).unwrap();
        assert!(((c.estimate - truth) / c.std_error).abs() < 3.0, "{name}: {:.4} ± {:.4}", c.estimate, c.std_error);
    }
    // repetition carries no signal
    let rep = fit.coefficient("Repetition").unwrap();
    assert!((rep.estimate / rep.std_error).abs() < 3.0);
}

#[test]
fn separated_data_is_flagged() {
    let names: Vec<String> = [INTERCEPT, "x"].map(String::from).to_vec();
    let x = DMatrix::from_row_slice(6, 2, &[1.0, -3.0, 1.0, -2.0, 1.0, -1.0, 1.0, 1.0, 1.0, 2.0, 1.0, 3.0]);
    let y = [0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
    assert!(matches!(fit_design(&x, &y, &names), Err(RegressionError::Separation { .. })));
}
