use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gece::calibrate::{
    apply_calibrator, fit_bcts, fit_bcts_with, fit_histogram_binning, fit_histogram_binning_auto, fit_temperature,
    BctsOptions, Calibrator, DEFAULT_HB_BIN_CHOICES,
};
use gece::synth::{generate, Generator, GeneratorSpec};
use gece::{softmax, traditional_ece, Dataset, PredictionRecord, ProbabilityVector};

/// Logits with labels drawn from `softmax(z / t + b)`.
fn logit_data(n: usize, t: f64, b: &[f64], seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = b.len();
    let records = (0..n)
        .map(|_| {
            let z: Vec<f64> = (0..k).map(|_| (rng.random::<f64>() - 0.5) * 10.0).collect();
            let a: Vec<f64> = z.iter().zip(b).map(|(v, bb)| v / t + bb).collect();
            let p = softmax(&a).unwrap();
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let label = p.as_slice().iter().position(|q| {
                acc += q;
                u < acc
            });
            PredictionRecord::from_logits(z, label.unwrap_or(k - 1)).unwrap()
        })
        .collect();
    Dataset::new(records).unwrap()
}

fn plain_nll(data: &Dataset, t: f64, b: &[f64]) -> f64 {
    let total: f64 = data
        .records()
        .iter()
        .map(|r| {
            let a: Vec<f64> = r.logits().unwrap().iter().zip(b).map(|(v, bb)| v / t + bb).collect();
            let lse = a.iter().map(|v| v.exp()).sum::<f64>().ln();
            lse - a[r.label()]
        })
        .sum();
    total / data.len() as f64
}

fn temperature(c: &Calibrator) -> f64 {
    match c {
        Calibrator::TemperatureScaling { temperature } | Calibrator::Bcts { temperature, .. } => *temperature,
        Calibrator::HistogramBinning(_) => panic!("no temperature"),
    }
}

#[test]
fn temperature_matches_grid_search() {
    let data = logit_data(3000, 1.6, &[0.0, 0.0, 0.0, 0.0], 3);
    let zeros = [0.0; 4];
    let mut best = (f64::INFINITY, 0.0);
    let mut lt = -4.0;
    while lt <= 4.0 {
        let v = plain_nll(&data, f64::exp(lt), &zeros);
        if v < best.0 {
            best = (v, lt);
        }
        lt += 1e-3;
    }
    let (cal, report) = fit_temperature(&data).unwrap();
    assert!(
        (temperature(&cal).ln() - best.1).abs() < 2e-3,
        "{} vs {}",
        temperature(&cal),
        best.1.exp()
    );
    assert!(report.final_nll <= report.initial_nll);
    assert!((report.final_nll - best.0).abs() < 1e-6);
}

#[test]
fn bcts_matches_grid_on_two_classes() {
    let data = logit_data(4000, 0.8, &[0.4, -0.4], 9);
    let (cal, _) = fit_bcts(&data).unwrap();
    let Calibrator::Bcts { temperature, bias } = &cal else {
        panic!()
    };
    // Gauge-fixed two-class bias is (c, -c).
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for i in 0..=200 {
        let t = 0.5 + i as f64 * 0.005;
        for j in 0..=200 {
            let c = -0.8 + j as f64 * 0.008;
            let v = plain_nll(&data, t, &[c, -c]);
            if v < best.0 {
                best = (v, t, c);
            }
        }
    }
    assert!((temperature - best.1).abs() < 0.01, "{temperature} vs {}", best.1);
    assert!(
        (bias[0] - best.2).abs() < 0.01 && (bias[1] + best.2).abs() < 0.01,
        "{bias:?} vs {}",
        best.2
    );
    assert!((bias.iter().sum::<f64>()).abs() < 1e-9);
}

#[test]
fn bcts_without_bias_is_temperature_scaling() {
    let data = logit_data(2000, 2.5, &[0.0, 0.0, 0.0], 4);
    let opts = BctsOptions {
        fit_bias: false,
        ..BctsOptions::default()
    };
    let (bcts, _) = fit_bcts_with(&data, opts).unwrap();
    let (ts, _) = fit_temperature(&data).unwrap();
    assert!((temperature(&bcts) - temperature(&ts)).abs() < 1e-3);
    let Calibrator::Bcts { bias, .. } = bcts else { panic!() };
    assert!(bias.iter().all(|b| *b == 0.0));
}

#[test]
fn bcts_reports_monotone_fit() {
    let data = logit_data(2000, 1.5, &[0.5, 0.0, -0.5], 5);
    let (_, report) = fit_bcts(&data).unwrap();
    assert!(report.final_nll <= report.initial_nll);
    assert!(report.converged);
    assert_eq!(report.parameters["bias"].len(), 3);
}

#[test]
fn calibrator_json_round_trip() {
    let data = logit_data(500, 1.5, &[0.2, 0.0, -0.2], 6);
    let fits = [
        fit_temperature(&data).unwrap().0,
        fit_bcts(&data).unwrap().0,
        fit_histogram_binning(&data, 10).unwrap().0,
    ];
    for cal in fits {
        let doc = cal.to_json();
        let back = Calibrator::from_json(&doc).unwrap();
        assert_eq!(back, cal);
        let a = apply_calibrator(&cal, &data).unwrap();
        let b = apply_calibrator(&back, &data).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn histogram_binning_reduces_miscalibration() {
    let spec = |seed| GeneratorSpec {
        generator: Generator::Sharpened {
            alpha: 1.0,
            k: 3,
            n: 20_000,
            inv_temp: 3.0,
        },
        seed,
    };
    let val = generate(&spec(1)).unwrap();
    let test = generate(&spec(2)).unwrap();
    let (cal, report) = fit_histogram_binning_auto(&val, &DEFAULT_HB_BIN_CHOICES).unwrap();
    assert!(report.final_nll < report.initial_nll);
    let before = traditional_ece(&test).unwrap().value;
    let after = traditional_ece(&apply_calibrator(&cal, &test).unwrap()).unwrap().value;
    assert!(after < before / 2.0, "{before} -> {after}");
}

#[test]
fn temperature_undoes_sharpening() {
    // Sharpening by 2 on log-probabilities is undone by T = 2.
    let spec = GeneratorSpec {
        generator: Generator::Sharpened {
            alpha: 1.0,
            k: 4,
            n: 20_000,
            inv_temp: 2.0,
        },
        seed: 8,
    };
    let data = generate(&spec).unwrap();
    let (cal, _) = fit_temperature(&data).unwrap();
    assert!((temperature(&cal) - 2.0).abs() < 0.1, "{}", temperature(&cal));
}

#[test]
fn degenerate_validation_is_rejected() {
    let data = Dataset::new(vec![PredictionRecord::from_logits(vec![1.0, 0.0], 0).unwrap(); 5]).unwrap();
    assert!(fit_temperature(&data).is_err());
    assert!(fit_bcts(&data).is_err());
}

#[test]
fn histogram_binning_fixed_point() {
    // Outputs 0.25 / 0.75 whose labels hit those frequencies exactly.
    let rec = |p: f64, y: usize| PredictionRecord::from_probs(ProbabilityVector::from_binary(p).unwrap(), y).unwrap();
    let mut records = Vec::new();
    for i in 0..40 {
        records.push(rec(0.25, usize::from(i % 4 == 0)));
        records.push(rec(0.75, usize::from(i % 4 != 0)));
    }
    let data = Dataset::new(records).unwrap();
    let (cal, _) = fit_histogram_binning(&data, 2).unwrap();
    let once = apply_calibrator(&cal, &data).unwrap();
    let twice = apply_calibrator(&cal, &once).unwrap();
    for ((a, b), c) in data.records().iter().zip(once.records()).zip(twice.records()) {
        for j in 0..2 {
            assert!((a.probs()[j] - b.probs()[j]).abs() < 1e-12);
            assert!((b.probs()[j] - c.probs()[j]).abs() < 1e-12);
        }
    }
}

#[test]
fn histogram_binning_reapplication_is_stable_within_bins() {
    for (k, seed) in [(2, 3), (3, 4), (5, 5)] {
        let data = generate(&GeneratorSpec {
            generator: Generator::Sharpened {
                alpha: 1.0,
                k,
                n: 4000,
                inv_temp: 2.0,
            },
            seed,
        })
        .unwrap();
        let (cal, _) = fit_histogram_binning(&data, 15).unwrap();
        let Calibrator::HistogramBinning(bins) = &cal else {
            panic!()
        };
        let once = apply_calibrator(&cal, &data).unwrap();
        let twice = apply_calibrator(&cal, &once).unwrap();
        let mut flagged = 0;
        for ((orig, a), b) in data.records().iter().zip(once.records()).zip(twice.records()) {
            if bins.bin_indices(orig.probs().as_slice()) == bins.bin_indices(a.probs().as_slice()) {
                let moved = a
                    .probs()
                    .as_slice()
                    .iter()
                    .zip(b.probs().as_slice())
                    .any(|(x, y)| (x - y).abs() >= 1e-9);
                assert!(!moved, "k={k}: record re-binned into the same bins changed");
            } else {
                flagged += 1;
            }
        }
        assert!(flagged < data.len());
    }
}
