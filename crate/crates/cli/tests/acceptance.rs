//! End-to-end acceptance checks for the toolkit. Each test covers one
//! numbered criterion, prints a single `criterion N …: PASS/FAIL` line
//! (visible with `cargo test --test acceptance -- --nocapture`), and pins
//! its tolerances directly in the assertions.

use std::panic::AssertUnwindSafe;
use std::process::Command;
use std::time::{Duration, Instant};

use dg_core::constants::{
    c2, c3, loss_lower_from_margins, loss_upper_from_margins, tail_loss_floor, C2Inputs, C3Params,
};
use dg_core::dataset::{generate_poly_boundary, LabeledDataset, PolyBoundarySpec};
use dg_core::doubling::{
    check_nonuniform_dc_deltax, check_nonuniform_dc_slab, check_uniform_dc_deltax,
    check_uniform_dc_slab, sudc_scan_with_mode, DcVerdict, DoublingParams, SlabSampler, SudcMode,
};
use dg_core::experiment::{run_pipeline, ExperimentConfig};
use dg_core::geometry::TruncatedSlab;
use dg_core::linalg::Matrix;
use dg_core::network::{
    cross_entropy, delta_x_distribution, evaluate, loss_gradient, train, ActivationKind,
    BatchMode, MlpModel, OptimizerKind, TrainOptions,
};
use dg_core::parallel;
use dg_core::piecewise::Piecewise1D;
use dg_core::propagation::{verify_propagation, MapSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const E: f64 = std::f64::consts::E;
const LN_2: f64 = std::f64::consts::LN_2;

/// Run `body`, print one verdict line for the criterion, and re-raise any
/// failure so the harness still reports it.
fn check(tag: &str, body: impl FnOnce()) {
    let result = std::panic::catch_unwind(AssertUnwindSafe(body));
    match &result {
        Ok(()) => println!("{tag}: PASS"),
        Err(_) => println!("{tag}: FAIL"),
    }
    if let Err(payload) = result {
        std::panic::resume_unwind(payload);
    }
}

// ---------------------------------------------------------------- fixtures

fn poly_dataset(n: usize, seed: u64) -> LabeledDataset {
    generate_poly_boundary(&PolyBoundarySpec {
        degree: 3,
        n_samples: n,
        x_range: (-1.0, 1.0),
        vertical_shift: 0.2,
        noise_std: 0.35,
        seed,
    })
    .expect("fixture generation")
}

/// Random k-class cloud with optional custom weights.
fn random_cloud(rng: &mut ChaCha8Rng, n: usize, k: usize) -> LabeledDataset {
    let points: Vec<Vec<f64>> = (0..n)
        .map(|_| vec![rng.random_range(-1.5..=1.5), rng.random_range(-1.5..=1.5)])
        .collect();
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
    let weights = if rng.random_bool(0.5) {
        None
    } else {
        let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..=2.0)).collect();
        let total: f64 = raw.iter().sum();
        Some(raw.into_iter().map(|w| w / total).collect())
    };
    LabeledDataset::new(points, labels, weights, k).expect("valid cloud")
}

fn disk_dataset(n: usize, seed: u64) -> LabeledDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let r = rng.random_range(0.0f64..1.0).sqrt();
            let t = rng.random_range(0.0f64..std::f64::consts::TAU);
            vec![r * t.cos(), r * t.sin()]
        })
        .collect();
    LabeledDataset::new(points, vec![0; n], None, 2).expect("valid disk")
}

fn line_dataset(n: usize, lo: f64, hi: f64, seed: u64) -> LabeledDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random_range(lo..hi)]).collect();
    LabeledDataset::new(points, vec![0; n], None, 2).expect("valid line")
}

// ------------------------------------------------------------ criteria 1-3

#[test]
fn criterion_01_slab_constant_reproduction() {
    check("criterion 1 (slab constant in [0.04, 0.06], < 1 s)", || {
        let t0 = Instant::now();
        let r = c2(&C2Inputs {
            eta: 18.0,
            k_classes: 2,
            kappa: 2.0,
            sigma: 0.9,
            delta0: 0.2,
            ell: 0.001,
            d_min: 0.01,
            d_max: 800.0,
            softmax_base: E,
            xi_lo: None,
            xi_hi: None,
            beta: None,
        })
        .expect("well-formed inputs");
        let elapsed = t0.elapsed();
        assert!(
            (0.04..=0.06).contains(&r.value),
            "constant {} outside [0.04, 0.06]",
            r.value
        );
        assert!(elapsed < Duration::from_secs(1), "took {elapsed:?}");
    });
}

#[test]
fn criterion_02_margin_constant_reproduction() {
    check("criterion 2 (margin constant in [0.042, 0.052], < 1 s)", || {
        let t0 = Instant::now();
        let value = c3(&C3Params {
            eta: 18.0,
            k_classes: 2,
            kappa: 2.0,
            sigma: 0.9,
            ell: 0.7,
            xi: 0.7,
            delta0: 0.2,
            softmax_base: E,
        })
        .expect("well-formed inputs");
        let elapsed = t0.elapsed();
        assert!(
            (0.042..=0.052).contains(&value),
            "constant {value} outside [0.042, 0.052]"
        );
        assert!(elapsed < Duration::from_secs(1), "took {elapsed:?}");
    });
}

#[test]
fn criterion_03_softmax_base_sweep() {
    check(
        "criterion 3 (base sweep 0.06±0.01 at b=2, 0.03±0.01 at b=5, non-increasing)",
        || {
            let at = |b: f64| {
                c3(&C3Params {
                    eta: 18.0,
                    k_classes: 2,
                    kappa: 2.0,
                    sigma: 0.9,
                    ell: 0.4,
                    xi: 0.4,
                    delta0: 0.2,
                    softmax_base: b,
                })
                .expect("well-formed inputs")
            };
            let values: Vec<f64> = [2.0, 3.0, 4.0, 5.0].iter().map(|&b| at(b)).collect();
            assert!(
                (values[0] - 0.06).abs() <= 0.01,
                "b=2 gave {}, expected 0.06±0.01",
                values[0]
            );
            assert!(
                (values[3] - 0.03).abs() <= 0.01,
                "b=5 gave {}, expected 0.03±0.01",
                values[3]
            );
            for w in values.windows(2) {
                assert!(w[1] <= w[0], "not non-increasing: {values:?}");
            }
        },
    );
}

// -------------------------------------------------------------- criterion 4

/// Assert every loss/accuracy inequality for one model state.
fn assert_inequalities(model: &MlpModel, ds: &LabeledDataset, base: f64, ctx: &str) {
    const TOL: f64 = 1e-9;
    let (loss, _) = evaluate(model, ds, base).expect("evaluate");
    let dist = delta_x_distribution(model, ds).expect("distribution");
    let acc = dist.accuracy();

    // (a) accuracy lower bound from the loss.
    assert!(
        1.0 - acc <= loss / LN_2 + TOL,
        "{ctx}: 1-acc = {} > loss/ln2 = {}",
        1.0 - acc,
        loss / LN_2
    );

    // (b) the confidence-margin sandwich around the loss.
    let pairs = dist.pairs();
    let lower = loss_lower_from_margins(&pairs, base).expect("lower bound");
    let upper =
        loss_upper_from_margins(&pairs, model.output_dim(), base).expect("upper bound");
    assert!(
        lower <= loss + TOL,
        "{ctx}: lower bound {lower} exceeds loss {loss}"
    );
    assert!(
        loss <= upper + TOL,
        "{ctx}: loss {loss} exceeds upper bound {upper}"
    );

    // (c) tail bound: mass not confidently correct cannot hide from the loss.
    for eta_star in [0.0, 0.5, 1.0, 2.0] {
        let tail = 1.0 - dist.good_mass(eta_star);
        let floor = tail_loss_floor(tail, eta_star, base).expect("loss floor");
        assert!(
            floor <= loss + TOL,
            "{ctx}: tail floor {floor} at eta*={eta_star} exceeds loss {loss}"
        );
    }
}

#[test]
fn criterion_04_loss_accuracy_inequality_suite() {
    check(
        "criterion 4 (inequality suite over 20 models + 5 training runs, zero violations)",
        || {
            let mut rng = ChaCha8Rng::seed_from_u64(0x04AC);

            // 20 random untrained models over mixed datasets and bases.
            for i in 0..20u64 {
                let k = if i % 2 == 0 { 2 } else { 3 };
                let ds = random_cloud(&mut rng, 60 + 10 * i as usize, k);
                let hidden = 4 + (i as usize % 3) * 6;
                let act = if i % 3 == 0 {
                    ActivationKind::Abs
                } else {
                    ActivationKind::LeakyRelu(0.01 + 0.04 * (i % 4) as f64)
                };
                let base = [E, 2.0, 4.0][i as usize % 3];
                let model =
                    MlpModel::init(&[2, hidden, k], act, 1000 + i).expect("valid dims");
                assert_inequalities(&model, &ds, base, &format!("model {i}"));
            }

            // 5 training runs, checked after every epoch (and at init).
            let runs: [(LabeledDataset, OptimizerKind, BatchMode, f64, usize); 5] = [
                (
                    poly_dataset(300, 40),
                    OptimizerKind::adam(5e-3),
                    BatchMode::Minibatch { size: 16 },
                    E,
                    2,
                ),
                (
                    poly_dataset(200, 41),
                    OptimizerKind::Sgd { lr: 0.3 },
                    BatchMode::Full,
                    2.0,
                    2,
                ),
                (
                    random_cloud(&mut rng, 240, 3),
                    OptimizerKind::adam(1e-2),
                    BatchMode::Minibatch { size: 8 },
                    E,
                    3,
                ),
                (
                    poly_dataset(400, 42),
                    OptimizerKind::adam(2e-3),
                    BatchMode::Minibatch { size: 32 },
                    3.0,
                    2,
                ),
                (
                    random_cloud(&mut rng, 150, 3),
                    OptimizerKind::Sgd { lr: 0.2 },
                    BatchMode::Full,
                    E,
                    3,
                ),
            ];
            for (run, (ds, optimizer, batch, base, k)) in runs.into_iter().enumerate() {
                let mut model = MlpModel::init(
                    &[2, 16, k],
                    ActivationKind::LeakyRelu(0.01),
                    500 + run as u64,
                )
                .expect("valid dims");
                assert_inequalities(&model, &ds, base, &format!("run {run} epoch 0"));
                for epoch in 1..=6 {
                    train(
                        &mut model,
                        &ds,
                        &TrainOptions {
                            epochs: 1,
                            optimizer,
                            batch,
                            softmax_base: base,
                            seed: 77 + epoch,
                        },
                    )
                    .expect("training step");
                    assert_inequalities(&model, &ds, base, &format!("run {run} epoch {epoch}"));
                }
            }
        },
    );
}

// -------------------------------------------------------------- criterion 5

#[test]
fn criterion_05_gradient_matches_finite_differences() {
    check(
        "criterion 5 (analytic vs central-difference gradients at 100 kink-free points, max rel err < 1e-5)",
        || {
            let mut rng = ChaCha8Rng::seed_from_u64(0x05AC);
            let shapes: [&[usize]; 3] = [&[2, 4, 3], &[2, 5, 4, 3], &[3, 6, 2]];
            let mut tested = 0usize;
            let mut attempts = 0u64;
            let mut max_err = 0.0f64;
            while tested < 100 {
                attempts += 1;
                assert!(attempts < 2000, "kink-free parameter points too rare");
                let dims = shapes[attempts as usize % shapes.len()];
                let act = if attempts % 2 == 0 {
                    ActivationKind::LeakyRelu(0.1)
                } else {
                    ActivationKind::Abs
                };
                let model =
                    MlpModel::init(dims, act.clone(), 9000 + attempts).expect("valid dims");
                let k = model.output_dim();
                let n = 5;
                let points: Vec<Vec<f64>> = (0..n)
                    .map(|_| (0..dims[0]).map(|_| rng.random_range(-1.2..=1.2)).collect())
                    .collect();
                let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
                let ds = LabeledDataset::new(points, labels, None, k).expect("valid cloud");

                // Keep away from activation kinks so the loss is smooth in a
                // neighbourhood larger than the finite-difference step.
                let kink_margin = ds
                    .points()
                    .iter()
                    .flat_map(|p| {
                        let (pre, _) = model.forward_trace(p).expect("forward");
                        pre.into_iter().flatten().collect::<Vec<f64>>()
                    })
                    .map(|v| act.kink_distance(v))
                    .fold(f64::INFINITY, f64::min);
                if kink_margin < 1e-3 {
                    continue;
                }

                let base = if attempts % 3 == 0 { 2.0 } else { E };
                let grads = loss_gradient(&model, &ds, base).expect("gradient");
                let h = 1e-6;
                for l in 0..grads.len() {
                    for idx in 0..grads[l].as_slice().len() {
                        let perturbed = |delta: f64| -> f64 {
                            let mut layers = model.layers().to_vec();
                            layers[l].as_mut_slice()[idx] += delta;
                            let m = MlpModel::new(layers, act.clone()).expect("valid model");
                            cross_entropy(&m, &ds, base).expect("loss")
                        };
                        let fd = (perturbed(h) - perturbed(-h)) / (2.0 * h);
                        let an = grads[l].as_slice()[idx];
                        // Coordinates below 1e-3 are compared absolutely
                        // (the difference quotient itself carries ~1e-10
                        // round-off), everything else relatively.
                        let err = (fd - an).abs() / an.abs().max(fd.abs()).max(1e-3);
                        max_err = max_err.max(err);
                    }
                }
                tested += 1;
            }
            assert!(max_err < 1e-5, "max relative error {max_err}");
        },
    );
}

// -------------------------------------------------------------- criterion 6
//
// The reference implementations below recount every scale straight from
// the raw points with their own compensated accumulator; because both
// sides add identical terms in identical order, verdicts, counts, and
// masses must agree to the last bit.

#[derive(Default)]
struct Acc {
    sum: f64,
    comp: f64,
}

impl Acc {
    fn add(&mut self, value: f64) {
        let y = value - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }
}

fn dot_offset(x: &[f64], center: &[f64], normal: &[f64]) -> f64 {
    let mut acc = Acc::default();
    for i in 0..x.len() {
        acc.add((x[i] - center[i]) * normal[i]);
    }
    acc.sum
}

fn inside(ts: &TruncatedSlab, x: &[f64], width: f64) -> bool {
    let s = ts.slab();
    if !(dot_offset(x, s.center(), s.normal()).abs() <= width / 2.0) {
        return false;
    }
    ts.truncations().iter().all(|h| {
        let mut acc = Acc::default();
        for (&vi, &xi) in h.direction().iter().zip(x) {
            acc.add(vi * xi);
        }
        acc.sum <= h.threshold()
    })
}

fn naive_mass(ds: &LabeledDataset, ts: &TruncatedSlab, width: f64) -> f64 {
    let mut acc = Acc::default();
    for (point, &w) in ds.points().iter().zip(ds.weights()) {
        if inside(ts, point, width) {
            acc.add(w);
        }
    }
    acc.sum
}

fn naive_count(ds: &LabeledDataset, ts: &TruncatedSlab, width: f64) -> usize {
    ds.points().iter().filter(|p| inside(ts, p, width)).count()
}

type Violation = Option<(usize, f64, f64, f64)>;

fn naive_uniform_slab(ds: &LabeledDataset, ts: &TruncatedSlab, p: &DoublingParams) -> Violation {
    let mut i = 0usize;
    loop {
        let width = p.ell * p.kappa.powi(i as i32);
        if !(width < p.beta) {
            return None;
        }
        let before = naive_mass(ds, ts, width);
        let after = naive_mass(ds, ts, width * p.kappa);
        if after < p.delta.min((1.0 + p.sigma) * before) {
            return Some((i, width, before, after));
        }
        i += 1;
    }
}

fn naive_nonuniform_slab(
    ds: &LabeledDataset,
    ts: &TruncatedSlab,
    p: &DoublingParams,
    beta_s: f64,
) -> Violation {
    let mut offsets: Vec<f64> = ds
        .points()
        .iter()
        .map(|x| dot_offset(x, ts.slab().center(), ts.slab().normal()))
        .collect();
    offsets.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let min_gap = offsets
        .windows(2)
        .map(|w| w[1] - w[0])
        .filter(|&g| g > 0.0)
        .fold(f64::INFINITY, f64::min);

    let mut j = 0usize;
    loop {
        let eps = beta_s * p.kappa.powi(-(j as i32));
        let before = naive_mass(ds, ts, eps);
        let after = naive_mass(ds, ts, p.kappa * eps);
        let required = p.delta.min(p.m0.max((1.0 + p.sigma) * before) - p.m0);
        if after < required {
            return Some((j, eps, before, after));
        }
        j += 1;
        let next = beta_s * p.kappa.powi(-(j as i32));
        if !(next >= min_gap) || next == 0.0 {
            return None;
        }
    }
}

fn naive_interval_mass(values: &[(f64, f64)], width: f64) -> f64 {
    let mut acc = Acc::default();
    for &(v, w) in values {
        if v.abs() <= width / 2.0 {
            acc.add(w);
        }
    }
    acc.sum
}

fn naive_uniform_deltax(values: &[(f64, f64)], p: &DoublingParams) -> Violation {
    let mut i = 0usize;
    loop {
        let width = p.ell * p.kappa.powi(i as i32);
        if !(width <= p.beta) {
            return None;
        }
        let before = naive_interval_mass(values, width);
        let after = naive_interval_mass(values, p.kappa * width);
        if after < p.delta.min((1.0 + p.sigma) * before) {
            return Some((i, width, before, after));
        }
        i += 1;
    }
}

fn naive_nonuniform_deltax(values: &[(f64, f64)], p: &DoublingParams) -> Violation {
    let mut abs: Vec<f64> = values.iter().map(|(v, _)| v.abs()).collect();
    abs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let min_gap = abs
        .windows(2)
        .map(|w| w[1] - w[0])
        .filter(|&g| g > 0.0)
        .fold(f64::INFINITY, f64::min);

    let mut j = 0usize;
    loop {
        let width = p.beta * p.kappa.powi(-(j as i32));
        let before = naive_interval_mass(values, width);
        let after = naive_interval_mass(values, p.kappa * width);
        let required = p.delta.min(p.m0.max((1.0 + p.sigma) * before) - p.m0);
        if after < required {
            return Some((j, width, before, after));
        }
        j += 1;
        let next = p.beta * p.kappa.powi(-(j as i32));
        if !(next >= min_gap) || next == 0.0 {
            return None;
        }
    }
}

fn assert_verdict_matches(verdict: &DcVerdict, reference: &Violation, context: &str) {
    match reference {
        None => assert!(verdict.satisfied, "{context}: library failed, reference passed"),
        Some((idx, width, before, after)) => {
            let f = verdict
                .first_failure
                .as_ref()
                .unwrap_or_else(|| panic!("{context}: library passed, reference failed"));
            assert_eq!(f.scale_index, *idx, "{context}: scale index");
            assert_eq!(f.width.to_bits(), width.to_bits(), "{context}: width");
            assert_eq!(f.mass_before.to_bits(), before.to_bits(), "{context}: before");
            assert_eq!(f.mass_after.to_bits(), after.to_bits(), "{context}: after");
        }
    }
}

#[test]
fn criterion_06_oracle_equivalence() {
    check(
        "criterion 6 (checkers and scan match naive recount on 50 datasets x 200 slabs, < 30 s)",
        || {
            let t0 = Instant::now();
            let mut rng = ChaCha8Rng::seed_from_u64(0x06AC);
            let mut outcomes = [0usize; 2];
            for round in 0..50u64 {
                let n = rng.random_range(50..=500);
                let points: Vec<Vec<f64>> = (0..n)
                    .map(|_| vec![rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)])
                    .collect();
                let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..2)).collect();
                let ds = LabeledDataset::new(points, labels, None, 2).expect("valid cloud");
                let p = DoublingParams {
                    kappa: if rng.random_bool(0.5) { 2.0 } else { 3.0 },
                    sigma: rng.random_range(0.5..=1.0),
                    delta: rng.random_range(0.3..=1.0),
                    ell: rng.random_range(0.002..=0.02),
                    beta: rng.random_range(0.5..=1.5),
                    m0: rng.random_range(0.0..=0.05),
                };
                let sampler = SlabSampler::new(200, 0x5EED + round);

                // Interval checkers on a synthesized confidence list.
                let values: Vec<(f64, f64)> = {
                    let m = rng.random_range(20..=120);
                    let raw: Vec<f64> = (0..m).map(|_| rng.random_range(0.1..=1.0)).collect();
                    let total: f64 = raw.iter().sum();
                    raw.iter()
                        .map(|&w| (rng.random_range(-3.0..=3.0), w / total))
                        .collect()
                };
                let uni = check_uniform_dc_deltax(&values, &p).expect("checker");
                assert_verdict_matches(&uni, &naive_uniform_deltax(&values, &p), "uniform interval");
                let non = check_nonuniform_dc_deltax(&values, &p).expect("checker");
                assert_verdict_matches(
                    &non,
                    &naive_nonuniform_deltax(&values, &p),
                    "non-uniform interval",
                );

                // Slab checkers and the scan over the same 200 slabs.
                let mode = if round % 2 == 0 {
                    SudcMode::RawCount
                } else {
                    SudcMode::MassWeighted
                };
                let report = sudc_scan_with_mode(&ds, &sampler, &p, mode).expect("scan");
                let mut width_acc = Acc::default();
                let mut mass_acc = Acc::default();
                for (slab_id, outcome) in report.per_slab.iter().enumerate() {
                    let slab = sampler.draw_slab(&ds, slab_id, p.ell).expect("slab");
                    let ts = TruncatedSlab::from_slab(slab);

                    let verdict = check_uniform_dc_slab(&ds, &ts, &p).expect("checker");
                    assert_verdict_matches(&verdict, &naive_uniform_slab(&ds, &ts, &p), "slab");
                    outcomes[usize::from(verdict.satisfied)] += 1;
                    if slab_id % 8 == 0 {
                        let beta_s = rng.random_range(0.1..=1.0);
                        let nu = check_nonuniform_dc_slab(&ds, &ts, &p, beta_s).expect("checker");
                        assert_verdict_matches(
                            &nu,
                            &naive_nonuniform_slab(&ds, &ts, &p, beta_s),
                            "non-uniform slab",
                        );
                    }

                    // Replay the growth loop from scratch.
                    let grew = |w: f64| -> bool {
                        let (before, after) = match mode {
                            SudcMode::RawCount => (
                                naive_count(&ds, &ts, w) as f64,
                                naive_count(&ds, &ts, p.kappa * w) as f64,
                            ),
                            SudcMode::MassWeighted => {
                                (naive_mass(&ds, &ts, w), naive_mass(&ds, &ts, p.kappa * w))
                            }
                        };
                        after >= (1.0 + p.sigma) * before
                    };
                    let mut steps = 0usize;
                    loop {
                        let width = p.ell * p.kappa.powi(steps as i32);
                        if !width.is_finite() || !grew(width) {
                            break;
                        }
                        steps += 1;
                    }
                    let final_width = p.ell * p.kappa.powi(steps as i32);
                    let final_count = naive_count(&ds, &ts, final_width);
                    let final_mass = match mode {
                        SudcMode::RawCount => final_count as f64 / ds.len() as f64,
                        SudcMode::MassWeighted => naive_mass(&ds, &ts, final_width),
                    };
                    assert_eq!(outcome.steps, steps, "round {round} slab {slab_id} steps");
                    assert_eq!(
                        outcome.final_width.to_bits(),
                        final_width.to_bits(),
                        "round {round} slab {slab_id} width"
                    );
                    assert_eq!(outcome.final_count, final_count, "slab {slab_id} count");
                    assert_eq!(
                        outcome.final_mass.to_bits(),
                        final_mass.to_bits(),
                        "round {round} slab {slab_id} mass"
                    );
                    width_acc.add(final_width);
                    mass_acc.add(final_mass);
                }
                let slabs = report.n_slabs as f64;
                assert_eq!(report.beta_bar.to_bits(), (width_acc.sum / slabs).to_bits());
                assert_eq!(
                    report.mean_final_mass.to_bits(),
                    (mass_acc.sum / slabs).to_bits()
                );
            }
            assert!(
                outcomes[0] > 0 && outcomes[1] > 0,
                "fixture never exercised both verdicts: {outcomes:?}"
            );
            let elapsed = t0.elapsed();
            assert!(elapsed < Duration::from_secs(30), "took {elapsed:?}");
        },
    );
}

// -------------------------------------------------------------- criterion 7

#[test]
fn criterion_07_propagation_harness() {
    check(
        "criterion 7 (propagation passes: 10 linear maps, |.| with/without axis mass, 5 piecewise maps)",
        || {
            let p = DoublingParams {
                kappa: 2.0,
                sigma: 0.9,
                delta: 1.0,
                ell: 0.05,
                beta: 0.4,
                m0: 0.0,
            };

            // (a) rotations times diagonal scalings: full rank by
            // construction. The singular-value spread is capped so the
            // largest conclusion start scale b²ℓ stays below the smallest
            // conclusion ceiling a²β.
            let ds = disk_dataset(1500, 77);
            let mut rng = ChaCha8Rng::seed_from_u64(0x07AC);
            let mut premise_total = 0usize;
            for i in 0..10u64 {
                let theta = rng.random_range(0.0..std::f64::consts::TAU);
                let a = rng.random_range(0.6..=0.9);
                let b = rng.random_range(1.1..=1.6);
                let m = Matrix::from_rows(&[
                    vec![a * theta.cos(), -b * theta.sin()],
                    vec![a * theta.sin(), b * theta.cos()],
                ])
                .expect("2x2");
                let v = verify_propagation(&MapSpec::Linear(m), &ds, &p, 500, 1000 + i)
                    .expect("harness");
                assert_eq!(v.n_violations, 0, "linear map {i}: {} violations", v.n_violations);
                assert_eq!(v.pass_rate, 1.0, "linear map {i}");
                premise_total += v.n_premise;
            }
            assert!(premise_total > 0, "linear premise never held");

            // (b) coordinatewise absolute value, off-axis and on-axis clouds.
            let p_abs = DoublingParams {
                ell: 0.12,
                beta: 0.2,
                ..p
            };
            let mut rng = ChaCha8Rng::seed_from_u64(0x0AB5);
            let mut points: Vec<Vec<f64>> = (0..2000)
                .map(|_| vec![rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)])
                .collect();
            let off_axis = LabeledDataset::new(points.clone(), vec![0; 2000], None, 2)
                .expect("valid cloud");
            let v = verify_propagation(&MapSpec::Abs, &off_axis, &p_abs, 500, 7).expect("harness");
            assert_eq!(v.predicted.sigma, p_abs.sigma, "off-axis sigma must be unchanged");
            assert_eq!(v.n_violations, 0, "abs off-axis");
            assert!(v.n_premise > 0, "abs off-axis premise never held");

            for point in points.iter_mut().take(40) {
                point[0] = 0.0;
            }
            let on_axis =
                LabeledDataset::new(points, vec![0; 2000], None, 2).expect("valid cloud");
            let v = verify_propagation(&MapSpec::Abs, &on_axis, &p_abs, 500, 7).expect("harness");
            assert_eq!(v.predicted.sigma, p_abs.sigma / 2.0, "axis mass must halve sigma");
            assert_eq!(v.predicted.folded_planes_with_mass, 1);
            assert_eq!(v.n_violations, 0, "abs on-axis");
            assert!(v.n_premise > 0, "abs on-axis premise never held");

            // (c) random piecewise-linear maps with well-separated folds
            // (resampled until the built-in critical-value gate accepts).
            let mut rng = ChaCha8Rng::seed_from_u64(0x07C3);
            let mut accepted = 0u64;
            let mut attempt = 0u64;
            let mut premise_total = 0usize;
            while accepted < 5 {
                attempt += 1;
                assert!(attempt < 200, "gate-passing piecewise maps too rare");
                let n_bp = rng.random_range(1..=3usize);
                let mut breakpoints = vec![rng.random_range(-1.0..=1.0)];
                for _ in 1..n_bp {
                    // Gaps of at least 2.5·kappa·beta keep critical values apart.
                    let gap = rng.random_range(2.5 * p.kappa * p.beta..=6.0 * p.kappa * p.beta);
                    breakpoints.push(breakpoints.last().unwrap() + gap);
                }
                let first = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                let slopes: Vec<f64> = (0..=n_bp)
                    .map(|j| if j % 2 == 0 { first } else { -first })
                    .collect();
                let g = Piecewise1D::new(
                    breakpoints.clone(),
                    slopes,
                    rng.random_range(-1.0..=1.0),
                )
                .expect("valid map");
                let ds = line_dataset(
                    800,
                    breakpoints[0] - 2.5,
                    breakpoints[n_bp - 1] + 2.5,
                    4000 + attempt,
                );
                match verify_propagation(
                    &MapSpec::Piecewise { g, coord: 0 },
                    &ds,
                    &p,
                    500,
                    3000 + attempt,
                ) {
                    Err(e) if e.to_string().contains("v_g") => continue,
                    Err(e) => panic!("unexpected error: {e}"),
                    Ok(v) => {
                        assert_eq!(v.n_violations, 0, "piecewise map {accepted}");
                        assert_eq!(v.pass_rate, 1.0, "piecewise map {accepted}");
                        premise_total += v.n_premise;
                        accepted += 1;
                    }
                }
            }
            assert!(premise_total > 0, "piecewise premise never held");
        },
    );
}

// -------------------------------------------------------------- criterion 8

#[test]
fn criterion_08_width_loss_trend() {
    check(
        "criterion 8 (Spearman(width, loss) <= 0 in >= 4 of 5 master seeds, < 15 min)",
        || {
            let t0 = Instant::now();
            let mut nonpositive = 0;
            let mut seen = Vec::new();
            for seed in 0..5u64 {
                let report = run_pipeline(&ExperimentConfig::desk(seed)).expect("pipeline");
                let s = report
                    .spearman_beta_loss
                    .expect("20 datasets define the correlation");
                if s <= 0.0 {
                    nonpositive += 1;
                }
                seen.push(s);
            }
            assert!(
                nonpositive >= 4,
                "only {nonpositive}/5 seeds gave a non-positive trend: {seen:?}"
            );
            let elapsed = t0.elapsed();
            assert!(elapsed < Duration::from_secs(900), "took {elapsed:?}");
        },
    );
}

// -------------------------------------------------------------- criterion 9

/// Three clusters on a line (second coordinate is a constant bias input):
/// a heavy confidently-wrong mass whose shrinking loss dominates training,
/// a light marginally-correct mass that gets pushed over the boundary, and
/// a medium saturated mass that stays correct.
fn instability_fixture() -> LabeledDataset {
    let mut points = Vec::new();
    let mut labels = Vec::new();
    let mut weights = Vec::new();
    for i in 0..5 {
        points.push(vec![-2.2 + 0.1 * i as f64, 1.0]);
        labels.push(1);
        weights.push(0.11);
    }
    for i in 0..3 {
        points.push(vec![0.08 + 0.02 * i as f64, 1.0]);
        labels.push(0);
        weights.push(0.05);
    }
    for i in 0..4 {
        points.push(vec![2.9 + 0.067 * i as f64, 1.0]);
        labels.push(1);
        weights.push(0.075);
    }
    LabeledDataset::new(points, labels, Some(weights), 2).expect("valid fixture")
}

#[test]
fn criterion_09_loss_down_accuracy_down() {
    check(
        "criterion 9 (loss strictly falls >= 10 consecutive epochs while accuracy drops >= 5 pp)",
        || {
            let ds = instability_fixture();
            let mut model =
                MlpModel::init(&[2, 2], ActivationKind::LeakyRelu(0.5), 8).expect("valid dims");
            let report =
                train(&mut model, &ds, &TrainOptions::full_batch_sgd(45, 0.01)).expect("training");
            let loss: Vec<f64> = report.trace.iter().map(|r| r.loss).collect();
            let acc: Vec<f64> = report.trace.iter().map(|r| r.accuracy).collect();

            let mut found = false;
            for i in 0..loss.len() {
                for j in (i + 10)..loss.len() {
                    let strictly_decreasing = (i..j).all(|k| loss[k + 1] < loss[k]);
                    if strictly_decreasing && acc[i] - acc[j] >= 0.05 {
                        found = true;
                    }
                }
            }
            assert!(
                found,
                "no >=10-epoch strictly-decreasing-loss window with a >=5pp accuracy drop; \
                 loss {:?}.. acc {:?}..",
                &loss[..5.min(loss.len())],
                &acc[..5.min(acc.len())]
            );
        },
    );
}

// ------------------------------------------------------------- criterion 10

/// Reset the worker-pool override even if an assertion unwinds.
struct PoolGuard;

impl Drop for PoolGuard {
    fn drop(&mut self) {
        parallel::set_thread_override(None);
    }
}

#[test]
fn criterion_10_thread_count_determinism() {
    check(
        "criterion 10 (bit-identical CSV outputs for every worker-pool size)",
        || {
            let _guard = PoolGuard;
            let ds = poly_dataset(700, 4242);
            let p = DoublingParams {
                kappa: 2.0,
                sigma: 0.9,
                delta: 1.0,
                ell: 0.001,
                beta: 1.0,
                m0: 0.0,
            };
            let sampler = SlabSampler::new(1500, 99);
            let config = ExperimentConfig {
                n_datasets: 6,
                n_points_lo: 150,
                n_points_hi: 600,
                n_slabs: 300,
                ..ExperimentConfig::desk(5)
            };

            let mut emissions: Vec<Vec<u8>> = Vec::new();
            for threads in [1usize, 2, 8] {
                parallel::set_thread_override(Some(threads));
                let mut bytes = Vec::new();
                sudc_scan_with_mode(&ds, &sampler, &p, SudcMode::RawCount)
                    .expect("scan")
                    .write_csv(&mut bytes)
                    .expect("csv");
                let report = run_pipeline(&config).expect("pipeline");
                report.write_runs_csv(&mut bytes).expect("csv");
                report.write_selected_pairs_csv(&mut bytes).expect("csv");
                emissions.push(bytes);
            }
            parallel::set_thread_override(None);
            assert_eq!(
                emissions[0], emissions[1],
                "1-thread and 2-thread CSV outputs differ"
            );
            assert_eq!(
                emissions[0], emissions[2],
                "1-thread and 8-thread CSV outputs differ"
            );

            // End to end through the binary with DG_THREADS.
            let exe = env!("CARGO_BIN_EXE_dg");
            let mut artifacts: Vec<(Vec<u8>, Vec<u8>)> = Vec::new();
            for threads in ["1", "6"] {
                let dir = tempfile::tempdir().expect("tempdir");
                let out = dir.path().join("out");
                let run = |args: &[&str]| {
                    let output = Command::new(exe)
                        .env("DG_THREADS", threads)
                        .args(args)
                        .output()
                        .expect("spawn dg");
                    assert!(
                        output.status.success(),
                        "dg {args:?} failed: {}",
                        String::from_utf8_lossy(&output.stderr)
                    );
                };
                let out_s = out.to_str().unwrap();
                run(&["--out", out_s, "gen-data", "--n", "500", "--seed", "12"]);
                let data = out.join("data.csv");
                run(&[
                    "--out",
                    out_s,
                    "sudc",
                    "--data",
                    data.to_str().unwrap(),
                    "--slabs",
                    "800",
                    "--seed",
                    "3",
                ]);
                artifacts.push((
                    std::fs::read(&data).expect("data.csv"),
                    std::fs::read(out.join("sudc.csv")).expect("sudc.csv"),
                ));
            }
            assert_eq!(artifacts[0].0, artifacts[1].0, "data.csv differs across DG_THREADS");
            assert_eq!(artifacts[0].1, artifacts[1].1, "sudc.csv differs across DG_THREADS");
        },
    );
}
