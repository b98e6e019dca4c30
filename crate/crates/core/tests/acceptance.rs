//! End-to-end acceptance checks, one PASS/FAIL line per criterion.

mod common;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use common::*;
use hdlcnn_core::clustering::{cut_to_k, ward_linkage, FeatureOrdering};
use hdlcnn_core::data::{synth_generate, Dataset, SynthConfig, SynthOutput};
use hdlcnn_core::explainer::{deep_shap, deeplift_attribute, exact_shapley, linear_shap, SUMMATION_TOLERANCE};
use hdlcnn_core::model::{HdlcnnModel, Metrics, ModelConfig, ProbeLoss, TrainConfig};
use hdlcnn_core::numerics::{dilated_conv2d, grad_check, receptive_field_size, ConvSpec, StackLayer, Tensor};
use hdlcnn_core::pipeline::{evaluate_dataset, explain_class, fit, ExplainSettings, ModelSettings};
use rand::seq::SliceRandom;
use rand::Rng;

type Memberships = BTreeSet<BTreeSet<usize>>;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 }
}

/// One seeded pipeline run on the default synthetic data.
struct Run {
    accuracy: f64,
    seconds: f64,
    clusters: Memberships,
    /// Root cause found per fault class (original feature ids), when explained.
    roots: Option<[bool; 2]>,
    model: HdlcnnModel,
    data: SynthOutput,
    metrics: Metrics,
}

/// Features of the two correlated blocks interleaved: 0, 7, 1, 8, ...
fn separate_order(p: usize) -> Vec<usize> {
    let half = p / 2;
    (0..half).flat_map(|i| [i, i + half]).collect()
}

fn pipeline_run(seed: u64, presentation: Option<&[usize]>, explain: bool) -> Run {
    let data = synth_generate(&SynthConfig { seed, ..SynthConfig::default() }).unwrap();
    let present = |ds: &Dataset| match presentation {
        Some(order) => ds.select_features(order).unwrap(),
        None => ds.clone(),
    };
    let (train, test) = (present(&data.train), present(&data.test));
    let tc = TrainConfig { shuffle_seed: seed, ..TrainConfig::default() };
    let start = Instant::now();
    let fitted = fit(&train, &ModelSettings::default(), &tc, seed).unwrap();
    let metrics = evaluate_dataset(&fitted.model, &test).unwrap();
    let seconds = start.elapsed().as_secs_f64();

    let original = |i: usize| presentation.map_or(i, |o| o[i]);
    let ordering = fitted.model.ordering();
    let (a, b) = ordering.permutation.split_at(ordering.boundary);
    let clusters = [a, b].iter().map(|c| c.iter().map(|&i| original(i)).collect()).collect();

    let roots = explain.then(|| {
        [1, 2].map(|k| {
            let report = explain_class(&fitted.model, &train, &test, k, &ExplainSettings::default(), seed).unwrap();
            Some(original(report.root_cause.feature)) == data.ground_truth.root_of(k)
        })
    });
    Run {
        accuracy: metrics.overall_accuracy,
        seconds,
        clusters,
        roots,
        model: fitted.model,
        data,
        metrics,
    }
}

fn gradients() -> Outcome {
    let start = Instant::now();
    let cfg = ModelConfig { seed: 11, ..ModelConfig::new(22, 20, 11, 11) };
    let model = HdlcnnModel::build(cfg, FeatureOrdering::identity(22, 11).unwrap()).unwrap();
    let x = (0..200)
        .map(|s| random_tensor(&[1, 22, 20], &mut rng(s), 0.0, 1.0))
        .find(|x| kink_margin(&model, x) > 1e-4)
        .expect("a probe away from every kink");
    let full = grad_check(&ProbeLoss { model, label: 4 }, &x, 1e-5).unwrap();

    let mut r = rng(3);
    let lin = LinearReadout {
        weights: random_tensor(&[6, 9], &mut r, 0.5, 1.5),
        bias: random_tensor(&[6], &mut r, 0.5, 1.5),
        readout: random_tensor(&[6], &mut r, 0.5, 1.5),
    };
    let mut linear_err = grad_check(&lin, &random_tensor(&[9], &mut r, 0.5, 1.5), 1e-3).unwrap();
    let spec = ConvSpec::new(2, 3, (3, 3), 2);
    let conv = ConvReadout {
        spec,
        kernels: random_tensor(&spec.kernel_shape(), &mut r, 0.5, 1.5),
        bias: random_tensor(&[3], &mut r, 0.5, 1.5),
        readout: random_tensor(&[3, 4, 3], &mut r, 0.5, 1.5),
    };
    linear_err = linear_err.max(grad_check(&conv, &random_tensor(&[2, 8, 7], &mut r, 0.5, 1.5), 1e-3).unwrap());
    let affine = positive_affine_net(5);
    linear_err = linear_err.max(grad_check(&affine, &random_tensor(&[1, 14, 10], &mut r, 0.5, 1.5), 1e-3).unwrap());

    let secs = start.elapsed().as_secs_f64();
    outcome(
        full < 1e-4 && linear_err < 1e-9 && secs < 60.0,
        format!("full network {full:.2e} (< 1e-4), linear {linear_err:.2e} (< 1e-9), {secs:.1}s"),
    )
}

fn conv_equivalences() -> Outcome {
    let mut r = rng(21);
    let (mut plain, mut inserted) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let (ci, co) = (r.random_range(1..=3), r.random_range(1..=3));
        let k = (r.random_range(1..=4), r.random_range(1..=4));
        let dilation = r.random_range(2..=3);
        let kernels = random_tensor(&[co, ci, k.0, k.1], &mut r, -1.0, 1.0);
        let bias = random_tensor(&[co], &mut r, -1.0, 1.0);

        let x = random_tensor(&[ci, k.0 + r.random_range(0..6), k.1 + r.random_range(0..6)], &mut r, -2.0, 2.0);
        let got = dilated_conv2d(&x, &ConvSpec::new(ci, co, k, 1), &kernels, &bias).unwrap();
        plain = plain.max(got.max_abs_diff(&naive_conv(&x, &kernels, &bias)));

        let spec = ConvSpec::new(ci, co, k, dilation);
        let (h, w) = (spec.extent_height() + r.random_range(0..6), spec.extent_width() + r.random_range(0..6));
        let x = random_tensor(&[ci, h, w], &mut r, -2.0, 2.0);
        let got = dilated_conv2d(&x, &spec, &kernels, &bias).unwrap();
        inserted = inserted.max(got.max_abs_diff(&naive_conv(&x, &zero_inserted(&kernels, dilation), &bias)));
    }
    outcome(
        plain <= 1e-12 && inserted <= 1e-12,
        format!("100 cases each: dilation-1 max diff {plain:.1e}, zero-inserted max diff {inserted:.1e}"),
    )
}

fn receptive_field() -> Outcome {
    let mut r = rng(31);
    let mut mismatches = Vec::new();
    for _ in 0..20 {
        let layers: Vec<StackLayer> = (0..r.random_range(1..=3))
            .map(|_| {
                let k = (r.random_range(1..=4), r.random_range(1..=4));
                StackLayer::Conv(conv_spec(1, 1, k, r.random_range(1..=3), 1))
            })
            .collect();
        let rf = receptive_field_size(&layers, 1);
        let cone = perturbation_cone(&layers, rf.height + 3, rf.width + 3);
        if (rf.height, rf.width) != cone {
            mismatches.push(format!("{:?} vs {cone:?}", (rf.height, rf.width)));
        }
    }
    outcome(mismatches.is_empty(), format!("20 stacks, {} mismatches {mismatches:?}", mismatches.len()))
}

fn ward() -> Outcome {
    let mut r = rng(41);
    let mut bad_sequences = 0;
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let fm = random_matrix(r.random_range(2..=8), r.random_range(2..=12), &mut r);
        let fast = ward_linkage(&fm).unwrap();
        let slow = naive_ward(&fm);
        let same = fast.steps.iter().zip(&slow).all(|(m, &(a, b, _, size))| {
            (m.cluster_a.min(m.cluster_b), m.cluster_a.max(m.cluster_b), m.size) == (a, b, size)
        });
        bad_sequences += usize::from(!same || fast.steps.len() != slow.len());
        for (m, s) in fast.steps.iter().zip(&slow) {
            worst = worst.max((m.distance - s.2).abs() / s.2.max(1.0));
        }
    }
    let mut changed = 0;
    for _ in 0..20 {
        let p = r.random_range(3..=10);
        let fm = random_matrix(p, 8, &mut r);
        let sets = |c: Vec<Vec<usize>>| -> Memberships { c.into_iter().map(|v| v.into_iter().collect()).collect() };
        let base = sets(cut_to_k(&ward_linkage(&fm).unwrap(), 2).unwrap());
        let mut perm: Vec<usize> = (0..p).collect();
        perm.shuffle(&mut r);
        let cut = cut_to_k(&ward_linkage(&fm.select_columns(&perm)).unwrap(), 2).unwrap();
        let mapped = sets(cut.into_iter().map(|c| c.into_iter().map(|i| perm[i]).collect()).collect());
        changed += usize::from(mapped != base);
    }
    outcome(
        bad_sequences == 0 && worst <= 1e-9 && changed == 0,
        format!(
            "{bad_sequences}/50 merge sequences differ from the centroid oracle (distance rel. diff {worst:.1e}); \
             {changed}/20 permuted cuts changed"
        ),
    )
}

fn shapes() -> Outcome {
    let model = HdlcnnModel::build(ModelConfig::new(22, 20, 11, 11), FeatureOrdering::identity(22, 11).unwrap()).unwrap();
    let s = model.shapes();
    let tr = model.trace(&Tensor::zeros(&[1, 22, 20])).unwrap();
    let got = (
        s.segment1,
        s.segment2,
        s.concat,
        s.conv2,
        s.pooled,
        s.flat,
        s.output,
        tr.concat.shape().to_vec(),
        tr.logits.len(),
    );
    let want = ([16, 7, 16], [16, 7, 16], [16, 14, 16], [32, 10, 12], [32, 5, 6], 960, 11, vec![16, 14, 16], 11);
    outcome(
        got == want,
        format!(
            "segments {:?}/{:?}, concat {:?}, conv2 {:?}, pool {:?}, flat {}, out {}",
            s.segment1, s.segment2, s.concat, s.conv2, s.pooled, s.flat, s.output
        ),
    )
}

fn attribution() -> Outcome {
    let mut r = rng(61);
    let mut worst_sum = 0.0f64;
    for seed in 0..5 {
        let mut cfg = ModelConfig::new(22, 20, 11, 11);
        cfg.seed = seed;
        let mut model = HdlcnnModel::build(cfg, FeatureOrdering::identity(22, 11).unwrap()).unwrap();
        let params = model.params_mut();
        for b in [&mut params.segment1_bias, &mut params.segment2_bias, &mut params.conv2_bias, &mut params.head_bias] {
            b.data_mut().iter_mut().for_each(|v| *v = r.random_range(-0.2..0.2));
        }
        let model = mark_trained(model);
        let bg: Vec<Tensor> = (0..3).map(|_| random_tensor(&[1, 22, 20], &mut r, 0.0, 1.0)).collect();
        for _ in 0..20 {
            let x = random_tensor(&[1, 22, 20], &mut r, 0.0, 1.0);
            let e = deep_shap(&model, &x, &bg, r.random_range(0..11)).unwrap();
            worst_sum = worst_sum.max((e.contributions.sum() - (e.sample_output - e.reference_output)).abs());
        }
    }

    let mut chain = 0.0f64;
    let players: Vec<Vec<usize>> = (0..14).map(|f| (f * 10..(f + 1) * 10).collect()).collect();
    for seed in 0..3 {
        let model = linear_network(seed);
        let x = random_tensor(&[1, 14, 10], &mut r, 0.0, 1.0);
        let reference = random_tensor(&[1, 14, 10], &mut r, 0.0, 1.0);
        let f = logit_fn(&model, 1);
        let (beta, b0) = affine_coefficients(&f, 140);
        let lin = linear_shap(&beta, b0, x.data(), reference.data()).unwrap();
        let dl = deeplift_attribute(&model, &x, &reference, 1).unwrap();
        let exact = exact_shapley(&f, x.data(), reference.data(), &players).unwrap();
        let lin_rows: Vec<f64> = lin.chunks(10).map(|c| c.iter().sum()).collect();
        chain = chain
            .max(max_diff(&lin, dl.contributions.data()))
            .max(max_diff(&exact, &lin_rows))
            .max(max_diff(&exact, &dl.feature_sums()));
    }

    let mut model = linear_network(9);
    let w = &mut model.params_mut().segment1_weight;
    let (rows, cols) = (w.shape()[2], w.shape()[3]);
    for o in 0..w.shape()[0] * w.shape()[1] {
        w.data_mut()[o * rows * cols..o * rows * cols + cols].fill(0.0);
    }
    let x = random_tensor(&[1, 14, 10], &mut r, 0.0, 1.0);
    let reference = random_tensor(&[1, 14, 10], &mut r, 0.0, 1.0);
    let dummy = deeplift_attribute(&model, &x, &reference, 0).unwrap().contributions.data()[..20]
        .iter()
        .all(|&c| c == 0.0);

    let game = |z: &[f64]| z[0] * z[1] + (z[0] + z[1]).sin() + 3.0 * z[2];
    let phi = exact_shapley(game, &[1.5, 1.5, 0.7], &[0.2, 0.2, 0.0], &[vec![0], vec![1], vec![2]]).unwrap();
    let symmetric = (phi[0] - phi[1]).abs() <= 1e-10;

    outcome(
        worst_sum <= SUMMATION_TOLERANCE && chain <= 1e-8 && dummy && symmetric,
        format!(
            "summation worst {worst_sum:.1e} over 100 triples, linear chain {chain:.1e}, dummy {dummy}, symmetry {symmetric}"
        ),
    )
}

fn end_to_end(close: &[Run]) -> Outcome {
    let accs: Vec<f64> = close[..5].iter().map(|r| r.accuracy).collect();
    let med = median(accs.clone());
    let slowest = close[..5].iter().map(|r| r.seconds).fold(0.0, f64::max);
    outcome(
        med >= 0.90 && slowest < 300.0,
        format!("median test accuracy {med:.3} over seeds 0-4 {accs:.3?}, slowest run {slowest:.1}s"),
    )
}

fn order_sensitivity(close: &[Run], separate: &[Run]) -> Outcome {
    let gaps: Vec<f64> = close.iter().zip(separate).map(|(c, s)| (c.accuracy - s.accuracy).abs()).collect();
    let med_gap = median(gaps.clone());
    let same_clusters = close.iter().zip(separate).filter(|(c, s)| c.clusters == s.clusters).count();
    let medians = (
        median(close.iter().map(|r| r.accuracy).collect()),
        median(separate.iter().map(|r| r.accuracy).collect()),
    );
    outcome(
        med_gap <= 0.02 && same_clusters == separate.len(),
        format!(
            "median paired gap {:.1} points {gaps:.3?} (medians {:.3} vs {:.3}); identical clusters {same_clusters}/{}",
            100.0 * med_gap,
            medians.0,
            medians.1,
            separate.len()
        ),
    )
}

fn root_cause(close: &[Run]) -> Outcome {
    let hits = |k: usize| close.iter().filter(|r| r.roots.is_some_and(|h| h[k])).count();
    let (mean, var) = (hits(0), hits(1));
    outcome(
        mean >= 8 && var >= 8,
        format!("mean-shift root {mean}/{n}, variance root {var}/{n}", n = close.len()),
    )
}

fn determinism(first: &Run) -> Outcome {
    let again = pipeline_run(0, None, false);
    let identical = again.model.to_bytes() == first.model.to_bytes();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.hdl");
    first.model.save(&path).unwrap();
    let loaded = HdlcnnModel::load(&path).unwrap();
    let exact = loaded.to_bytes() == first.model.to_bytes() && loaded.params().flatten() == first.model.params().flatten();
    let metrics_kept = evaluate_dataset(&loaded, &first.data.test).unwrap() == first.metrics;
    outcome(
        identical && exact && metrics_kept,
        format!("rerun byte-identical {identical}, round trip bit-exact {exact}, metrics preserved {metrics_kept}"),
    )
}

fn guarded(f: impl FnOnce() -> Outcome) -> Outcome {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        outcome(false, format!("panicked: {msg}"))
    })
}

fn main() {
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    let mut report = |n: usize, name: &'static str, o: Outcome| {
        println!("{} criterion {n} ({name}): {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((n, name, o));
    };
    report(1, "gradient correctness", guarded(gradients));
    report(2, "dilated convolution equivalences", guarded(conv_equivalences));
    report(3, "receptive field", guarded(receptive_field));
    report(4, "Ward clustering", guarded(ward));
    report(5, "architecture shapes", guarded(shapes));
    report(6, "attribution identities", guarded(attribution));

    let runs = catch_unwind(|| {
        let close: Vec<Run> = (0..10).map(|s| pipeline_run(s, None, true)).collect();
        let order = separate_order(SynthConfig::default().n_features);
        let separate: Vec<Run> = (0..5).map(|s| pipeline_run(s, Some(&order), false)).collect();
        (close, separate)
    });
    match &runs {
        Ok((close, separate)) => {
            report(7, "synthetic end-to-end accuracy", guarded(|| end_to_end(close)));
            report(8, "order sensitivity", guarded(|| order_sensitivity(&close[..5], separate)));
            report(9, "root cause recovery", guarded(|| root_cause(close)));
            report(10, "determinism and persistence", guarded(|| determinism(&close[0])));
        }
        Err(_) => {
            for (n, name) in [(7, "synthetic end-to-end accuracy"), (8, "order sensitivity"), (9, "root cause recovery"), (10, "determinism and persistence")] {
                report(n, name, outcome(false, "pipeline runs panicked"));
            }
        }
    }

    let failed: Vec<usize> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!("{}/{} criteria passed", results.len() - failed.len(), results.len());
    if !failed.is_empty() {
        println!("failed: {failed:?}");
        std::process::exit(1);
    }
}
