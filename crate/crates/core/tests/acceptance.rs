//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any failure.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use common::*;
use metricnet::experiment::{
    construct, emit_reports, run_baseline, run_comparison, ComparisonRecord, ExperimentData,
    ExperimentPlan,
};
use metricnet::mnist::{encode_idx_images, encode_idx_labels};
use metricnet::model_io::{from_text, to_text};
use metricnet::trainer::gradients;
use metricnet::{
    build_knn_network, build_nn_network, classify, compute_distance_field, evaluate, forward,
    forward_values, knn_oracle, load_model, loss, nn_oracle, parse_idx_images, parse_idx_labels,
    save_model, select_prototypes, train, ActivationMode, BitImage, DenseLayer, Firing, InitKind,
    LayeredNetwork, NetworkMeta, PrototypeSet, SelectionConfig, TrainConfig,
};
use rand::Rng;

type Outcome = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn toy_set() -> PrototypeSet {
    let vertical = BitImage::from_fn(3, 3, |c, _| c == 1);
    let diagonal = BitImage::from_fn(3, 3, |c, r| c == r);
    let horizontal = BitImage::from_fn(3, 3, |_, r| r == 1);
    let anti = BitImage::from_fn(3, 3, |c, r| c + r == 2);
    PrototypeSet::new(vec![vertical, diagonal, horizontal, anti], vec![0, 0, 1, 1], 2).unwrap()
}

fn all_3x3() -> impl Iterator<Item = BitImage> {
    (0u32..512).map(|m| BitImage::from_fn(3, 3, move |c, r| m >> (r * 3 + c) & 1 == 1))
}

/// Random 16×16 prototype set (N in [2,12], N_pat in [2,4]) and probe.
fn random_instance(seed: u64) -> (PrototypeSet, BitImage) {
    let mut r = rng(seed);
    let n = r.random_range(2..=12);
    let classes = r.random_range(2..=4usize).min(n);
    let protos = random_protos(&mut r, 16, 16, n, classes);
    let density = [0.003, 0.02, 0.1, 0.3][r.random_range(0..4)];
    let x = random_image(&mut r, 16, 16, density);
    (protos, x)
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let (mut cases, mut mismatches, mut rejected) = (0, 0, 0);
    let toy = toy_set();
    let net = build_nn_network(&toy).unwrap();
    for x in all_3x3() {
        let want = nn_oracle(&toy, &x).unwrap();
        assert_eq!(want, brute_nn(toy.prototypes(), toy.classes(), &x));
        mismatches += usize::from(classify(&net, &x).unwrap() != want);
        rejected += usize::from(want == metricnet::Decision::Rejected);
        cases += 1;
    }
    for seed in 0..1000 {
        let (protos, x) = random_instance(seed);
        let net = build_nn_network(&protos).unwrap();
        let want = nn_oracle(&protos, &x).unwrap();
        assert_eq!(want, brute_nn(protos.prototypes(), protos.classes(), &x));
        mismatches += usize::from(classify(&net, &x).unwrap() != want);
        rejected += usize::from(want == metricnet::Decision::Rejected);
        cases += 1;
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(
        mismatches == 0 && secs < 10.0,
        format!("{mismatches} mismatches over {cases} cases ({rejected} rejected) in {secs:.2} s"),
    )
}

fn knn_equivalence() -> Outcome {
    let start = Instant::now();
    let (mut cases, mut mismatches) = (0, 0);
    let toy = toy_set();
    for s in 1..=3 {
        let net = build_knn_network(&toy, s).unwrap();
        for x in all_3x3() {
            let want = knn_oracle(&toy, &x, s).unwrap();
            assert_eq!(want, brute_knn(toy.prototypes(), toy.classes(), 2, &x, s));
            mismatches += usize::from(classify(&net, &x).unwrap() != want);
            cases += 1;
        }
    }
    for seed in 0..1000 {
        let (protos, x) = random_instance(seed);
        for s in (1..=3).filter(|&s| s <= protos.len()) {
            let net = build_knn_network(&protos, s).unwrap();
            let want = knn_oracle(&protos, &x, s).unwrap();
            assert_eq!(
                want,
                brute_knn(protos.prototypes(), protos.classes(), protos.class_count(), &x, s)
            );
            mismatches += usize::from(classify(&net, &x).unwrap() != want);
            cases += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(
        mismatches == 0 && secs < 30.0,
        format!("{mismatches} mismatches over {cases} cases in {secs:.2} s"),
    )
}

fn layer_one_algebra() -> Outcome {
    let mut checked = 0;
    let mut wrong = 0;
    for seed in 10_000..10_100 {
        let (protos, x) = random_instance(seed);
        let net = build_nn_network(&protos).unwrap();
        let states = &forward(&net, &x).unwrap().states[0];
        let d = brute_scores(protos.prototypes(), &x);
        for (idx, (i, j)) in net.meta().pairs().into_iter().enumerate() {
            let s = states[idx];
            if s.fract() != 0.0 || s as i64 != d[j] - d[i] {
                wrong += 1;
            }
            checked += 1;
        }
    }
    ensure(wrong == 0, format!("{wrong} wrong of {checked} first-layer states"))
}

fn transform_exactness() -> Outcome {
    let start = Instant::now();
    let mut r = rng(4);
    let mut wrong_cells = 0;
    for _ in 0..1000 {
        let (w, h) = (r.random_range(1..=28), r.random_range(1..=28));
        let density = [0.002, 0.01, 0.05, 0.3, 0.8][r.random_range(0..5)];
        let img = random_inked(&mut r, w, h, density);
        let f = compute_distance_field(&img).unwrap();
        let want = brute_field(&img);
        wrong_cells += f.values().iter().zip(&want).filter(|(a, b)| **a as u64 != **b).count();
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(
        wrong_cells == 0 && secs < 10.0,
        format!("{wrong_cells} wrong cells over 1000 images in {secs:.2} s"),
    )
}

fn gradient_check() -> Outcome {
    let mut r = rng(5);
    let mut inputs = 10;
    let layers = [5, 3]
        .iter()
        .map(|&n| {
            let weights = (0..inputs * n).map(|_| r.random_range(-1.0..1.0)).collect();
            let bias = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
            let layer = DenseLayer::new(inputs, weights, bias, vec![Firing::Strict; n]).unwrap();
            inputs = n;
            layer
        })
        .collect();
    let net =
        LayeredNetwork::new(layers, ActivationMode::Sigmoid, NetworkMeta::custom(10, 1, 3)).unwrap();
    let cfg = TrainConfig::default();
    let eps = 1e-5;
    let mut worst: f64 = 0.0;
    let mut params = 0;
    for trial in 0..3 {
        let x: Vec<f64> = (0..10).map(|_| r.random_range(0.0..1.0)).collect();
        let label = trial % 3;
        let g = gradients(&net, &x, label, &cfg).unwrap();
        let eval = |n: &LayeredNetwork| loss(forward_values(n, &x).unwrap().final_outputs(), label, &cfg);
        let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(1e-8);
        for l in 0..2 {
            for p in 0..net.layers()[l].weights().len() {
                let (mut up, mut down) = (net.clone(), net.clone());
                up.layers_mut()[l].weights_mut()[p] += eps;
                down.layers_mut()[l].weights_mut()[p] -= eps;
                worst = worst.max(rel(g.weights[l][p], (eval(&up) - eval(&down)) / (2.0 * eps)));
                params += 1;
            }
            for p in 0..net.layers()[l].neurons() {
                let (mut up, mut down) = (net.clone(), net.clone());
                up.layers_mut()[l].bias_mut()[p] += eps;
                down.layers_mut()[l].bias_mut()[p] -= eps;
                worst = worst.max(rel(g.bias[l][p], (eval(&up) - eval(&down)) / (2.0 * eps)));
                params += 1;
            }
        }
    }
    ensure(
        worst < 1e-4,
        format!("max relative error {worst:.2e} over {params} parameter checks"),
    )
}

fn baseline_band(data: &ExperimentData) -> Outcome {
    let start = Instant::now();
    let plan = ExperimentPlan {
        test_subset: None,
        ..ExperimentPlan::default()
    };
    let mut acc = Vec::new();
    for seed in 0..5 {
        let b = run_baseline(&plan, data, seed).unwrap();
        assert_eq!(b.report.total(), 10_000);
        acc.push(b.report.accuracy());
    }
    let secs = start.elapsed().as_secs_f64();
    let list = acc.iter().map(|a| format!("{a:.2}%")).collect::<Vec<_>>().join(", ");
    ensure(
        acc.iter().all(|&a| a >= 50.0) && acc.iter().any(|&a| a >= 60.0) && secs < 120.0,
        format!("untrained accuracy per seed [{list}] in {secs:.1} s"),
    )
}

fn construction_speed(data: &ExperimentData) -> Outcome {
    let protos = select_prototypes(&data.test, &SelectionConfig::default()).unwrap();
    assert_eq!(protos.len(), 30);
    let (net, secs) = construct(&protos, None).unwrap();
    ensure(
        secs < 5.0,
        format!("N = 30, layers {:?}, built in {secs:.4} s", net.layer_sizes()),
    )
}

fn final_acc(records: &[ComparisonRecord], size: usize, seed: u64, kind: InitKind) -> f64 {
    run_of(records, size, seed, kind).final_test_accuracy()
}

fn run_of(records: &[ComparisonRecord], size: usize, seed: u64, kind: InitKind) -> &ComparisonRecord {
    records
        .iter()
        .find(|r| r.subset_size == size && r.seed == seed && r.kind == kind)
        .expect("run present")
}

fn training_trend(plan: &ExperimentPlan, records: &[ComparisonRecord], secs: f64) -> Outcome {
    let mut dominant = 0;
    let mut gaps = Vec::new();
    for &seed in &plan.seeds {
        let calc = run_of(records, 2000, seed, InitKind::Calculated);
        let rand = run_of(records, 2000, seed, InitKind::Random);
        let accs = |r: &ComparisonRecord| r.epochs.iter().map(|e| e.test.accuracy()).collect::<Vec<_>>();
        let (c, r) = (accs(calc), accs(rand));
        if c.iter().zip(&r).all(|(c, r)| c >= r) {
            dominant += 1;
        }
        gaps.push(c[0] - r[0]);
    }
    let mean_gap = gaps.iter().sum::<f64>() / gaps.len() as f64;
    ensure(
        dominant >= 4 && mean_gap >= 5.0 && secs < 900.0,
        format!(
            "calculated >= random at every epoch on {dominant}/5 seeds, mean epoch-1 gap {mean_gap:.2} points, plan ran in {secs:.1} s"
        ),
    )
}

fn robustness_trend(plan: &ExperimentPlan, records: &[ComparisonRecord]) -> Outcome {
    let drop = |kind| {
        plan.seeds
            .iter()
            .map(|&s| final_acc(records, 2000, s, kind) - final_acc(records, 1000, s, kind))
            .sum::<f64>()
            / plan.seeds.len() as f64
    };
    let (calc, rand) = (drop(InitKind::Calculated), drop(InitKind::Random));
    ensure(
        calc <= rand,
        format!("mean drop 2000 -> 1000: calculated {calc:.2} points, random {rand:.2} points"),
    )
}

/// CSV text with every column whose name mentions seconds blanked.
fn without_time(path: &Path) -> Vec<Vec<String>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).from_path(path).unwrap();
    let rows: Vec<Vec<String>> = reader
        .records()
        .map(|r| r.unwrap().iter().map(str::to_string).collect())
        .collect();
    let timed: Vec<usize> = rows
        .first()
        .map(|h| (0..h.len()).filter(|&i| h[i].contains("seconds")).collect())
        .unwrap_or_default();
    rows.into_iter()
        .map(|mut row| {
            for &i in &timed {
                row[i].clear();
            }
            row
        })
        .collect()
}

fn determinism(data: &ExperimentData, plan: &ExperimentPlan, first: &[ComparisonRecord]) -> Outcome {
    let shuffled = ExperimentPlan {
        sizes: vec![500],
        seeds: vec![0, 1],
        train: TrainConfig {
            shuffle_seed: Some(17),
            ..TrainConfig::default()
        },
        ..plan.clone()
    };
    let mut compared = 0;
    let mut differing = Vec::new();
    for (p, prior) in [(plan, Some(first)), (&shuffled, None)] {
        let a = match prior {
            Some(r) => r.to_vec(),
            None => run_comparison(p, data).unwrap(),
        };
        let b = run_comparison(p, data).unwrap();
        let (da, db) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let files = emit_reports(&a, da.path()).unwrap();
        emit_reports(&b, db.path()).unwrap();
        for f in files.iter().filter(|f| f.extension().is_some_and(|e| e == "csv")) {
            let name = f.file_name().unwrap();
            if name == "time_vs_size.csv" {
                continue;
            }
            if without_time(f) != without_time(&db.path().join(name)) {
                differing.push(name.to_string_lossy().into_owned());
            }
            compared += 1;
        }
    }
    ensure(
        differing.is_empty(),
        format!("{compared} CSV files compared on non-time columns, differing: {differing:?}"),
    )
}

fn round_trips(data: &ExperimentData) -> Outcome {
    let paths = require_mnist();
    let mut notes = Vec::new();
    for (images, labels) in [
        (&paths.train_images, &paths.train_labels),
        (&paths.test_images, &paths.test_labels),
    ] {
        let ib = std::fs::read(images).unwrap();
        let lb = std::fs::read(labels).unwrap();
        let same = encode_idx_images(&parse_idx_images(&ib).unwrap()).unwrap() == ib
            && encode_idx_labels(&parse_idx_labels(&lb).unwrap()).unwrap() == lb;
        if !same {
            return Err(format!("IDX re-serialization of {} differs", images.display()));
        }
    }
    notes.push("IDX files re-serialize bit-exactly".to_string());

    let protos = select_prototypes(&data.test, &SelectionConfig::default()).unwrap();
    let mut net = build_nn_network(&protos).unwrap().to_sigmoid();
    let subset = data.train.take_prefix(1000).unwrap();
    train(&mut net, &subset, &TrainConfig::default(), InitKind::Calculated).unwrap();
    let test = data.test.take_prefix(2000).unwrap();
    let before = evaluate(&net, &test, 127).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trained.model");
    save_model(&net, &path).unwrap();
    let back = load_model(&path).unwrap();
    let bits = |n: &LayeredNetwork| -> Vec<u64> {
        n.layers()
            .iter()
            .flat_map(|l| l.weights().iter().chain(l.bias()).map(|v| v.to_bits()))
            .collect()
    };
    if bits(&back) != bits(&net) || back != net || to_text(&from_text(&to_text(&net)).unwrap()) != to_text(&net) {
        return Err("model parameters changed across save/load".into());
    }
    let after = evaluate(&back, &test, 127).unwrap();
    ensure(
        after == before,
        format!(
            "{}; trained model reloads bit-exactly; test report {}/{} before and {}/{} after",
            notes.join(", "),
            before.total_correct(),
            before.total(),
            after.total_correct(),
            after.total()
        ),
    )
}

fn panic_message(e: Box<dyn std::any::Any + Send>) -> String {
    e.downcast_ref::<String>()
        .cloned()
        .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_else(|| "panicked".into())
}

fn main() {
    let mut failures = 0;
    let mut report = |id: u32, name: &str, outcome: Outcome| {
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failures += 1;
                ("FAIL", d)
            }
        };
        println!("[{tag}] {id:>2} {name}: {detail}");
    };
    let guarded = |f: &dyn Fn() -> Outcome| catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| Err(panic_message(e)));

    report(1, "oracle equivalence", guarded(&oracle_equivalence));
    report(2, "k-NN equivalence", guarded(&knn_equivalence));
    report(3, "layer-1 algebra", guarded(&layer_one_algebra));
    report(4, "distance-transform exactness", guarded(&transform_exactness));
    report(5, "gradient check", guarded(&gradient_check));

    let data = catch_unwind(|| {
        let paths = require_mnist();
        ExperimentData {
            train: paths.load_train().unwrap(),
            test: paths.load_test().unwrap(),
        }
    })
    .map_err(panic_message);
    let data = match data {
        Ok(d) => d,
        Err(msg) => {
            for (id, name) in [
                (6, "baseline band"),
                (7, "construction speed"),
                (8, "comparative-training trend"),
                (9, "robustness trend"),
                (10, "determinism"),
                (11, "round-trips"),
            ] {
                report(id, name, Err(msg.clone()));
            }
            std::process::exit(1);
        }
    };

    report(6, "baseline band", guarded(&|| baseline_band(&data)));
    report(7, "construction speed", guarded(&|| construction_speed(&data)));

    let plan = ExperimentPlan::default();
    let start = Instant::now();
    let records = catch_unwind(AssertUnwindSafe(|| run_comparison(&plan, &data).unwrap()));
    let secs = start.elapsed().as_secs_f64();
    match &records {
        Ok(records) => {
            report(8, "comparative-training trend", guarded(&|| training_trend(&plan, records, secs)));
            report(9, "robustness trend", guarded(&|| robustness_trend(&plan, records)));
            report(10, "determinism", guarded(&|| determinism(&data, &plan, records)));
            let mean_time = |kind| {
                let t: Vec<f64> = records
                    .iter()
                    .filter(|r| r.kind == kind && r.subset_size == 2000)
                    .map(|r| r.total_seconds)
                    .collect();
                t.iter().sum::<f64>() / t.len() as f64
            };
            println!(
                "       training time at 2000 images (informational): calculated {:.2} s, random {:.2} s",
                mean_time(InitKind::Calculated),
                mean_time(InitKind::Random)
            );
        }
        Err(_) => {
            for (id, name) in [(8, "comparative-training trend"), (9, "robustness trend"), (10, "determinism")] {
                report(id, name, Err("comparison plan failed to run".into()));
            }
        }
    }
    report(11, "round-trips", guarded(&|| round_trips(&data)));

    if failures > 0 {
        println!("{failures} criteria failed");
        std::process::exit(1);
    }
    println!("all 11 criteria passed");
}
