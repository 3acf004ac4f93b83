//! Calculated-vs-random initialization experiments and their reports.
//!
//! A plan pairs, for every subset size and seed, a network built from
//! prototypes with a twin whose parameters are drawn uniformly at random.
//! Both twins share the prototype set, the training subset, the schedule and
//! the sample order; only the initialization differs.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::binarize;
use crate::inference::{classify, evaluate, Decision, EvalReport};
use crate::mnist::{LabeledDataset, MnistPaths};
use crate::network::{build_knn_network, build_nn_network, Architecture, LayeredNetwork};
use crate::oracle::Oracle;
use crate::prototypes::{select_prototypes, PrototypeSet, SelectionConfig};
use crate::trainer::{train_with, EpochMetrics, InitKind, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrototypeSource {
    Test,
    Train,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
    pub sizes: Vec<usize>,
    /// Prefix of the test set used for evaluation; `None` = all of it.
    pub test_subset: Option<usize>,
    pub seeds: Vec<u64>,
    pub source: PrototypeSource,
    /// `seed` is replaced by each plan seed.
    pub selection: SelectionConfig,
    /// S; `None` builds the nearest-neighbor network.
    pub neighbors: Option<usize>,
    pub train: TrainConfig,
    pub init_range: (f64, f64),
    pub kinds: Vec<InitKind>,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        Self {
            data_dir: PathBuf::from("data/mnist"),
            out_dir: PathBuf::from("out"),
            sizes: vec![2000, 1000],
            test_subset: Some(2000),
            seeds: vec![0, 1, 2, 3, 4],
            source: PrototypeSource::Test,
            selection: SelectionConfig::default(),
            neighbors: None,
            train: TrainConfig::default(),
            init_range: (-0.5, 0.5),
            kinds: vec![InitKind::Calculated, InitKind::Random],
        }
    }
}

impl ExperimentPlan {
    /// Full MNIST: 60k / 40k / 20k training images, the whole test set, one seed.
    pub fn paper_scale() -> Self {
        Self {
            sizes: vec![60_000, 40_000, 20_000],
            test_subset: None,
            seeds: vec![0],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if let Some(&bad) = self.sizes.iter().find(|&&s| s == 0) {
            return Err(Error::Config(format!("subset size {bad} is not positive")));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("no seeds".into()));
        }
        let (lo, hi) = self.init_range;
        if !lo.is_finite() || !hi.is_finite() || lo >= hi {
            return Err(Error::Config(format!(
                "empty initialization range [{}, {}]",
                self.init_range.0, self.init_range.1
            )));
        }
        Ok(())
    }

    pub fn load_data(&self) -> Result<ExperimentData> {
        let paths = MnistPaths::in_dir(&self.data_dir);
        Ok(ExperimentData {
            train: paths.load_train()?,
            test: paths.load_test()?,
        })
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentData {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
}

impl ExperimentData {
    fn test_set(&self, plan: &ExperimentPlan) -> Result<LabeledDataset> {
        match plan.test_subset {
            Some(n) => self.test.take_prefix(n.min(self.test.len())),
            None => Ok(self.test.clone()),
        }
    }

    pub fn select(&self, plan: &ExperimentPlan, seed: u64) -> Result<PrototypeSet> {
        let source = match plan.source {
            PrototypeSource::Test => &self.test,
            PrototypeSource::Train => &self.train,
        };
        select_prototypes(
            source,
            &SelectionConfig {
                seed,
                ..plan.selection.clone()
            },
        )
    }
}

/// Builds the configured architecture and times the weight calculation.
pub fn construct(protos: &PrototypeSet, neighbors: Option<usize>) -> Result<(LayeredNetwork, f64)> {
    let start = Instant::now();
    let net = match neighbors {
        None => build_nn_network(protos)?,
        Some(s) => build_knn_network(protos, s)?,
    };
    Ok((net, start.elapsed().as_secs_f64()))
}

#[derive(Debug, Clone)]
pub struct Baseline {
    pub network: LayeredNetwork,
    pub report: EvalReport,
    /// seconds spent calculating weights
    pub t_construct: f64,
}

/// Calculated network, untrained, threshold mode, scored on the test set.
pub fn run_baseline(plan: &ExperimentPlan, data: &ExperimentData, seed: u64) -> Result<Baseline> {
    let protos = data.select(plan, seed)?;
    let (network, t_construct) = construct(&protos, plan.neighbors)?;
    let report = evaluate(&network, &data.test_set(plan)?, plan.selection.threshold)?;
    Ok(Baseline {
        network,
        report,
        t_construct,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub metrics: EpochMetrics,
    /// test set scored with the post-epoch snapshot
    pub test: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRecord {
    pub subset_size: usize,
    pub seed: u64,
    pub kind: InitKind,
    pub prototype_sources: Vec<usize>,
    pub t_construct: f64,
    pub epochs: Vec<EpochRecord>,
    pub total_seconds: f64,
    /// `(t_rand − t_calc)·100 / t_rand` against the paired random run; set on
    /// calculated records only.
    pub speedup_pct: Option<f64>,
}

impl ComparisonRecord {
    pub fn final_test_accuracy(&self) -> f64 {
        self.epochs.last().map_or(0.0, |e| e.test.accuracy())
    }
}

pub fn speedup_pct(t_random: f64, t_calculated: f64) -> f64 {
    (t_random - t_calculated) * 100.0 / t_random
}

/// Seed of the random twin, decorrelated from the prototype seed.
pub fn random_init_seed(seed: u64) -> u64 {
    seed.wrapping_mul(0x2545_F491_4F6C_DD1D) ^ 0xA076_1D64_78BD_642F
}

/// Trains every (size, seed, kind) run of the plan sequentially, scoring the
/// test set after each epoch.
pub fn run_comparison(plan: &ExperimentPlan, data: &ExperimentData) -> Result<Vec<ComparisonRecord>> {
    run_comparison_with(plan, data, |_| {})
}

/// As [`run_comparison`], reporting each finished run to `progress`.
pub fn run_comparison_with<F>(
    plan: &ExperimentPlan,
    data: &ExperimentData,
    mut progress: F,
) -> Result<Vec<ComparisonRecord>>
where
    F: FnMut(&ComparisonRecord),
{
    plan.validate()?;
    let test = data.test_set(plan)?;
    let mut built = Vec::with_capacity(plan.seeds.len());
    for &seed in &plan.seeds {
        let protos = data.select(plan, seed)?;
        let (net, t) = construct(&protos, plan.neighbors)?;
        built.push((seed, protos.sources().to_vec(), net, t));
    }

    let mut records = Vec::new();
    for &size in &plan.sizes {
        let subset = data.train.take_prefix(size)?;
        for (seed, sources, base, t_construct) in &built {
            for &kind in &plan.kinds {
                let mut net = match kind {
                    InitKind::Calculated => base.clone(),
                    InitKind::Random => base.randomize_weights(
                        plan.init_range.0,
                        plan.init_range.1,
                        random_init_seed(*seed),
                    )?,
                }
                .to_sigmoid();
                let mut tests = Vec::new();
                let history = train_with(&mut net, &subset, &plan.train, kind, |snapshot, _| {
                    tests.push(evaluate(snapshot, &test, plan.train.binarize_threshold)?);
                    Ok(())
                })?;
                let record = ComparisonRecord {
                    subset_size: size,
                    seed: *seed,
                    kind,
                    prototype_sources: sources.clone(),
                    t_construct: *t_construct,
                    epochs: history
                        .epochs
                        .into_iter()
                        .zip(tests)
                        .map(|(metrics, test)| EpochRecord { metrics, test })
                        .collect(),
                    total_seconds: history.total_time,
                    speedup_pct: None,
                };
                progress(&record);
                records.push(record);
            }
        }
    }
    fill_speedups(&mut records);
    Ok(records)
}

fn fill_speedups(records: &mut [ComparisonRecord]) {
    let randoms: Vec<(usize, u64, f64)> = records
        .iter()
        .filter(|r| r.kind == InitKind::Random)
        .map(|r| (r.subset_size, r.seed, r.total_seconds))
        .collect();
    for r in records.iter_mut().filter(|r| r.kind == InitKind::Calculated) {
        r.speedup_pct = randoms
            .iter()
            .find(|(size, seed, _)| *size == r.subset_size && *seed == r.seed)
            .map(|&(_, _, t_rand)| speedup_pct(t_rand, r.total_seconds));
    }
}

/// One row of the combined comparison CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub subset_size: usize,
    pub init_kind: InitKind,
    pub epoch: usize,
    pub rate: f64,
    pub train_recognized: usize,
    pub train_pct: f64,
    pub s_err: f64,
    pub epoch_seconds: f64,
    pub test_correct: u64,
    pub test_pct: f64,
    pub seed: u64,
    pub test_total: u64,
}

pub const COMPARISON_HEADER: [&str; 12] = [
    "subset_size",
    "init_kind",
    "epoch",
    "rate",
    "train_recognized",
    "train_pct",
    "s_err",
    "epoch_seconds",
    "test_correct",
    "test_pct",
    "seed",
    "test_total",
];

pub fn comparison_rows(records: &[ComparisonRecord]) -> Vec<ComparisonRow> {
    records
        .iter()
        .flat_map(|r| {
            r.epochs.iter().map(move |e| ComparisonRow {
                subset_size: r.subset_size,
                init_kind: r.kind,
                epoch: e.metrics.epoch,
                rate: e.metrics.rate,
                train_recognized: e.metrics.recognized_count,
                train_pct: e.metrics.recognized_pct,
                s_err: e.metrics.s_err,
                epoch_seconds: e.metrics.wall_time,
                test_correct: e.test.total_correct(),
                test_pct: e.test.accuracy(),
                seed: r.seed,
                test_total: e.test.total(),
            })
        })
        .collect()
}

fn create(path: &Path) -> Result<csv::Writer<fs::File>> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::WriterBuilder::new().has_headers(false).from_writer(file))
}

fn finish<W: io::Write>(mut w: csv::Writer<W>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_comparison_csv(records: &[ComparisonRecord], path: &Path) -> Result<()> {
    let mut w = create(path)?;
    w.write_record(COMPARISON_HEADER)?;
    for row in comparison_rows(records) {
        w.serialize(row)?;
    }
    finish(w, path)
}

pub fn read_comparison_csv(path: &Path) -> Result<Vec<ComparisonRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyTrendRow {
    pub subset_size: usize,
    pub init_kind: InitKind,
    pub runs: usize,
    pub final_test_pct_mean: f64,
    pub final_test_pct_min: f64,
    pub final_test_pct_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeTrendRow {
    pub subset_size: usize,
    pub init_kind: InitKind,
    pub runs: usize,
    pub total_seconds_mean: f64,
    /// calculated rows only: speedup of the mean times
    pub speedup_pct: Option<f64>,
}

fn groups(records: &[ComparisonRecord]) -> Vec<(usize, InitKind, Vec<&ComparisonRecord>)> {
    let mut out: Vec<(usize, InitKind, Vec<&ComparisonRecord>)> = Vec::new();
    for r in records {
        match out
            .iter_mut()
            .find(|(s, k, _)| *s == r.subset_size && *k == r.kind)
        {
            Some((_, _, v)) => v.push(r),
            None => out.push((r.subset_size, r.kind, vec![r])),
        }
    }
    out
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

pub fn accuracy_trend(records: &[ComparisonRecord]) -> Vec<AccuracyTrendRow> {
    groups(records)
        .into_iter()
        .map(|(size, kind, rs)| {
            let acc: Vec<f64> = rs.iter().map(|r| r.final_test_accuracy()).collect();
            AccuracyTrendRow {
                subset_size: size,
                init_kind: kind,
                runs: rs.len(),
                final_test_pct_mean: mean(acc.iter().copied()),
                final_test_pct_min: acc.iter().copied().fold(f64::INFINITY, f64::min),
                final_test_pct_max: acc.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .collect()
}

pub fn time_trend(records: &[ComparisonRecord]) -> Vec<TimeTrendRow> {
    let g = groups(records);
    let mean_time = |size: usize, kind: InitKind| {
        g.iter()
            .find(|(s, k, _)| *s == size && *k == kind)
            .map(|(_, _, rs)| mean(rs.iter().map(|r| r.total_seconds)))
    };
    g.iter()
        .map(|(size, kind, rs)| {
            let t = mean(rs.iter().map(|r| r.total_seconds));
            TimeTrendRow {
                subset_size: *size,
                init_kind: *kind,
                runs: rs.len(),
                total_seconds_mean: t,
                speedup_pct: match kind {
                    InitKind::Calculated => {
                        mean_time(*size, InitKind::Random).map(|tr| speedup_pct(tr, t))
                    }
                    InitKind::Random => None,
                },
            }
        })
        .collect()
}

fn run_stem(r: &ComparisonRecord) -> String {
    format!("run_{}_{}_seed{}", r.subset_size, r.kind, r.seed)
}

fn write_run_csv(r: &ComparisonRecord, path: &Path) -> Result<()> {
    let classes = r.epochs.first().map_or(0, |e| e.test.class_count());
    let mut header: Vec<String> = [
        "epoch",
        "rate",
        "train_recognized",
        "train_pct",
        "s_err",
        "s_err_all",
        "corrected",
        "post_epoch_recognized",
        "epoch_seconds",
        "test_correct",
        "test_total",
        "test_pct",
        "test_rejected",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend((0..classes).map(|j| format!("s{j}")));
    header.extend((0..classes).map(|j| format!("i{j}")));

    let mut w = create(path)?;
    w.write_record(&header)?;
    for e in &r.epochs {
        let m = &e.metrics;
        let mut row = vec![
            m.epoch.to_string(),
            m.rate.to_string(),
            m.recognized_count.to_string(),
            m.recognized_pct.to_string(),
            m.s_err.to_string(),
            m.s_err_all.to_string(),
            m.corrected_count.to_string(),
            m.post_epoch_recognized.map(|v| v.to_string()).unwrap_or_default(),
            m.wall_time.to_string(),
            e.test.total_correct().to_string(),
            e.test.total().to_string(),
            e.test.accuracy().to_string(),
            e.test.rejected.to_string(),
        ];
        row.extend(e.test.correct.iter().map(u64::to_string));
        row.extend(e.test.totals.iter().map(u64::to_string));
        w.write_record(&row)?;
    }
    finish(w, path)
}

fn fmt_minutes_table(records: &[ComparisonRecord]) -> String {
    use std::fmt::Write as _;
    let mut out = String::new();
    let mut pairs: Vec<(usize, u64)> = records.iter().map(|r| (r.subset_size, r.seed)).collect();
    pairs.dedup();
    for (size, seed) in pairs {
        let find = |k| {
            records
                .iter()
                .find(|r| r.subset_size == size && r.seed == seed && r.kind == k)
        };
        let (calc, rand) = (find(InitKind::Calculated), find(InitKind::Random));
        let _ = writeln!(out, "training set {size}, seed {seed}");
        let _ = writeln!(
            out,
            "{:<6}{:<7}| {:>10} {:>8} {:>10} {:>9} | {:>10} {:>8} {:>10} {:>9}",
            "epoch", "rate", "calc rec", "%", "S_err", "s", "rand rec", "%", "S_err", "s"
        );
        let epochs = calc.or(rand).map_or(0, |r| r.epochs.len());
        for e in 0..epochs {
            let cell = |r: Option<&ComparisonRecord>| match r.map(|r| &r.epochs[e].metrics) {
                Some(m) => format!(
                    "{:>10} {:>7.2}% {:>10.2} {:>9.3}",
                    m.recognized_count, m.recognized_pct, m.s_err, m.wall_time
                ),
                None => format!("{:>40}", "-"),
            };
            let rate = calc.or(rand).map_or(0.0, |r| r.epochs[e].metrics.rate);
            let _ = writeln!(out, "{:<6}{:<7}| {} | {}", e + 1, rate, cell(calc), cell(rand));
        }
        let total = |r: Option<&ComparisonRecord>| r.map_or("-".into(), |r| format!("{:.3}", r.total_seconds));
        let _ = writeln!(out, "total seconds: calculated {}, random {}", total(calc), total(rand));
        if let Some(p) = calc.and_then(|r| r.speedup_pct) {
            let _ = writeln!(out, "speedup: {p:.1}%");
        }
        let _ = writeln!(out, "test set after each epoch:");
        let _ = writeln!(out, "{:<6}{:<7}| {:>10} {:>8} | {:>10} {:>8}", "epoch", "rate", "calc", "%", "random", "%");
        for e in 0..epochs {
            let cell = |r: Option<&ComparisonRecord>| match r.map(|r| &r.epochs[e].test) {
                Some(t) => format!("{:>10} {:>7.2}%", t.total_correct(), t.accuracy()),
                None => format!("{:>19}", "-"),
            };
            let rate = calc.or(rand).map_or(0.0, |r| r.epochs[e].metrics.rate);
            let _ = writeln!(out, "{:<6}{:<7}| {} | {}", e + 1, rate, cell(calc), cell(rand));
        }
        out.push('\n');
    }
    out
}

/// Writes `comparison.csv`, `accuracy_vs_size.csv`, `time_vs_size.csv`,
/// `tables.txt` and per-run CSV and per-epoch test tables into `dir`.
pub fn emit_reports(records: &[ComparisonRecord], dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();

    let path = dir.join("comparison.csv");
    write_comparison_csv(records, &path)?;
    written.push(path);

    let path = dir.join("accuracy_vs_size.csv");
    let mut w = create(&path)?;
    w.write_record([
        "subset_size",
        "init_kind",
        "runs",
        "final_test_pct_mean",
        "final_test_pct_min",
        "final_test_pct_max",
    ])?;
    for row in accuracy_trend(records) {
        w.serialize(row)?;
    }
    finish(w, &path)?;
    written.push(path);

    let path = dir.join("time_vs_size.csv");
    let mut w = create(&path)?;
    w.write_record(["subset_size", "init_kind", "runs", "total_seconds_mean", "speedup_pct"])?;
    for row in time_trend(records) {
        w.serialize(row)?;
    }
    finish(w, &path)?;
    written.push(path);

    for r in records {
        let path = dir.join(format!("{}.csv", run_stem(r)));
        write_run_csv(r, &path)?;
        written.push(path);

        let path = dir.join(format!("{}_test.txt", run_stem(r)));
        let reports: Vec<EvalReport> = r.epochs.iter().map(|e| e.test.clone()).collect();
        let titles: Vec<String> = (1..=reports.len()).map(|e| format!("Epoch {e}")).collect();
        let mut text = format!(
            "prototype sources: {:?}\n",
            r.prototype_sources
        );
        text += &EvalReport::side_by_side(&reports, &titles);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }

    let path = dir.join("tables.txt");
    fs::write(&path, fmt_minutes_table(records)).map_err(|e| Error::io(&path, e))?;
    written.push(path);
    Ok(written)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CrossCheck {
    pub checked: usize,
    /// dataset indices where network and oracle disagree
    pub mismatches: Vec<usize>,
    pub rejected: usize,
}

/// Threshold-mode network decision vs brute-force oracle on the first
/// `limit` records of `data`.
pub fn cross_check(
    protos: &PrototypeSet,
    neighbors: Option<usize>,
    data: &LabeledDataset,
    threshold: u8,
    limit: usize,
) -> Result<CrossCheck> {
    let (net, _) = construct(protos, neighbors)?;
    let oracle = Oracle::new(protos);
    let mut out = CrossCheck {
        checked: 0,
        mismatches: Vec::new(),
        rejected: 0,
    };
    for (i, (img, _)) in data.iter().take(limit).enumerate() {
        let x = binarize(img, threshold);
        let got = classify(&net, &x)?;
        let want = match neighbors {
            None => oracle.nearest(&x)?,
            Some(s) => oracle.k_nearest(&x, s)?,
        };
        if got != want {
            out.mismatches.push(i);
        }
        if want == Decision::Rejected {
            out.rejected += 1;
        }
        out.checked += 1;
    }
    Ok(out)
}

/// Architecture implied by an optional neighbor count.
pub fn architecture_of(neighbors: Option<usize>) -> Architecture {
    match neighbors {
        None => Architecture::NearestNeighbor,
        Some(neighbors) => Architecture::KNearest { neighbors },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn speedup_arithmetic() {
        assert_eq!(speedup_pct(471.0, 293.0).round(), 38.0);
        assert_eq!(speedup_pct(499.0, 329.0).round(), 34.0);
        assert_eq!(speedup_pct(298.0, 196.0).round(), 34.0);
    }

    #[test]
    fn empty_records_give_header_only_csvs() {
        let dir = tempfile::tempdir().unwrap();
        emit_reports(&[], dir.path()).unwrap();
        let comparison = fs::read_to_string(dir.path().join("comparison.csv")).unwrap();
        assert_eq!(comparison, COMPARISON_HEADER.join(",") + "\n");
        let acc = fs::read_to_string(dir.path().join("accuracy_vs_size.csv")).unwrap();
        assert_eq!(acc.lines().count(), 1);
        let time = fs::read_to_string(dir.path().join("time_vs_size.csv")).unwrap();
        assert_eq!(time.lines().count(), 1);
        assert!(read_comparison_csv(&dir.path().join("comparison.csv")).unwrap().is_empty());
    }

    #[test]
    fn plan_validation() {
        assert!(ExperimentPlan::default().validate().is_ok());
        let bad = ExperimentPlan {
            sizes: vec![100, 0],
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = ExperimentPlan {
            init_range: (0.5, -0.5),
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
