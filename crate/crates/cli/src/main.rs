use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use metricnet::experiment::{
    construct, cross_check, emit_reports, run_baseline, run_comparison_with, ExperimentData,
    ExperimentPlan, PrototypeSource,
};
use metricnet::{
    build_weight_table, evaluate, load_model, save_model, select_prototypes, train_with,
    EpochMetrics, InitKind, LabeledDataset, LayeredNetwork, MnistPaths, PrototypeSet,
    SelectionConfig, SelectionStrategy, TrainConfig, UpdatePolicy, DEFAULT_THRESHOLD,
};

/// Build, train and compare multilayer perceptrons whose weights are
/// calculated from nearest-neighbor prototypes.
#[derive(Debug, Parser)]
#[command(name = "metricnet", version)]
struct Cli {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    protos: PrototypeArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Directory holding the four MNIST IDX files
    #[arg(long, global = true, default_value = "data/mnist", env = "METRICNET_MNIST_DIR")]
    data_dir: PathBuf,
    /// IDX image file the command works on instead of the default split
    #[arg(long, global = true, requires = "labels")]
    images: Option<PathBuf>,
    /// IDX label file paired with --images
    #[arg(long, global = true, requires = "images")]
    labels: Option<PathBuf>,
    /// Pixels strictly above this value are ink
    #[arg(long, global = true, default_value_t = DEFAULT_THRESHOLD)]
    binarize_threshold: u8,
    /// Use only the first N records of the working set
    #[arg(long, global = true)]
    subset_size: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Source {
    Test,
    Train,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Selection {
    Medoid,
    Uniform,
}

#[derive(Debug, Args)]
struct PrototypeArgs {
    #[arg(long, global = true, default_value_t = 3)]
    prototypes_per_class: usize,
    /// Split the prototypes are drawn from
    #[arg(long, global = true, value_enum, default_value_t = Source::Test)]
    prototype_source: Source,
    #[arg(long, global = true, value_enum, default_value_t = Selection::Medoid)]
    selection: Selection,
    /// Candidates per class considered by medoid selection
    #[arg(long, global = true, default_value_t = 100)]
    pool_size: usize,
    /// Seed for prototype selection and random initialization
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Build the k-nearest-neighbors network over S neighbors instead of the
    /// nearest-neighbor one
    #[arg(long, global = true, value_name = "S")]
    neighbors: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Policy {
    Misclassified,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Init {
    Calculated,
    Random,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Learning rate of each epoch
    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.1, 0.02])]
    epochs_rates: Vec<f64>,
    #[arg(long, default_value_t = 0.7)]
    target_active: f64,
    #[arg(long, default_value_t = 0.2)]
    target_inactive: f64,
    #[arg(long, value_enum, default_value_t = Policy::Misclassified)]
    update_policy: Policy,
    /// Shuffle samples each epoch with this seed; dataset order otherwise
    #[arg(long)]
    shuffle_seed: Option<u64>,
    /// Re-score the training set after every epoch
    #[arg(long)]
    post_epoch_eval: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Calculate a network from prototypes and save it
    Build {
        /// Model file to write
        #[arg(long, short)]
        out: Option<PathBuf>,
        /// Replace every parameter with a uniform draw from [-0.5, 0.5]
        #[arg(long)]
        randomize: bool,
        /// Store the network in sigmoid mode
        #[arg(long)]
        sigmoid: bool,
        /// Print the first-layer weight table of prototype pair I,J
        #[arg(long, value_name = "I,J", value_delimiter = ',')]
        dump_table: Option<Vec<usize>>,
    },
    /// Score a network on the test split (or --images/--labels)
    Eval {
        /// Saved model; calculated from prototypes when absent
        #[arg(long)]
        model: Option<PathBuf>,
        /// Also write the per-class report as CSV
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Fine-tune with per-sample backpropagation on the training split
    Train {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Init::Calculated)]
        init: Init,
        #[command(flatten)]
        train: TrainArgs,
        /// Per-epoch log CSV; stdout when absent
        #[arg(long)]
        log: Option<PathBuf>,
        /// Where to save the trained model
        #[arg(long)]
        save: Option<PathBuf>,
    },
    /// Calculated vs random initialization across training-set sizes
    Compare {
        #[arg(long, value_delimiter = ',', default_values_t = [2000, 1000])]
        sizes: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = [0, 1, 2, 3, 4])]
        seeds: Vec<u64>,
        /// Test images scored after each epoch; 0 uses the whole test split
        #[arg(long, default_value_t = 2000)]
        test_subset: usize,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        /// Full training split at 60000/40000/20000, whole test split, one seed
        #[arg(long)]
        paper_scale: bool,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Compare threshold-mode network decisions with the brute-force oracle
    CrossCheck {
        /// Number of records checked
        #[arg(long, default_value_t = 1000)]
        samples: usize,
    },
}

impl Cli {
    fn paths(&self) -> MnistPaths {
        MnistPaths::in_dir(&self.data.data_dir)
    }

    fn load_split(&self, test: bool) -> Result<LabeledDataset> {
        let paths = self.paths();
        let (images, labels) = if test {
            (paths.test_images, paths.test_labels)
        } else {
            (paths.train_images, paths.train_labels)
        };
        LabeledDataset::load(&images, &labels)
            .with_context(|| format!("loading {}; see scripts/fetch_mnist.sh", images.display()))
    }

    /// Working set: --images/--labels, else the given default split, cut to --subset-size.
    fn working_set(&self, default_test: bool) -> Result<LabeledDataset> {
        let data = match (&self.data.images, &self.data.labels) {
            (Some(images), Some(labels)) => LabeledDataset::load(images, labels)?,
            _ => self.load_split(default_test)?,
        };
        Ok(match self.data.subset_size {
            Some(n) => data.take_prefix(n)?,
            None => data,
        })
    }

    fn selection(&self) -> SelectionConfig {
        SelectionConfig {
            per_class: self.protos.prototypes_per_class,
            threshold: self.data.binarize_threshold,
            seed: self.protos.seed,
            strategy: match self.protos.selection {
                Selection::Medoid => SelectionStrategy::Medoid {
                    pool: self.protos.pool_size,
                },
                Selection::Uniform => SelectionStrategy::Uniform,
            },
        }
    }

    fn prototypes(&self) -> Result<PrototypeSet> {
        let source = self.load_split(self.protos.prototype_source == Source::Test)?;
        Ok(select_prototypes(&source, &self.selection())?)
    }

    fn network(&self, model: Option<&Path>) -> Result<LayeredNetwork> {
        match model {
            Some(path) => Ok(load_model(path)?),
            None => Ok(construct(&self.prototypes()?, self.protos.neighbors)?.0),
        }
    }

    fn train_config(&self, t: &TrainArgs) -> TrainConfig {
        TrainConfig {
            epoch_rates: t.epochs_rates.clone(),
            target_active: t.target_active,
            target_inactive: t.target_inactive,
            update_policy: match t.update_policy {
                Policy::Misclassified => UpdatePolicy::MisclassifiedOnly,
                Policy::All => UpdatePolicy::AllSamples,
            },
            shuffle_seed: t.shuffle_seed,
            post_epoch_eval: t.post_epoch_eval,
            binarize_threshold: self.data.binarize_threshold,
        }
    }
}

fn build(cli: &Cli, out: Option<&Path>, randomize: bool, sigmoid: bool, dump: Option<&[usize]>) -> Result<()> {
    let protos = cli.prototypes()?;
    let (mut net, secs) = construct(&protos, cli.protos.neighbors)?;
    println!(
        "prototypes {} (sources {:?})\nlayers {:?}, {} parameters\nt_construct = {secs:.4} s",
        protos.len(),
        protos.sources(),
        net.layer_sizes(),
        net.parameter_count()
    );
    if let Some(pair) = dump {
        let &[i, j] = pair else {
            bail!("--dump-table takes two prototype indices, got {pair:?}");
        };
        if i >= protos.len() || j >= protos.len() {
            bail!("prototype pair ({i}, {j}) out of range for N = {}", protos.len());
        }
        let fields = protos.distance_fields();
        print!("{}", build_weight_table(&fields[i], &fields[j], (i, j))?);
    }
    if randomize {
        net = net.randomize_weights(-0.5, 0.5, cli.protos.seed)?;
    }
    if sigmoid {
        net = net.to_sigmoid();
    }
    if let Some(path) = out {
        save_model(&net, path)?;
        println!("saved {}", path.display());
    }
    Ok(())
}

fn eval(cli: &Cli, model: Option<&Path>, csv_out: Option<&Path>) -> Result<()> {
    let data = cli.working_set(true)?;
    let net = cli.network(model)?;
    let report = evaluate(&net, &data, cli.data.binarize_threshold)?;
    print!("{}", report.to_table());
    println!("rejected {}", report.rejected);
    if let Some(path) = csv_out {
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        report.write_csv(file)?;
    }
    Ok(())
}

fn log_writer(path: Option<&Path>) -> Result<csv::Writer<Box<dyn Write>>> {
    let sink: Box<dyn Write> = match path {
        Some(p) => Box::new(File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => Box::new(io::stdout()),
    };
    Ok(csv::Writer::from_writer(sink))
}

fn train_cmd(cli: &Cli, model: Option<&Path>, init: Init, t: &TrainArgs, log: Option<&Path>, save: Option<&Path>) -> Result<()> {
    let cfg = cli.train_config(t);
    let data = cli.working_set(false)?;
    let mut net = cli.network(model)?;
    let kind = match init {
        Init::Calculated => InitKind::Calculated,
        Init::Random => {
            net = net.randomize_weights(-0.5, 0.5, cli.protos.seed)?;
            InitKind::Random
        }
    };
    let mut net = net.to_sigmoid();
    let mut w = log_writer(log)?;
    let mut header = vec!["epoch", "rate", "recognized", "pct", "s_err", "seconds"];
    if cfg.post_epoch_eval {
        header.push("post_epoch_recognized");
    }
    w.write_record(&header)?;
    let history = train_with(&mut net, &data, &cfg, kind, |_, m: &EpochMetrics| {
        let mut row = vec![
            m.epoch.to_string(),
            m.rate.to_string(),
            m.recognized_count.to_string(),
            format!("{:.4}", m.recognized_pct),
            format!("{:.6}", m.s_err),
            format!("{:.4}", m.wall_time),
        ];
        row.extend(m.post_epoch_recognized.map(|v| v.to_string()));
        w.write_record(&row).map_err(metricnet::Error::from)?;
        w.flush().map_err(|e| metricnet::Error::Config(e.to_string()))?;
        Ok(())
    })?;
    w.flush()?;
    eprintln!("{kind} initialization, {:.3} s total", history.total_time);
    if let Some(path) = save {
        save_model(&net, path)?;
        eprintln!("saved {}", path.display());
    }
    Ok(())
}

fn compare(
    cli: &Cli,
    sizes: &[usize],
    seeds: &[u64],
    test_subset: usize,
    out_dir: &Path,
    paper_scale: bool,
    t: &TrainArgs,
) -> Result<()> {
    let base = if paper_scale {
        ExperimentPlan::paper_scale()
    } else {
        ExperimentPlan {
            sizes: sizes.to_vec(),
            seeds: seeds.to_vec(),
            test_subset: (test_subset > 0).then_some(test_subset),
            ..ExperimentPlan::default()
        }
    };
    let plan = ExperimentPlan {
        data_dir: cli.data.data_dir.clone(),
        out_dir: out_dir.to_path_buf(),
        source: match cli.protos.prototype_source {
            Source::Test => PrototypeSource::Test,
            Source::Train => PrototypeSource::Train,
        },
        selection: cli.selection(),
        neighbors: cli.protos.neighbors,
        train: cli.train_config(t),
        ..base
    };
    plan.validate()?;
    let data = ExperimentData {
        train: cli.load_split(false)?,
        test: cli.load_split(true)?,
    };
    let baseline = run_baseline(&plan, &data, plan.seeds[0])?;
    println!(
        "untrained, seed {}: {:.2}% on {} test images, t_construct = {:.4} s",
        plan.seeds[0],
        baseline.report.accuracy(),
        baseline.report.total(),
        baseline.t_construct
    );
    let start = Instant::now();
    let records = run_comparison_with(&plan, &data, |r| {
        let last = r.epochs.last();
        println!(
            "size {:>6} seed {:>3} {:<10} final test {:>6.2}%  train {:.2} s",
            r.subset_size,
            r.seed,
            r.kind.to_string(),
            last.map_or(0.0, |e| e.test.accuracy()),
            r.total_seconds
        );
    })?;
    let files = emit_reports(&records, &plan.out_dir)?;
    println!(
        "{} runs in {:.1} s, {} files written to {}",
        records.len(),
        start.elapsed().as_secs_f64(),
        files.len(),
        plan.out_dir.display()
    );
    Ok(())
}

fn cross(cli: &Cli, samples: usize) -> Result<bool> {
    let data = cli.working_set(true)?;
    let protos = cli.prototypes()?;
    let check = cross_check(&protos, cli.protos.neighbors, &data, cli.data.binarize_threshold, samples)?;
    println!(
        "checked {}, mismatches {}, oracle rejections {}",
        check.checked,
        check.mismatches.len(),
        check.rejected
    );
    for i in check.mismatches.iter().take(20) {
        println!("mismatch at record {i}");
    }
    Ok(check.mismatches.is_empty())
}

fn run(cli: &Cli) -> Result<bool> {
    match &cli.command {
        Command::Build {
            out,
            randomize,
            sigmoid,
            dump_table,
        } => build(cli, out.as_deref(), *randomize, *sigmoid, dump_table.as_deref())?,
        Command::Eval { model, csv } => eval(cli, model.as_deref(), csv.as_deref())?,
        Command::Train {
            model,
            init,
            train,
            log,
            save,
        } => train_cmd(cli, model.as_deref(), *init, train, log.as_deref(), save.as_deref())?,
        Command::Compare {
            sizes,
            seeds,
            test_subset,
            out_dir,
            paper_scale,
            train,
        } => compare(cli, sizes, seeds, *test_subset, out_dir, *paper_scale, train)?,
        Command::CrossCheck { samples } => return cross(cli, *samples),
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
