use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use clinfonce::checkpoint::{load_checkpoint, save_checkpoint};
use clinfonce::cluster::{kmeans, save_assignment, ClusterAssignment, KMeansParams, Provenance};
use clinfonce::encoder::encode;
use clinfonce::info::{info_plane_csv, verify_bound_chain, DiscreteJointModel};
use clinfonce::pipeline::{
    build_clusters, default_sweep, linear_evaluate, probe_seed, run_info_plane_experiment, run_split, train_with_config,
    ClusterSource, TrainConfig,
};
use clinfonce::{Data, Error, Result};

#[derive(Parser, Debug)]
#[command(name = "clinfonce", version, about = "Cluster-conditioned contrastive pretraining toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Pretrain an encoder and write its checkpoint and run report
    Train(RunArgs),
    /// Linear-probe accuracy of a saved checkpoint
    Eval {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Train on a sweep of label-derived clusterings and write the info-plane CSV
    Infoplane(RunArgs),
    /// Check the objective's bound chain on random discrete models
    VerifyBounds {
        #[arg(long, default_value_t = 100)]
        models: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Batch size of the enumerated objective
        #[arg(long, default_value_t = 3)]
        n: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build a cluster assignment and write it as CSV plus JSON sidecar
    MakeClusters {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum)]
        source: Source,
        /// Number of top-entropy attributes
        #[arg(long)]
        k: Option<usize>,
        /// Hierarchy level, root = 1
        #[arg(long)]
        level: Option<usize>,
        /// Number of k-means clusters
        #[arg(long = "K")]
        kmeans_k: Option<usize>,
        /// Embed with this encoder before k-means instead of using raw features
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

#[derive(clap::Args, Debug)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Source {
    Labels,
    Attributes,
    Hierarchy,
    Kmeans,
    InstanceId,
}

impl RunArgs {
    fn config(&self) -> Result<TrainConfig> {
        let mut cfg = match &self.config {
            Some(path) => TrainConfig::load(path)?,
            None => TrainConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        Ok(cfg)
    }

    fn out_dir(&self) -> Result<&Path> {
        fs::create_dir_all(&self.out).map_err(|e| io_error(&self.out, e))?;
        Ok(&self.out)
    }
}

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write(path: &Path, text: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, text).map_err(|e| io_error(path, e))
}

fn check_threads_env() -> Result<()> {
    match std::env::var("CLNCE_THREADS") {
        Ok(v) if v.parse::<usize>().map_or(true, |t| t == 0) => {
            Err(Error::Config(format!("CLNCE_THREADS={v} is not a positive integer")))
        }
        _ => Ok(()),
    }
}

fn train(args: &RunArgs) -> Result<()> {
    let cfg = args.config()?;
    let d: Data = cfg.load_dataset()?;
    let out = args.out_dir()?;
    let mut run = train_with_config(&d, &cfg)?;
    save_checkpoint(out.join("checkpoint.bin"), &run.model, run.step_count, &run.hyper)?;
    run.report.checkpoint_path = Some("checkpoint.bin".into());
    write(&out.join("report.json"), run.report.to_json())?;
    write(&out.join("loss.csv"), run.report.loss_csv())?;
    if !run.report.info_plane_curve.is_empty() {
        write(&out.join("info_plane.csv"), info_plane_csv(&run.report.info_plane_curve))?;
    }
    println!("epochs: {}", run.report.loss_curve.len());
    println!("final loss: {}", run.report.loss_curve.last().copied().unwrap_or(f64::NAN));
    if let Some(acc) = run.report.final_linear_accuracy {
        println!("linear accuracy: {acc}");
    }
    Ok(())
}

fn eval(args: &RunArgs, checkpoint: &Path) -> Result<()> {
    let cfg = args.config()?;
    let d: Data = cfg.load_dataset()?;
    let (model, _) = load_checkpoint::<f64>(checkpoint)?;
    let (tr, ev) = run_split(d.num_samples(), &cfg)?;
    let acc = linear_evaluate(&model, &d.subset(&tr), &d.subset(&ev), &cfg.probe, probe_seed(cfg.seed))?;
    let out = args.out_dir()?;
    write(&out.join("eval.json"), serde_json::json!({ "accuracy": acc }).to_string())?;
    println!("linear accuracy: {acc}");
    Ok(())
}

fn infoplane(args: &RunArgs) -> Result<()> {
    let cfg = args.config()?;
    let d: Data = cfg.load_dataset()?;
    let sweep = if cfg.sweep.is_empty() {
        default_sweep(d.num_classes())
    } else {
        cfg.sweep.clone()
    };
    let out = args.out_dir()?;
    let points = run_info_plane_experiment(&d, &sweep, &cfg, Some(&out.join("info_plane.csv")))?;
    for p in &points {
        println!(
            "{}: I(Z;T)={:.6} H(Z|T)={:.6} accuracy={}",
            p.config_label,
            p.mi_zt,
            p.h_z_given_t,
            p.downstream_accuracy.map_or("-".into(), |a| a.to_string())
        );
    }
    Ok(())
}

/// Returns whether every model satisfied the chain.
fn verify_bounds(models: usize, seed: u64, n: usize, out: Option<&Path>) -> Result<bool> {
    if models == 0 {
        return Err(Error::Parameter("--models must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut csv = String::from("model,z,x,y,n,objective_at_fstar,kl,mi_zx,mi_zy,h_z,holds\n");
    let mut holding = 0;
    for i in 0..models {
        let (nz, nx, ny) = (rng.random_range(1..=3), rng.random_range(2..=4), rng.random_range(2..=4));
        let m = DiscreteJointModel::<f64>::random(nz, nx, ny, rng.next_u64())?;
        let r = verify_bound_chain(&m, n)?;
        holding += usize::from(r.all_inequalities_hold);
        println!(
            "model {i}: |Z|={nz} |X|={nx} |Y|={ny} n={n} objective={:.9} kl={:.9} mi_zx={:.9} mi_zy={:.9} h_z={:.9} {}",
            r.objective_at_fstar,
            r.kl,
            r.mi_zx,
            r.mi_zy,
            r.h_z,
            if r.all_inequalities_hold { "holds" } else { "VIOLATED" }
        );
        csv.push_str(&format!(
            "{i},{nz},{nx},{ny},{n},{},{},{},{},{},{}\n",
            r.objective_at_fstar, r.kl, r.mi_zx, r.mi_zy, r.h_z, r.all_inequalities_hold
        ));
    }
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
        write(&dir.join("bounds.csv"), csv)?;
    }
    println!("{holding} of {models} models satisfy the chain");
    Ok(holding == models)
}

fn make_clusters(
    args: &RunArgs,
    source: Source,
    k: Option<usize>,
    level: Option<usize>,
    kmeans_k: Option<usize>,
    checkpoint: Option<&Path>,
) -> Result<()> {
    let need = |v: Option<usize>, flag: &str| {
        v.ok_or_else(|| Error::Parameter(format!("--source needs {flag}")))
    };
    let cluster_source = match source {
        Source::Labels => ClusterSource::Labels,
        Source::InstanceId => ClusterSource::InstanceId,
        Source::Attributes => ClusterSource::Attributes { k: need(k, "--k")? },
        Source::Hierarchy => ClusterSource::Hierarchy {
            level: need(level, "--level")?,
        },
        Source::Kmeans => ClusterSource::Kmeans {
            k: need(kmeans_k, "--K")?,
        },
    };
    match cluster_source {
        ClusterSource::Attributes { k: 0 } => return Err(Error::Parameter("--k must be >= 1".into())),
        ClusterSource::Hierarchy { level: 0 } => {
            return Err(Error::Parameter("--level must be >= 1 (the root)".into()))
        }
        ClusterSource::Kmeans { k: 0 } => return Err(Error::Parameter("--K must be >= 1".into())),
        _ => {}
    }
    let cfg = args.config()?;
    let d: Data = cfg.load_dataset()?;
    let clusters = match cluster_source {
        ClusterSource::Kmeans { k } => {
            let points = match checkpoint {
                Some(path) => encode(&load_checkpoint::<f64>(path)?.0, d.features())?,
                None => d.features().clone(),
            };
            let result = kmeans(points.view(), &KMeansParams::new(k, cfg.seed))?;
            ClusterAssignment::from_raw_sorted(result.assignment.assignment(), Provenance::Kmeans { k, epoch: 0 })?
        }
        ref other => build_clusters(&d, other)?,
    };
    let out = args.out_dir()?;
    save_assignment(&clusters, d.ids(), &out.join("clusters.csv"))?;
    println!("{}: {} clusters over {} samples", clusters.provenance(), clusters.num_clusters(), clusters.num_samples());
    Ok(())
}

fn run(cli: &Cli) -> Result<bool> {
    check_threads_env()?;
    match &cli.command {
        Command::Train(args) => train(args).map(|_| true),
        Command::Eval { run, checkpoint } => eval(run, checkpoint).map(|_| true),
        Command::Infoplane(args) => infoplane(args).map(|_| true),
        Command::VerifyBounds { models, seed, n, out } => verify_bounds(*models, *seed, *n, out.as_deref()),
        Command::MakeClusters {
            run,
            source,
            k,
            level,
            kmeans_k,
            checkpoint,
        } => make_clusters(run, *source, *k, *level, *kmeans_k, checkpoint.as_deref()).map(|_| true),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
