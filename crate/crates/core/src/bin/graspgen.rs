use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use graspgen::pipeline::{ablation_csv, exit_code, kappa_ablation, repr_ablation, PipelineConfig, Run, SampleOptions};
use graspgen::Result;

/// Diffusion grasp generation with an on-generator trained discriminator.
///
/// Outputs go to `<out>/<config hash>/`, where `<out>` is $GG_OUT_DIR or the
/// config's `[output] dir`. Exit codes: 0 ok, 2 config error, 3 missing
/// upstream artifact, 4 numeric failure, 1 other errors.
#[derive(Parser)]
#[command(name = "graspgen", version)]
struct Cli {
    /// Config file; built-in defaults when omitted.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,

    /// Overrides every stage seed (data, generator, on-generator,
    /// discriminator, eval). Object shapes keep the suite seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Print the effective config.
    Config,
    /// Build the object suite, offline and held-out labeled grasps, and clouds.
    GenData,
    /// Compute kappa and train the generator.
    TrainGen,
    /// Sample and label the on-generator dataset.
    BuildOngen,
    /// Train the discriminator head on the frozen encoder.
    TrainDisc,
    /// Sample, score and filter grasps for each object's eval cloud.
    Sample {
        #[arg(long, default_value_t = 100)]
        batch: usize,
        #[arg(long, default_value_t = 0.0)]
        threshold: f64,
        #[arg(long = "top-k", default_value_t = 100)]
        top_k: usize,
        /// Only this object id.
        #[arg(long)]
        object: Option<String>,
    },
    /// Precision-coverage curves and pose errors on held-out clouds.
    Eval,
    /// EMD between on-generator and offline negatives.
    Emd,
    /// Threshold x batch-size tuning sweep.
    Sweep,
    /// All stages in order.
    Run,
    /// Train generators at multiples of the computed kappa.
    AblateKappa {
        #[arg(long, value_delimiter = ',', default_value = "0.5,1,2,8")]
        factors: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
        seeds: Vec<u64>,
    },
    /// Train one generator per rotation representation.
    AblateRepr {
        #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
        seeds: Vec<u64>,
    },
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.data.seed = s;
        cfg.generator.seed = s;
        cfg.on_generator.seed = s;
        cfg.discriminator.seed = s;
        cfg.eval.seed = s;
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    if let Cmd::Config = cli.cmd {
        print!("{}", cfg.to_text());
        return Ok(());
    }
    let run = Run::open(cfg)?;
    match &cli.cmd {
        Cmd::Config => unreachable!(),
        Cmd::GenData => {
            let m = run.gen_data()?;
            for s in &m.offline {
                println!("{}\t{} grasps\t{} positive", s.object_id, s.len(), s.positive_count());
            }
        }
        Cmd::TrainGen => {
            let g = run.train_gen()?;
            println!("kappa\t{}", g.kappa());
        }
        Cmd::BuildOngen => {
            for s in run.build_ongen()? {
                println!("{}\t{} grasps\t{} positive", s.object_id, s.len(), s.positive_count());
            }
        }
        Cmd::TrainDisc => {
            let d = run.train_disc()?;
            println!("provenance\t{}", d.provenance);
        }
        Cmd::Sample {
            batch,
            threshold,
            top_k,
            object,
        } => {
            let opts = SampleOptions {
                object: object.clone(),
                batch: *batch,
                threshold: *threshold,
                top_k: *top_k,
                seed: run.cfg.eval.seed,
            };
            for p in run.sample(&opts)? {
                println!("{}", p.display());
            }
        }
        Cmd::Eval => {
            println!("object_id\tcoverage\traw_precision\tfiltered_precision\tretained\tpc_auc");
            for e in run.eval()? {
                let fp = e.filtered_precision.map_or_else(|| "null".into(), |p| format!("{p:.3}"));
                println!(
                    "{}\t{:.3}\t{:.3}\t{fp}\t{}\t{:.3}",
                    e.object_id, e.coverage, e.raw_precision, e.retained, e.curve.auc
                );
            }
        }
        Cmd::Emd => {
            let r = run.emd()?;
            println!("on-generator vs offline negatives\t{:.5}", r.on_gen_vs_offline.mean);
            println!("offline split\t{:.5}", r.offline_split.mean);
        }
        Cmd::Sweep => println!("{}", run.sweep()?.display()),
        Cmd::Run => run.run_all()?,
        Cmd::AblateKappa { factors, seeds } => {
            let m = run.load_materials()?;
            let csv = ablation_csv("kappa_factor", &kappa_ablation(&run.cfg, &m, factors, seeds)?);
            graspgen::io::write_atomic(&run.path("ablation/kappa.csv"), csv.as_bytes())?;
            print!("{csv}");
        }
        Cmd::AblateRepr { seeds } => {
            let m = run.load_materials()?;
            let csv = ablation_csv("repr", &repr_ablation(&run.cfg, &m, seeds)?);
            graspgen::io::write_atomic(&run.path("ablation/repr.csv"), csv.as_bytes())?;
            print!("{csv}");
        }
    }
    eprintln!("run directory: {}", run.dir.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
