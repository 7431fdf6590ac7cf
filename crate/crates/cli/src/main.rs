use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use rooffit_cli::commands;
use rooffit_cli::config::RunConfig;
use rooffit_cli::run::{run, RunOptions, STAGES};

#[derive(Parser)]
#[command(name = "rooffit", version, about = "Roof and building reconstruction from point clouds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Flat key = value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master random seed, overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads, 0 for one per core; overrides the config.
    #[arg(long)]
    jobs: Option<usize>,
}

impl Common {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::read(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(j) = self.jobs {
            cfg.jobs = j;
        }
        Ok(cfg)
    }

    /// Loads the config and installs a global pool of `jobs` workers.
    fn setup(&self) -> Result<RunConfig> {
        let cfg = self.load()?;
        rayon::ThreadPoolBuilder::new().num_threads(cfg.jobs).build_global()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Every stage from the configured inputs, with artifacts and a manifest.
    Run {
        #[command(flatten)]
        common: Common,
        /// Skip stages whose inputs, parameters and outputs are unchanged.
        #[arg(long)]
        resume: bool,
        /// Output directory, overrides the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Last stage to run.
        #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(STAGES))]
        stop_after: Option<String>,
    },
    /// Terrain model, smoothing and hole filling.
    Preprocess {
        #[command(flatten)]
        common: Common,
        #[arg(long = "in")]
        input: PathBuf,
        /// Directory for preprocessed.txt and dtm.asc.
        #[arg(long)]
        out: PathBuf,
    },
    /// Masked, above-ground points grouped into building clusters.
    Cluster {
        #[command(flatten)]
        common: Common,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        mask: PathBuf,
        #[arg(long)]
        dtm: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Geometric shape labels for a cluster file or directory.
    Segment {
        #[command(flatten)]
        common: Common,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cluster clouds in point order for an external labeler.
    SegmentExport {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Attach an external label file to a cluster.
    SegmentImport {
        #[command(flatten)]
        common: Common,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Roof primitives of a labeled cluster, printed and saved as JSON.
    Fit {
        #[command(flatten)]
        common: Common,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Building model and mesh from a labeled cluster and its fits.
    Assemble {
        #[command(flatten)]
        common: Common,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        fits: PathBuf,
        #[arg(long)]
        dtm: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// 2D and 3D completeness, correctness and IoU of rendered rasters.
    Eval {
        #[arg(long)]
        pred_mask: PathBuf,
        #[arg(long)]
        pred_dsm: PathBuf,
        #[arg(long)]
        truth_mask: PathBuf,
        #[arg(long)]
        truth_dsm: PathBuf,
        #[arg(long, default_value_t = rooffit::eval::DEFAULT_Z_TOLERANCE)]
        z_tolerance: f64,
        /// Also write the report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Labeled training clouds with bent curved roofs.
    Synth {
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory of flat source roofs; defaults to a generated village.
        #[arg(long, requires = "sloped")]
        flat: Option<PathBuf>,
        /// Directory of sloped source roofs.
        #[arg(long, requires = "flat")]
        sloped: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// A synthetic village with truth rasters and a ready config.
    SynthScene {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Run {
            common,
            resume,
            out,
            stop_after,
        } => {
            let mut cfg = common.load()?;
            if let Some(o) = out {
                cfg.out = Some(o);
            }
            let (_, report) = run(&cfg, &RunOptions { resume, stop_after })?;
            if let Some(r) = report {
                print!("{}", r.format());
            }
            Ok(())
        }
        Command::Preprocess { common, input, out } => commands::preprocess(&common.setup()?, &input, &out),
        Command::Cluster {
            common,
            input,
            mask,
            dtm,
            out,
        } => commands::cluster(&common.setup()?, &input, &mask, &dtm, &out),
        Command::Segment { common, input, out } => commands::segment(&common.setup()?, &input, &out),
        Command::SegmentExport { input, out } => commands::segment_export(&input, &out),
        Command::SegmentImport {
            common,
            input,
            labels,
            out,
        } => commands::segment_import(&common.setup()?, &input, &labels, &out),
        Command::Fit { common, input, out } => commands::fit(&common.setup()?, &input, &out),
        Command::Assemble {
            common,
            input,
            fits,
            dtm,
            out,
        } => commands::assemble(&common.setup()?, &input, &fits, &dtm, &out),
        Command::Eval {
            pred_mask,
            pred_dsm,
            truth_mask,
            truth_dsm,
            z_tolerance,
            out,
        } => commands::eval(&pred_mask, &pred_dsm, &truth_mask, &truth_dsm, z_tolerance, out.as_deref()).map(|_| ()),
        Command::Synth {
            count,
            seed,
            flat,
            sloped,
            out,
        } => commands::synth(count, seed, flat.as_deref(), sloped.as_deref(), &out),
        Command::SynthScene { seed, out } => commands::synth_scene(seed, &out),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
