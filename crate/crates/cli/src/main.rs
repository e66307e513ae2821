use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};
use glint_cli::experiment::{
    make_reference, run_experiment, CacheAblation, ExperimentConfig, GuideResolution, MetricReport,
    Mode, ReferenceSource,
};
use glint_tracer::load_scene;
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "glint", version, about = "Path tracing experiment harness")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Render a scene over several seeds and score against a reference.
    Render(RenderArgs),
    /// Run one experiment per guide resolution (16x8, 32x16, 64x32).
    SweepRes(SweepArgs),
    /// Run one experiment per cache ablation (off, li-only, full).
    SweepCache(SweepArgs),
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    scene: PathBuf,
    /// Samples per pixel for each run.
    #[arg(long)]
    spp: u32,
    /// pt, df-n, or df-l.
    #[arg(long, value_parser = Mode::parse)]
    mode: Mode,
    /// Guide bin resolution M1xM2; one of 16x8, 32x16, 64x32.
    #[arg(long, default_value = "32x16", value_parser = GuideResolution::parse)]
    res: GuideResolution,
    /// off, li-only, or full.
    #[arg(long, default_value = "full", value_parser = CacheAblation::parse)]
    cache: CacheAblation,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Independent runs; seeds are seed, seed+1, ...
    #[arg(long, default_value_t = 1)]
    runs: u32,
    #[arg(long)]
    out: PathBuf,
    /// Existing reference PFM to score against.
    #[arg(long, conflicts_with = "make_reference")]
    reference: Option<PathBuf>,
    /// Render a fresh path-traced reference at this sample count first.
    #[arg(long)]
    make_reference: Option<u32>,
    /// Film width in pixels.
    #[arg(long, default_value_t = 64)]
    width: usize,
    /// Film height in pixels.
    #[arg(long, default_value_t = 48)]
    height: usize,
    /// Keep training records for every Nth pixel.
    #[arg(long, default_value_t = 1)]
    record_stride: u32,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    base: RenderArgs,
}

impl RenderArgs {
    fn reference_source(&self) -> Result<ReferenceSource> {
        match (&self.reference, self.make_reference) {
            (Some(p), None) => Ok(ReferenceSource::Path(p.clone())),
            (None, Some(n)) => Ok(ReferenceSource::Make(n)),
            (None, None) => bail!("pass either --reference or --make-reference"),
            (Some(_), Some(_)) => unreachable!("clap rejects the combination"),
        }
    }

    fn config(&self) -> Result<ExperimentConfig> {
        Ok(ExperimentConfig {
            scene: self.scene.clone(),
            spp: self.spp,
            mode: self.mode,
            resolution: self.res,
            cache: self.cache,
            seed: self.seed,
            runs: self.runs,
            out: self.out.clone(),
            reference: self.reference_source()?,
            width: self.width,
            height: self.height,
            record_stride: self.record_stride,
        })
    }

    /// For sweeps: resolve --make-reference into a single on-disk reference
    /// shared by every variant instead of re-rendering it per variant.
    fn shared_reference(&self) -> Result<ReferenceSource> {
        match self.reference_source()? {
            ReferenceSource::Path(p) => Ok(ReferenceSource::Path(p)),
            ReferenceSource::Make(n) => {
                if (n as u64) < 64 * self.spp as u64 {
                    bail!(
                        "reference at {n} spp is too noisy for a {} spp experiment; need at least 64x",
                        self.spp
                    );
                }
                let scene = load_scene(&self.scene)?;
                std::fs::create_dir_all(&self.out)?;
                let path = self.out.join("reference.pfm");
                let (_, hash) = make_reference(&scene, self.width, self.height, n, &path)?;
                println!("reference {} sha256 {hash}", path.display());
                Ok(ReferenceSource::Path(path))
            }
        }
    }
}

fn print_report(label: &str, report: &MetricReport) {
    for (run, v) in report.per_run.iter().enumerate() {
        println!("{label} run {run}: relmse {v:.6e}");
    }
    println!(
        "{label}: mean relmse {:.6e} over {} runs at {} spp",
        report.mean,
        report.per_run.len(),
        report.spp
    );
}

fn main() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::Render(args) => {
            let report = run_experiment(&args.config()?)?;
            print_report(&format!("{}", args.mode), &report);
        }
        Cmd::SweepRes(sweep) => {
            let reference = sweep.base.shared_reference()?;
            if sweep.base.mode == Mode::Pt {
                bail!("a resolution sweep needs a guided mode (df-n or df-l)");
            }
            for res in GuideResolution::SWEEP {
                let mut cfg = sweep.base.config()?;
                cfg.resolution = res;
                cfg.reference = reference.clone();
                cfg.out = sweep.base.out.join(format!("res-{res}"));
                let report = run_experiment(&cfg)?;
                print_report(&format!("res {res}"), &report);
            }
        }
        Cmd::SweepCache(sweep) => {
            let reference = sweep.base.shared_reference()?;
            if sweep.base.mode == Mode::Pt {
                bail!("a cache sweep needs a guided mode (df-n or df-l)");
            }
            for cache in [CacheAblation::Off, CacheAblation::LiOnly, CacheAblation::Full] {
                let mut cfg = sweep.base.config()?;
                cfg.cache = cache;
                cfg.reference = reference.clone();
                cfg.out = sweep.base.out.join(format!("cache-{cache}"));
                let report = run_experiment(&cfg)?;
                print_report(&format!("cache {cache}"), &report);
            }
        }
    }
    Ok(())
}
