//! Multi-run experiment execution and artifact writing.

use crate::metrics::{relmse, EPS_M};
use anyhow::{bail, Context, Result};
use glint_core::guiding::{CacheMode, GuidingConfig};
use glint_core::pdf::InterpMode;
use glint_tracer::film::{read_pfm, write_pfm, write_png};
use glint_tracer::{load_scene, render, RenderJob, RenderMode, Scene};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::fmt;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Seed for reference renders, fixed so a reference is a function of the
/// scene and sample count alone.
pub const REFERENCE_SEED: u64 = 0x5eed_cafe;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Plain BSDF-sampled path tracing.
    Pt,
    /// Guided, nearest-bin interpolation of the discretized densities.
    DfN,
    /// Guided, linear interpolation.
    DfL,
}

impl Mode {
    pub fn parse(s: &str) -> Result<Mode> {
        Ok(match s {
            "pt" => Mode::Pt,
            "df-n" => Mode::DfN,
            "df-l" => Mode::DfL,
            other => bail!("unknown mode {other:?} (expected pt, df-n, or df-l)"),
        })
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Pt => "pt",
            Mode::DfN => "df-n",
            Mode::DfL => "df-l",
        })
    }
}

/// Directional discretization, restricted to the supported sweep points.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GuideResolution {
    pub m1: usize,
    pub m2: usize,
}

impl GuideResolution {
    pub const SWEEP: [GuideResolution; 3] = [
        GuideResolution { m1: 16, m2: 8 },
        GuideResolution { m1: 32, m2: 16 },
        GuideResolution { m1: 64, m2: 32 },
    ];

    pub fn parse(s: &str) -> Result<GuideResolution> {
        let (a, b) = s
            .split_once('x')
            .with_context(|| format!("resolution {s:?} is not of the form M1xM2"))?;
        let res = GuideResolution {
            m1: a.parse().with_context(|| format!("bad resolution {s:?}"))?,
            m2: b.parse().with_context(|| format!("bad resolution {s:?}"))?,
        };
        if !Self::SWEEP.contains(&res) {
            bail!("resolution {s} unsupported; choose one of 16x8, 32x16, 64x32");
        }
        Ok(res)
    }
}

impl fmt::Display for GuideResolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.m1, self.m2)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CacheAblation {
    Off,
    LiOnly,
    Full,
}

impl CacheAblation {
    pub fn parse(s: &str) -> Result<CacheAblation> {
        Ok(match s {
            "off" => CacheAblation::Off,
            "li-only" => CacheAblation::LiOnly,
            "full" => CacheAblation::Full,
            other => bail!("unknown cache mode {other:?} (expected off, li-only, or full)"),
        })
    }

    fn to_core(self) -> CacheMode {
        match self {
            CacheAblation::Off => CacheMode::Off,
            CacheAblation::LiOnly => CacheMode::LiOnly,
            CacheAblation::Full => CacheMode::Full,
        }
    }
}

impl fmt::Display for CacheAblation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CacheAblation::Off => "off",
            CacheAblation::LiOnly => "li-only",
            CacheAblation::Full => "full",
        })
    }
}

#[derive(Clone, Debug)]
pub enum ReferenceSource {
    /// Load an existing PFM reference.
    Path(PathBuf),
    /// Render one with plain path tracing at this sample count.
    Make(u32),
}

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub scene: PathBuf,
    pub spp: u32,
    pub mode: Mode,
    pub resolution: GuideResolution,
    pub cache: CacheAblation,
    pub seed: u64,
    pub runs: u32,
    pub out: PathBuf,
    pub reference: ReferenceSource,
    pub width: usize,
    pub height: usize,
    pub record_stride: u32,
}

impl ExperimentConfig {
    fn validate(&self) -> Result<()> {
        if self.spp < 1 {
            bail!("sample budget must be at least 1");
        }
        if self.runs < 1 {
            bail!("runs must be at least 1");
        }
        if let ReferenceSource::Make(n) = self.reference {
            if (n as u64) < 64 * self.spp as u64 {
                bail!(
                    "reference at {n} spp is too noisy for a {} spp experiment; need at least 64x",
                    self.spp
                );
            }
        }
        Ok(())
    }

    fn render_mode(&self, run_seed: u64) -> RenderMode {
        match self.mode {
            Mode::Pt => RenderMode::Pt,
            Mode::DfN | Mode::DfL => {
                let interp = if self.mode == Mode::DfN {
                    InterpMode::Nearest
                } else {
                    InterpMode::Linear
                };
                RenderMode::Guided(GuidingConfig {
                    m1: self.resolution.m1,
                    m2: self.resolution.m2,
                    mode: interp,
                    cache: self.cache.to_core(),
                    seed: run_seed,
                    ..GuidingConfig::default()
                })
            }
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergencePoint {
    pub spp: u32,
    pub per_run: Vec<f64>,
    pub mean: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct MetricReport {
    pub per_run: Vec<f64>,
    pub mean: f64,
    pub spp: u32,
    pub convergence: Vec<ConvergencePoint>,
}

#[derive(Serialize)]
struct MetricsFile<'a> {
    scene: &'a str,
    mode: String,
    resolution: String,
    cache: String,
    spp: u32,
    runs: u32,
    seed: u64,
    width: usize,
    height: usize,
    trim: f64,
    eps_m: f64,
    reference_sha256: &'a str,
    reference_spp: Option<u32>,
    per_run: &'a [f64],
    mean_relmse: f64,
    convergence: &'a [ConvergencePoint],
    killed_paths: &'a [u64],
    training_frames: &'a [usize],
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let out = h.finalize();
    let mut s = String::with_capacity(64);
    for b in out {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

/// Plain path traced reference at a fixed seed; returns the image and the
/// sha256 of its PFM encoding.
pub fn make_reference(
    scene: &Scene,
    width: usize,
    height: usize,
    spp: u32,
    path: &Path,
) -> Result<(Vec<[f32; 3]>, String)> {
    let job = RenderJob {
        width,
        height,
        spp,
        seed: REFERENCE_SEED,
        mode: RenderMode::Pt,
        record_stride: 1,
        checkpoints: Vec::new(),
    };
    let out = render(scene, &job);
    let image = out.film.to_rgb32();
    write_pfm(path, width, height, &image)?;
    let hash = sha256_hex(&std::fs::read(path)?);
    Ok((image, hash))
}

fn power_of_two_checkpoints(spp: u32) -> Vec<u32> {
    let mut cp: Vec<u32> = (0..32)
        .map(|k| 1u32 << k)
        .take_while(|&v| v <= spp)
        .collect();
    if *cp.last().unwrap() != spp {
        cp.push(spp);
    }
    cp
}

/// Runs `cfg.runs` seeds, writes every artifact under `cfg.out`, and returns
/// the metric report. Artifacts: per-run PFM and tonemapped PNG, per-run
/// training log and probe density dumps for guided modes, experiment-level
/// metrics.json and convergence.csv, and wall times in timings.txt (the one
/// file excluded from determinism guarantees).
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<MetricReport> {
    cfg.validate()?;
    let scene = load_scene(&cfg.scene)?;
    for w in &scene.warnings {
        eprintln!("warning: {w}");
    }
    std::fs::create_dir_all(&cfg.out)?;

    let (reference, ref_hash, ref_spp) = match &cfg.reference {
        ReferenceSource::Path(p) => {
            let (w, h, img) = read_pfm(p)?;
            if (w, h) != (cfg.width, cfg.height) {
                bail!(
                    "reference is {w}x{h} but the experiment renders {}x{}",
                    cfg.width,
                    cfg.height
                );
            }
            let hash = sha256_hex(&std::fs::read(p)?);
            (img, hash, None)
        }
        ReferenceSource::Make(n) => {
            let path = cfg.out.join("reference.pfm");
            let (img, hash) = make_reference(&scene, cfg.width, cfg.height, *n, &path)?;
            (img, hash, Some(*n))
        }
    };

    let checkpoints = power_of_two_checkpoints(cfg.spp);
    let mut per_run = Vec::new();
    let mut killed = Vec::new();
    let mut frames_per_run = Vec::new();
    let mut timings = Vec::new();
    let mut conv_per_run: Vec<Vec<f64>> = vec![Vec::new(); checkpoints.len()];

    for run in 0..cfg.runs {
        let run_seed = cfg.seed + run as u64;
        let run_dir = cfg.out.join(format!("run-{run}"));
        std::fs::create_dir_all(&run_dir)?;
        let job = RenderJob {
            width: cfg.width,
            height: cfg.height,
            spp: cfg.spp,
            seed: run_seed,
            mode: cfg.render_mode(run_seed),
            record_stride: cfg.record_stride,
            checkpoints: checkpoints.clone(),
        };
        let t = Instant::now();
        let out = render(&scene, &job);
        timings.push(t.elapsed().as_secs_f64());

        let image = out.film.to_rgb32();
        write_pfm(&run_dir.join("image.pfm"), cfg.width, cfg.height, &image)?;
        write_png(&run_dir.join("image.png"), cfg.width, cfg.height, &image)?;
        per_run.push(relmse(&image, &reference, 0.001)?);
        for (slot, (_, snap)) in conv_per_run.iter_mut().zip(&out.snapshots) {
            let snap32: Vec<[f32; 3]> = snap
                .iter()
                .map(|p| [p[0] as f32, p[1] as f32, p[2] as f32])
                .collect();
            slot.push(relmse(&snap32, &reference, 0.001)?);
        }
        killed.push(out.killed_paths);
        frames_per_run.push(out.frames.len());

        if let Some(g) = &out.guiding {
            let mut log = String::from("wave,records,dropped,batches,cache_loss,guide_loss\n");
            for f in &out.frames {
                log.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    f.wave, f.records, f.dropped, f.batches, f.cache_loss, f.guide_loss
                ));
            }
            std::fs::write(run_dir.join("training.csv"), log)?;
            let probe_dir = run_dir.join("probes");
            std::fs::create_dir_all(&probe_dir)?;
            for probe in &scene.probes {
                std::fs::write(
                    probe_dir.join(format!("{}.txt", probe.name)),
                    g.dump_joint(&probe.query),
                )?;
            }
        }
    }

    let convergence: Vec<ConvergencePoint> = checkpoints
        .iter()
        .zip(conv_per_run)
        .map(|(&spp, per_run)| {
            let mean = per_run.iter().sum::<f64>() / per_run.len() as f64;
            ConvergencePoint { spp, per_run, mean }
        })
        .collect();
    let mean = per_run.iter().sum::<f64>() / per_run.len() as f64;
    let report = MetricReport {
        per_run: per_run.clone(),
        mean,
        spp: cfg.spp,
        convergence,
    };

    let metrics = MetricsFile {
        scene: &scene.name,
        mode: cfg.mode.to_string(),
        resolution: cfg.resolution.to_string(),
        cache: cfg.cache.to_string(),
        spp: cfg.spp,
        runs: cfg.runs,
        seed: cfg.seed,
        width: cfg.width,
        height: cfg.height,
        trim: 0.001,
        eps_m: EPS_M,
        reference_sha256: &ref_hash,
        reference_spp: ref_spp,
        per_run: &per_run,
        mean_relmse: mean,
        convergence: &report.convergence,
        killed_paths: &killed,
        training_frames: &frames_per_run,
    };
    let mut file = std::fs::File::create(cfg.out.join("metrics.json"))?;
    serde_json::to_writer_pretty(&mut file, &metrics)?;
    file.write_all(b"\n")?;

    let mut csv = String::from("spp");
    for run in 0..cfg.runs {
        csv.push_str(&format!(",run{run}"));
    }
    csv.push_str(",mean\n");
    for point in &report.convergence {
        csv.push_str(&point.spp.to_string());
        for v in &point.per_run {
            csv.push_str(&format!(",{v}"));
        }
        csv.push_str(&format!(",{}\n", point.mean));
    }
    std::fs::write(cfg.out.join("convergence.csv"), csv)?;

    let mut timing_log = String::from("run,seconds\n");
    for (run, secs) in timings.iter().enumerate() {
        timing_log.push_str(&format!("{run},{secs:.3}\n"));
    }
    std::fs::write(cfg.out.join("timings.txt"), timing_log)?;

    Ok(report)
}
