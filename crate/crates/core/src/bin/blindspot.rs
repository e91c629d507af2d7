use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use blindspot::align::{fit_alignment_with, gate_video, load_landmarks, DepthDomain, ShiftMode, DEFAULT_GATE_THRESHOLD};
use blindspot::eval::{default_threshold_grid, detection2d_baseline, evaluate_frames, threshold_sweep, binarize};
use blindspot::io::{self, frame_file};
use blindspot::losses::self_check;
use blindspot::overlay::render_overlay;
use blindspot::pipeline::{check_params, generate_frame, processable_frames, PipelineParams};
use blindspot::raster::BinaryMask;
use blindspot::synthworld::SynthScene;
use blindspot::{Error, Result};

#[derive(Parser)]
#[command(name = "blindspot", version, about = "Road blind-spot label generation and checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate blind-spot and visibility masks for every processable frame.
    Generate(GenerateArgs),
    /// Render a scene file into a sequence directory.
    SynthGen(SynthGenArgs),
    /// Score predicted masks or probability maps against ground truth.
    Evaluate(EvaluateArgs),
    /// Draw blind spots and the visibility mask over an image.
    Overlay(OverlayArgs),
    /// Check the loss implementations against hand cases and finite differences.
    LossesCheck(LossesCheckArgs),
    /// Fit monocular depth to landmark depths and apply the correlation gate.
    AlignFit(AlignFitArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Sequence directory.
    sequence: PathBuf,
    /// Output directory.
    output: PathBuf,
    #[arg(long, default_value_t = 5.0)]
    t_seconds: f64,
    /// Expected frame rate; defaults to the sequence's own.
    #[arg(long)]
    fps: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    l_d: f64,
    #[arg(long, default_value_t = 100)]
    min_area: usize,
    #[arg(long, default_value_t = 16.0)]
    vis_distance: f64,
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    jobs: Option<usize>,
    /// Also write the aggregated surface and aggregated depth.
    #[arg(long)]
    debug_rasters: bool,
}

#[derive(Args)]
struct SynthGenArgs {
    /// Scene description (TOML).
    scene: PathBuf,
    /// Output sequence directory.
    output: PathBuf,
    /// Also write ray-cast ground truth under `oracle/`.
    #[arg(long)]
    oracle: bool,
    /// Look-ahead used for the oracle, in seconds.
    #[arg(long, default_value_t = 5.0)]
    t_seconds: f64,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Directory of ground-truth masks (`NNNNNN.png`).
    #[arg(long)]
    gt: PathBuf,
    /// Directory of predicted masks or probability maps.
    #[arg(long, conflicts_with = "detection2d", required_unless_present = "detection2d")]
    pred: Option<PathBuf>,
    /// Score the Detection-2D baseline computed from this sequence directory.
    #[arg(long)]
    detection2d: Option<PathBuf>,
    /// Directory of visibility masks; all pixels count when omitted.
    #[arg(long)]
    vis: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5, conflicts_with = "sweep")]
    threshold: f64,
    /// Pick the threshold in 0.1..0.9 with the best IoU.
    #[arg(long)]
    sweep: bool,
    /// Ground truth is sparse; precision is reported as n/a.
    #[arg(long)]
    sparse_gt: bool,
    /// Also write the report as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct OverlayArgs {
    /// Base image (RGB or grayscale).
    base: PathBuf,
    /// Blind-spot mask.
    omega: PathBuf,
    /// Visibility mask.
    visibility: PathBuf,
    /// Output PNG.
    output: PathBuf,
}

#[derive(Args)]
struct LossesCheckArgs {
    #[arg(long, default_value_t = 20)]
    instances: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct AlignFitArgs {
    /// Landmark file: `frame u v slam_depth mono_value` per line.
    landmarks: PathBuf,
    /// `inverse-depth` or `depth`.
    #[arg(long, default_value = "inverse-depth")]
    domain: DepthDomain,
    /// Fit scale only, with the shift pinned to zero.
    #[arg(long)]
    pin_shift: bool,
    #[arg(long, default_value_t = DEFAULT_GATE_THRESHOLD)]
    threshold: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::SynthGen(a) => synth_gen(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Overlay(a) => overlay(a),
        Command::LossesCheck(a) => losses_check(a),
        Command::AlignFit(a) => align_fit(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn generate(a: GenerateArgs) -> Result<ExitCode> {
    let seq = io::load_sequence(&a.sequence)?;
    let params = PipelineParams {
        t_seconds: a.t_seconds,
        fps: a.fps.unwrap_or(seq.fps),
        l_d: a.l_d,
        min_area: a.min_area,
        vis_distance: a.vis_distance,
    };
    check_params(&seq, &params)?;
    let frames = processable_frames(&seq, &params);
    if frames.is_empty() {
        return Err(Error::WindowUnderflow {
            frame: 0,
            window: params.window(),
            len: seq.len(),
            last_processable: None,
        });
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
    let count = frames.len();
    pool.install(|| {
        frames.into_par_iter().try_for_each(|t| {
            let result = generate_frame(&seq, t, &params)?;
            io::save_outputs(&result, &a.output, t, a.debug_rasters).map(|_| ())
        })
    })?;
    println!("frames={count}\nwindow={}\noutput={}", params.window(), a.output.display());
    Ok(ExitCode::SUCCESS)
}

fn synth_gen(a: SynthGenArgs) -> Result<ExitCode> {
    let scene = SynthScene::load(&a.scene)?;
    let seq = scene.render_sequence()?;
    io::save_sequence(&seq, &a.output)?;
    println!("frames={}", seq.len());
    if a.oracle {
        let window = (a.t_seconds * scene.fps).round() as usize;
        let last = scene.len().checked_sub(window + 1).ok_or(Error::WindowUnderflow {
            frame: 0,
            window,
            len: scene.len(),
            last_processable: None,
        })?;
        let dirs = ["true_blind", "tframe_blind", "road_visible"].map(|d| a.output.join("oracle").join(d));
        for d in &dirs {
            fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
        }
        (0..=last).into_par_iter().try_for_each(|t| {
            let o = scene.oracle_blind_spots(t, window)?;
            for (dir, mask) in dirs.iter().zip([&o.true_blind, &o.tframe_blind, &o.road_visible]) {
                io::save_mask(mask, &dir.join(frame_file(t)))?;
            }
            Ok::<_, Error>(())
        })?;
        println!("oracle_frames={}\noracle_window={window}", last + 1);
    }
    Ok(ExitCode::SUCCESS)
}

fn evaluate(a: EvaluateArgs) -> Result<ExitCode> {
    let names = io::list_frames(&a.gt)?;
    let gts = names.iter().map(|n| io::load_mask(&a.gt.join(n))).collect::<Result<Vec<_>>>()?;
    let vis = match &a.vis {
        Some(dir) => names.iter().map(|n| io::load_mask(&dir.join(n))).collect::<Result<Vec<_>>>()?,
        None => gts.iter().map(|g| BinaryMask::full(g.width(), g.height())).collect(),
    };

    let (threshold, report) = if let Some(seq_dir) = &a.detection2d {
        let seq = io::load_sequence(seq_dir)?;
        let preds = names
            .iter()
            .map(|n| {
                let idx: usize = n[..6].parse().expect("digits");
                let frame = seq.frames.get(idx).ok_or_else(|| Error::MissingFile(seq_dir.join("semantic").join(n)))?;
                detection2d_baseline(&frame.semantic, &seq.labels)
            })
            .collect::<Result<Vec<_>>>()?;
        (None, evaluate_frames(&preds, &gts, &vis, a.sparse_gt)?)
    } else {
        let dir = a.pred.as_ref().expect("clap requires --pred or --detection2d");
        let probs = names.iter().map(|n| io::load_probability(&dir.join(n))).collect::<Result<Vec<_>>>()?;
        if a.sweep {
            let (t, mut r) = threshold_sweep(&probs, &gts, &vis, &default_threshold_grid())?;
            r.sparse_gt = a.sparse_gt;
            (Some(t), r)
        } else {
            let preds: Vec<_> = probs.iter().map(|p| binarize(p, a.threshold)).collect();
            (Some(a.threshold), evaluate_frames(&preds, &gts, &vis, a.sparse_gt)?)
        }
    };
    print!("{}", report.to_key_value(threshold));
    if let Some(path) = &a.json {
        fs::write(path, report.to_json(threshold) + "\n").map_err(|e| Error::io(path, e))?;
    }
    Ok(ExitCode::SUCCESS)
}

fn overlay(a: OverlayArgs) -> Result<ExitCode> {
    let base = io::load_rgb(&a.base)?;
    let omega = io::load_mask(&a.omega)?;
    let vis = io::load_mask(&a.visibility)?;
    let out = render_overlay(&base, &omega, &vis)?;
    io::save_rgb(&out, &a.output)?;
    Ok(ExitCode::SUCCESS)
}

fn losses_check(a: LossesCheckArgs) -> Result<ExitCode> {
    let r = self_check(a.instances, a.seed)?;
    println!("kd_hand_case={}", r.kd_hand_case);
    println!("bce_single_pixel={:.15}", r.bce_single_pixel);
    println!("kd_scale_invariant={}", r.kd_scale_invariant);
    println!("kd_max_rel_error={:.3e}", r.kd_max_rel_error);
    println!("bce_max_rel_error={:.3e}", r.bce_max_rel_error);
    println!("instances={}", r.instances);
    println!("status={}", if r.passed() { "pass" } else { "fail" });
    Ok(if r.passed() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn align_fit(a: AlignFitArgs) -> Result<ExitCode> {
    let samples = load_landmarks(&a.landmarks)?;
    let mode = if a.pin_shift { ShiftMode::Zero } else { ShiftMode::Free };
    let fit = fit_alignment_with(&samples, a.domain, mode)?;
    let decision = gate_video(&fit, a.threshold);
    println!("scale={}", fit.scale);
    println!("shift={}", fit.shift);
    println!("pearson_r={}", fit.pearson_r);
    println!("n={}", fit.n);
    println!("decision={}", if decision.is_accepted() { "accept" } else { "reject" });
    Ok(ExitCode::SUCCESS)
}
