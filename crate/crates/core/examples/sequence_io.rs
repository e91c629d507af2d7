//! Writes a rendered sequence to disk, loads it back, runs the pipeline on
//! the loaded copy and saves an overlay.

use std::path::{Path, PathBuf};

use blindspot::io;
use blindspot::overlay::render_overlay;
use blindspot::pipeline::{generate_frame, PipelineParams};
use blindspot::synthworld::SynthScene;

fn main() -> blindspot::Result<()> {
    let scene = SynthScene::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("scenes/barrier_left_turn.toml"))?;
    let seq = scene.render_sequence()?;

    let tmp = tempfile::tempdir().map_err(|e| blindspot::Error::io(Path::new("tempdir"), e))?;
    let dir: PathBuf = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| tmp.path().join("seq"));
    io::save_sequence(&seq, &dir)?;
    let loaded = io::load_sequence(&dir)?;
    println!("saved and reloaded {} frames under {}", loaded.len(), dir.display());
    println!("poses identical: {}", seq.frames.iter().zip(&loaded.frames).all(|(a, b)| a.pose == b.pose));

    let params = PipelineParams::default();
    let exact = generate_frame(&seq, 0, &params)?;
    let reloaded = generate_frame(&loaded, 0, &params)?;
    println!(
        "ω from exact depth {} px, from 1/256 m quantized depth {} px, IoU {:.4}",
        exact.omega.count_ones(),
        reloaded.omega.count_ones(),
        exact.omega.iou(&reloaded.omega)?.unwrap_or(1.0)
    );

    let rgb = loaded.frames[0].rgb.as_ref().expect("sequence was saved with color");
    let out = dir.join("overlay_000000.png");
    io::save_rgb(&render_overlay(rgb, &reloaded.omega, &reloaded.visibility)?, &out)?;
    println!("overlay written to {}", out.display());
    Ok(())
}
