//! Renders a synthetic scene, generates T-frame blind spots and compares
//! them with the ray-cast oracle. Pass a directory to also write the masks
//! and an overlay.

use std::path::{Path, PathBuf};

use blindspot::io;
use blindspot::overlay::render_overlay;
use blindspot::pipeline::{generate_frame, processable_frames, PipelineParams};
use blindspot::synthworld::SynthScene;

fn main() -> blindspot::Result<()> {
    let scene_path = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenes/barriers_staggered.toml");
    let out: Option<PathBuf> = std::env::args().nth(1).map(PathBuf::from);

    let scene = SynthScene::load(&scene_path)?;
    let seq = scene.render_sequence()?;
    let params = PipelineParams::default();
    println!("{} frames, window {} frames", seq.len(), params.window());

    for t in processable_frames(&seq, &params) {
        let result = generate_frame(&seq, t, &params)?;
        let oracle = scene.oracle_blind_spots(t, params.window())?;
        let iou = result.omega.iou(&oracle.tframe_blind)?.unwrap_or(0.0);
        println!(
            "frame {t}: |ω| = {}, oracle = {}, true blind = {}, IoU = {iou:.4}",
            result.omega.count_ones(),
            oracle.tframe_blind.count_ones(),
            oracle.true_blind.count_ones()
        );
        if let Some(dir) = &out {
            io::save_outputs(&result, dir, t, true)?;
            let rgb = seq.frames[t].rgb.as_ref().expect("rendered frames carry color");
            let overlay = render_overlay(rgb, &result.omega, &result.visibility)?;
            io::save_rgb(&overlay, &dir.join(format!("overlay_{}", io::frame_file(t))))?;
        }
    }
    Ok(())
}
