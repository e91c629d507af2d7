//! Scores generated blind spots and the Detection-2D baseline against the
//! full ray-cast blind spots inside the visibility mask.

use std::path::Path;

use blindspot::eval::{default_threshold_grid, detection2d_baseline, evaluate_frames, threshold_sweep};
use blindspot::pipeline::{generate_frame, PipelineParams};
use blindspot::raster::Raster;
use blindspot::synthworld::SynthScene;

fn main() -> blindspot::Result<()> {
    let scene = SynthScene::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("scenes/parked_van.toml"))?;
    let seq = scene.render_sequence()?;
    let params = PipelineParams::default();
    let frames = [0, 2, 4];

    let (mut omegas, mut truths, mut vis, mut boxes) = (vec![], vec![], vec![], vec![]);
    for &t in &frames {
        let r = generate_frame(&seq, t, &params)?;
        truths.push(scene.oracle_blind_spots(t, params.window())?.true_blind);
        boxes.push(detection2d_baseline(&seq.frames[t].semantic, &seq.labels)?);
        omegas.push(r.omega);
        vis.push(r.visibility);
    }

    println!("T-frame labels vs full blind spots:");
    print!("{}", evaluate_frames(&omegas, &truths, &vis, false)?.to_key_value(None));
    println!("Detection-2D baseline:");
    print!("{}", evaluate_frames(&boxes, &truths, &vis, false)?.to_key_value(None));

    // A soft prediction: the labels blurred into probabilities.
    let probs: Vec<Raster<f64>> = omegas.iter().map(|m| m.map(|&on| if on { 0.8 } else { 0.15 })).collect();
    let (t, report) = threshold_sweep(&probs, &truths, &vis, &default_threshold_grid())?;
    println!("sweep:");
    print!("{}", report.to_key_value(Some(t)));
    Ok(())
}
