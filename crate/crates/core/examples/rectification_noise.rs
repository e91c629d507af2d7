//! Shows how the depth rule removes warp residue caused by pose noise.

use std::path::Path;

use blindspot::pipeline::{
    aggregate_window, generate_frame, raw_blind_spots, remove_small_components, traversable, PipelineParams,
};
use blindspot::synthworld::{perturb_translations, SynthScene};

fn main() -> blindspot::Result<()> {
    let scene = SynthScene::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("scenes/parked_van.toml"))?;
    let exact = scene.render_sequence()?;
    let params = PipelineParams::default();
    let reference = generate_frame(&exact, 0, &params)?.omega;
    println!("exact-input ω: {} px", reference.count_ones());

    for noise in [0.005, 0.01, 0.02, 0.05] {
        let noisy = perturb_translations(&exact, noise, 1);
        let rectified = generate_frame(&noisy, 0, &params)?.omega;

        let agg = aggregate_window(&noisy, 0, params.window())?;
        let road = traversable(&noisy.frames[0].semantic, &noisy.labels)?;
        let unrectified = remove_small_components(&raw_blind_spots(&agg.surface, &road)?, params.min_area);

        println!(
            "{:>4.1} cm noise: IoU rectified {:.3}, unrectified {:.3}",
            noise * 100.0,
            rectified.iou(&reference)?.unwrap_or(0.0),
            unrectified.iou(&reference)?.unwrap_or(0.0)
        );
    }
    Ok(())
}
