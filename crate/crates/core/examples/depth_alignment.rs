//! Fits relative monocular depth to sparse metric landmarks and applies the
//! per-video correlation gate.

use blindspot::align::{apply_alignment, fit_alignment, gate_video, DepthDomain, LandmarkSample, DEFAULT_GATE_THRESHOLD};
use blindspot::raster::{DepthMap, Raster};
use nalgebra::Point2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> blindspot::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    // The network predicts inverse depth up to an unknown scale and shift.
    let (scale, shift) = (0.04, 0.005);

    for noise in [0.0, 1.0, 6.0] {
        let samples: Vec<LandmarkSample> = (0..150)
            .map(|i| {
                let d: f64 = rng.random_range(3.0..60.0);
                let mono = (1.0 / d - shift) / scale + noise * rng.random_range(-1.0..1.0);
                let px = Point2::new(rng.random_range(0.0..640.0), rng.random_range(240.0..480.0));
                LandmarkSample::new(i / 30, px, d, mono)
            })
            .collect::<Result<_, _>>()?;
        let fit = fit_alignment(&samples, DepthDomain::InverseDepth)?;
        println!(
            "noise {noise:.1}: scale {:.5}, shift {:.5}, r = {:.3} -> {:?}",
            fit.scale,
            fit.shift,
            fit.pearson_r,
            gate_video(&fit, DEFAULT_GATE_THRESHOLD)
        );
    }

    let fit = fit_alignment(
        &[10.0, 20.0, 40.0]
            .iter()
            .map(|&d| LandmarkSample::new(0, Point2::new(0.0, 0.0), d, (1.0 / d - shift) / scale))
            .collect::<Result<Vec<_>, _>>()?,
        DepthDomain::InverseDepth,
    )?;
    let mono = DepthMap::from_values(Raster::from_fn(3, 1, |u, _| (1.0 / (5.0 * (u + 1) as f64) - shift) / scale));
    let metric = apply_alignment(&mono, &fit, DepthDomain::InverseDepth);
    let depths: Vec<String> = (0..3).map(|u| format!("{:.3}", metric.get(u, 0).unwrap_or(f64::NAN))).collect();
    println!("aligned map: [{}] m", depths.join(", "));
    Ok(())
}
