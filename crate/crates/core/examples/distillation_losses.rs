//! Computes the pairwise-similarity distillation loss and the masked
//! blind-spot BCE, then runs the gradient self-check.

use blindspot::losses::{bce_loss, kd_loss_with_grad, pairwise_similarity, patch_pool, self_check, total_loss, FeatureGrid, LossConfig};
use blindspot::raster::{BinaryMask, Raster};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> blindspot::Result<()> {
    let cfg = LossConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut features = |c: usize| {
        let data = (0..32 * 24 * c).map(|_| rng.random_range(-1.0..1.0)).collect();
        FeatureGrid::new(32, 24, c, data)
    };

    // Teacher and student may differ in channel count; the similarity
    // matrices are both N×N over the pooled patches.
    let teacher = patch_pool(&features(16)?, cfg.patch_grid)?;
    let student = patch_pool(&features(8)?, cfg.patch_grid)?;
    let a_t = pairwise_similarity(&teacher).matrix;
    let (kd, grad) = kd_loss_with_grad(&a_t, &student)?;
    println!("patches: {}, l_KD = {kd:.6}, |grad| max = {:.2e}", teacher.cells(), grad.as_slice().iter().fold(0.0f64, |m, g| m.max(g.abs())));

    let omega = Raster::from_fn(32, 24, |u, v| u > 20 && v > 12);
    let vis: BinaryMask = Raster::from_fn(32, 24, |_, v| v > 4);
    let b = Raster::from_fn(32, 24, |u, _| 0.1 + 0.8 * u as f64 / 31.0);
    let bce = bce_loss(&omega, &b, &vis, cfg.epsilon_clip)?;
    println!("l_BCE = {:.6}, total = {:.6}", bce.loss, total_loss(bce.loss, kd, cfg.lambda));

    let report = self_check(20, 0)?;
    println!(
        "self-check: hand case {}, ln 2 case {:.12}, gradient errors {:.1e} / {:.1e}, passed = {}",
        report.kd_hand_case,
        report.bce_single_pixel,
        report.kd_max_rel_error,
        report.bce_max_rel_error,
        report.passed()
    );
    Ok(())
}
