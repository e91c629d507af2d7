//! Projects points, composes poses and forward-warps a road patch between
//! two cameras driving down the x axis.

use blindspot::geometry::{forward_warp, relative_pose, CameraIntrinsics};
use blindspot::raster::{BinaryMask, DepthMap, Raster};
use blindspot::synthworld::level_camera_pose;
use nalgebra::{Point2, Point3};

fn main() -> blindspot::Result<()> {
    let k = CameraIntrinsics::new(100.0, 100.0, 79.5, 59.5, 160, 120)?;

    let p = k.backproject(Point2::new(100.0, 90.0), 8.0)?;
    let back = k.project(&p).expect("point is in front of the camera");
    println!("pixel (100, 90) at 8 m -> {p} -> {}", back.pixel);

    // Two level cameras 1.6 m above the ground, the second 2 m further on.
    let now = level_camera_pose(Point3::new(0.0, 0.0, 1.6), 0.0);
    let later = level_camera_pose(Point3::new(2.0, 0.0, 1.6), 0.0);
    let rel = relative_pose(&later, &now);
    let t = rel.translation();
    println!("later -> now translation: ({:.1}, {:.1}, {:.1})", t.x, t.y, t.z);

    // Every ground pixel of the later frame, with its exact depth.
    let depth = DepthMap::from_values(Raster::from_fn(160, 120, |_, v| {
        let dv = v as f64 - 59.5;
        if dv > 0.0 { 1.6 * 100.0 / dv } else { 0.0 }
    }));
    let ground: BinaryMask = depth.validity().clone();
    let (warped, warped_depth) = forward_warp(&ground, &depth, &rel, &k)?;

    println!("ground pixels later: {}", ground.count_ones());
    println!("ground pixels landing in the current frame: {}", warped.count_ones());
    // The 2×2 splat keeps the nearest landing, so depths read slightly short.
    for v in [65, 75, 85] {
        let z = warped_depth.get(80, v).unwrap_or(f64::NAN);
        let exact = 1.6 * 100.0 / (v as f64 - 59.5);
        println!("row {v}: warped depth {z:.3} m, exact {exact:.3} m");
    }
    Ok(())
}
