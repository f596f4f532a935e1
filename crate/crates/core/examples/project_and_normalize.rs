//! Projects a few world points through the default rig and normalizes the
//! resulting pixels and positions.

use torso_pose::geometry::{denormalize_pose, normalize_pixel, normalize_world, Rig};

fn main() {
    let rig = Rig::three_camera_default();
    let points = [[0.0, 0.0, 0.9], [1.5, -2.0, 1.2], [-2.5, 3.0, 0.1]];
    for camera in &rig.cameras {
        println!("camera {}", camera.id);
        for p in points {
            let proj = camera.project_point(p);
            if proj.visible {
                let n = normalize_pixel(proj.pixel, camera.resolution);
                println!(
                    "  {p:?} -> pixel ({:.1}, {:.1}) depth {:.2} m, normalized ({:+.3}, {:+.3})",
                    proj.pixel[0], proj.pixel[1], proj.depth, n.px, n.py
                );
            } else {
                println!("  {p:?} -> not visible");
            }
        }
    }
    let w = normalize_world([1.5, -2.0, 0.9], &rig.room);
    println!("world (1.5, -2.0, 0.9) -> {w:?}");
    println!("back to mm: {:?}", denormalize_pose([w[0], w[1]], &rig.room));
}
