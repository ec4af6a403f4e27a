//! Projection, inverse projective mapping, frustums, and the ordering rule
//! that links radar depth to box bottom edges.
//!
//! ```bash
//! cargo run --release --example geometry_tour
//! ```

use radcam::geom::{
    frustum, ipm_ground, project, BBox2D, CamPoint3, CameraIntrinsics, Category, GroundPoint,
    RadarPin, RigidTransform,
};

fn main() {
    let k = CameraIntrinsics::from_fov(1828.0, 948.0, 52.0).unwrap();
    let cam_height = 1.5;
    let tf = RigidTransform::standard_mount(cam_height, 1.5);

    // A radar pin measured 25 ms before the camera frame.
    let pin = RadarPin::new(7, 0.93, 30.0, -2.0, 12.0, 0.0, 0.0).unwrap();
    let aligned = pin.align_temporal(0.025);
    println!(
        "pin {} moved {:.3} m forward by temporal alignment",
        pin.id,
        aligned.pos_x - pin.pos_x
    );

    let cam = aligned.to_camera(&tf, 0.5).unwrap();
    let px = project(cam, &k).unwrap();
    println!(
        "camera point ({:.2}, {:.2}, {:.2}) -> pixel ({:.1}, {:.1})",
        cam.x, cam.y, cam.z, px.u, px.v
    );

    // IPM inverts projection on the ground plane.
    let ground3 = CamPoint3 {
        x: cam.x,
        y: cam_height,
        z: cam.z,
    };
    let gpx = project(ground3, &k).unwrap();
    let back = ipm_ground(gpx, &k, cam_height).unwrap();
    println!(
        "ipm round-trip error: {:.2e} m",
        ((back.x - ground3.x).powi(2) + (back.z - ground3.z).powi(2)).sqrt()
    );

    // Farther objects have higher (smaller-v) box bottoms; verify over a
    // depth ladder.
    println!("\ndepth vs bottom edge (deeper => smaller y_max):");
    let mut prev: Option<(f64, f64)> = None;
    for z in [10.0, 20.0, 40.0, 80.0] {
        let v = project(
            CamPoint3 {
                x: 0.0,
                y: cam_height,
                z,
            },
            &k,
        )
        .unwrap()
        .v;
        println!("  depth {z:5.1} m -> bottom edge v = {v:7.2} px");
        if let Some((pz, pv)) = prev {
            assert!(z > pz && v < pv);
        }
        prev = Some((z, v));
    }

    // A bounding box's frustum contains its object's ground position.
    let b = BBox2D::new(0, k.cx + 60.0, 500.0, 180.0, 120.0, Category::Suv).unwrap();
    let fr = frustum(&b, &k, cam_height).unwrap();
    let inside = ipm_ground(
        radcam::geom::PixelCoord {
            u: b.center_x,
            v: b.y_max(),
        },
        &k,
        cam_height,
    )
    .unwrap();
    println!(
        "\nfrustum of box {}: contains its ground point: {}",
        b.id,
        fr.contains(inside)
    );
    println!(
        "frustum rejects a point 10 m to the side: {}",
        !fr.contains(GroundPoint {
            x: inside.x + 10.0,
            z: inside.z
        })
    );
    let poly = fr.polygon();
    println!(
        "truncated polygon (near width 1 m, far width 5 m): near z {:.1} m, far z {:.1} m",
        poly[0].z, poly[1].z
    );
}
