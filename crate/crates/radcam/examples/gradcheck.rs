//! Finite-difference gradient checks: individual ops and the full network.
//!
//! ```bash
//! cargo run --release --example gradcheck
//! ```

use radcam::nnet::gradcheck::{check_gradients, random_values, DEFAULT_STEP};
use radcam::nnet::{ops, Network, NetworkConfig};
use radcam::rng::Rng;

fn main() {
    let mut rng = Rng::new(1234);

    let conv = check_gradients(
        |ls| ops::sum(&ops::conv2d(&ls[0], &ls[1], &ls[2], 1, 1)?),
        &[
            random_values(&[3, 6, 7], &mut rng),
            random_values(&[4, 3, 3, 3], &mut rng),
            random_values(&[4], &mut rng),
        ],
        DEFAULT_STEP,
        0,
        &mut rng,
    )
    .unwrap();
    println!("conv2d        max rel err {:.2e}", conv.max_rel_err);

    let chain = check_gradients(
        |ls| {
            let up = ops::upsample_nearest2x(&ls[0])?;
            let r = ops::relu(&up)?;
            ops::mean(&r)
        },
        &[random_values(&[2, 4, 5], &mut rng)],
        DEFAULT_STEP,
        0,
        &mut rng,
    )
    .unwrap();
    println!("upsample+relu max rel err {:.2e}", chain.max_rel_err);

    // End to end through the association network.
    let cfg = NetworkConfig {
        base_channels: 4,
        out_channels: 4,
        weight_init_seed: 9,
        ..NetworkConfig::default()
    };
    let net: Network<f64> = Network::new(cfg).unwrap();
    let shapes: Vec<(Vec<usize>, Vec<f64>)> = std::iter::once(random_values(&[14, 8, 8], &mut rng))
        .chain(net.params.iter().map(|p| (p.shape.clone(), p.value.clone())))
        .collect();
    let anchors = [(1usize, 2usize), (5, 6), (3, 3)];
    let report = check_gradients(
        |ls| {
            let out = net.forward(&ls[1..], &ls[0])?;
            let rows = ops::gather_pixels(&out, &anchors, 0, 2)?;
            ops::mean(&ops::row_norm(&rows)?)
        },
        &shapes,
        DEFAULT_STEP,
        12,
        &mut rng,
    )
    .unwrap();
    println!(
        "end-to-end    max rel err {:.2e} over {} coordinates",
        report.max_rel_err, report.coords_checked
    );
}
