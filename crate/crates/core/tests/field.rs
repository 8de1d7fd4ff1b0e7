use proptest::prelude::*;
use tev_core::field::{
    assemble_sequence, encode_hsv, interpolate_field, track_markers, DisplacementFrame, GridSpec, MarkerFlow,
    MarkerLayout, TrackConfig,
};

fn rotate_about(p: [f64; 2], c: [f64; 2], deg: f64) -> [f64; 2] {
    let (s, k) = deg.to_radians().sin_cos();
    let (x, y) = (p[0] - c[0], p[1] - c[1]);
    [c[0] + k * x - s * y, c[1] + s * x + k * y]
}

#[test]
fn rotation_by_two_degrees_matches_closed_form() {
    let rest = MarkerLayout::default().rest_positions();
    let center = GridSpec::default().center();
    let detected: Vec<[f64; 2]> = rest.iter().map(|&p| rotate_about(p, center, 2.0)).collect();
    let flow = track_markers(
        &MarkerFlow::at_rest(rest.clone()),
        &detected,
        0.0,
        &TrackConfig::default(),
    )
    .unwrap();
    for (p, d) in rest.iter().zip(flow.displacement()) {
        let moved = rotate_about(*p, center, 2.0);
        assert!((d[0] - (moved[0] - p[0])).abs() < 1e-6);
        assert!((d[1] - (moved[1] - p[1])).abs() < 1e-6);
    }
}

#[test]
fn tracking_follows_motion_beyond_match_radius() {
    let rest = MarkerLayout::default().rest_positions();
    let mut flow = MarkerFlow::at_rest(rest.clone());
    for step in 1..=8 {
        let shift = 0.5 * step as f64;
        let detected: Vec<[f64; 2]> = rest.iter().map(|p| [p[0] + shift, p[1]]).collect();
        flow = track_markers(&flow, &detected, step as f64 / 30.0, &TrackConfig::default()).unwrap();
    }
    assert!(flow.displacement().iter().all(|d| (d[0] - 4.0).abs() < 1e-12));
}

#[test]
fn zero_flow_is_zero_frame() {
    let flow = MarkerFlow::at_rest(MarkerLayout::default().rest_positions());
    let frame = interpolate_field(&flow, &GridSpec::default()).unwrap();
    assert!(frame.as_slice().iter().all(|&v| v == 0.0));
}

#[test]
fn interpolant_is_exact_at_coincident_node() {
    // The corner markers of the default layout sit on grid nodes; add an
    // interior marker exactly on node (10, 20) carrying a bump.
    let grid = GridSpec::default();
    let mut rest = MarkerLayout::default().rest_positions();
    let mut disp = vec![[0.0, 0.0]; rest.len()];
    rest.push(grid.node(10, 20));
    disp.push([0.8, -0.3]);
    disp[0] = [0.1, 0.2];
    let flow = MarkerFlow::new(rest, disp, 0.0, 5.0).unwrap();
    let frame = interpolate_field(&flow, &grid).unwrap();
    assert_eq!(frame.dx(10, 20), 0.8f32);
    assert_eq!(frame.dy(10, 20), -0.3f32);
    assert_eq!(frame.dx(0, 0), 0.1f32);
    assert_eq!(frame.dy(0, 0), 0.2f32);
}

#[test]
fn timestamps_step_by_stride_over_rate() {
    let stream: Vec<DisplacementFrame> = (0..30).map(|_| DisplacementFrame::zeros(30, 30)).collect();
    let seq = assemble_sequence(&stream, 30.0, 1.0, 2).unwrap();
    let ts = seq.timestamps();
    for w in ts.windows(2) {
        assert!(w[1] > w[0]);
        assert!((w[1] - w[0] - 2.0 / 30.0).abs() < 1e-12);
    }
}

proptest! {
    #[test]
    fn rigid_translation_round_trip(tx in -2.0f64..2.0, ty in -2.0f64..2.0) {
        let rest = MarkerLayout::default().rest_positions();
        let disp = vec![[tx, ty]; rest.len()];
        let flow = MarkerFlow::new(rest, disp, 0.0, 5.0).unwrap();
        let frame = interpolate_field(&flow, &GridSpec::default()).unwrap();
        for &v in frame.channel(0) {
            prop_assert!((v as f64 - tx).abs() < 1e-6);
        }
        for &v in frame.channel(1) {
            prop_assert!((v as f64 - ty).abs() < 1e-6);
        }
    }

    #[test]
    fn hsv_scale_invariance(
        values in prop::collection::vec(-3.0f32..3.0, 2 * 4 * 4),
        v_max in 0.1f64..5.0,
        scale in prop::sample::select(vec![0.5f32, 2.0, 4.0, 0.25]),
    ) {
        let frame = DisplacementFrame::unflatten(4, 4, values.clone()).unwrap();
        let scaled = DisplacementFrame::unflatten(4, 4, values.iter().map(|v| v * scale).collect()).unwrap();
        let a = encode_hsv(&frame, v_max).unwrap();
        let b = encode_hsv(&scaled, v_max * scale as f64).unwrap();
        for (pa, pb) in a.pixels.iter().zip(&b.pixels) {
            for k in 0..3 {
                prop_assert!((pa[k] as i32 - pb[k] as i32).abs() <= 1, "{pa:?} vs {pb:?}");
            }
        }
    }

    #[test]
    fn flatten_unflatten_identity(values in prop::collection::vec(-5.0f32..5.0, 2 * 3 * 5)) {
        let frame = DisplacementFrame::unflatten(3, 5, values.clone()).unwrap();
        prop_assert_eq!(frame.flatten(), values);
        let again = DisplacementFrame::unflatten(3, 5, frame.flatten()).unwrap();
        prop_assert_eq!(again, frame);
    }
}
