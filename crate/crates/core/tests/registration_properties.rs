//! Registration behavior on simulated stacks: ground-truth recovery,
//! equivariance and symmetry laws, peak dominance, and the chain across
//! three arms.

use ghostlab_core::frames::{Displacement, Region};
use ghostlab_core::registration::{
    chain_register, correlation_map, register, register_pair, SearchBounds,
};
use ghostlab_core::specklesim::{
    coh_radius_for_fwhm, simulate, ArmParams, ObjectMask, SimConfig, SpeckleParams,
};

fn clean_config(seed: u64, offsets: [Displacement; 3]) -> SimConfig {
    let mut arms = [ArmParams::default(), ArmParams::default(), ArmParams::default()];
    for (arm, off) in arms.iter_mut().zip(offsets) {
        arm.offset = off;
    }
    SimConfig {
        speckle: SpeckleParams {
            grid_width: 96,
            grid_height: 96,
            coh_radius: coh_radius_for_fwhm(6.0),
            mean_intensity: 400.0,
            n_frames: 8,
            seed,
        },
        arms,
        object: ObjectMask::transparent(96, 96).unwrap(),
        quantization_gain: 1.0,
    }
}

#[test]
fn shift_equivariance_of_the_argmax() {
    // Viewing the probe stack through a window translated by t moves the
    // argmax by exactly -t.
    let cfg = clean_config(3, [Displacement::default(); 3]);
    let out = simulate(&cfg).unwrap();
    let t = Displacement::new(4, -3);
    let ref_view = out.arms[0]
        .crop(Region::new(32, 32, 40, 40).unwrap())
        .unwrap();
    let shifted_view = out.arms[1]
        .crop(Region::new((32 + t.dx) as u32, (32 + t.dy) as u32, 40, 40).unwrap())
        .unwrap();
    // Equal coordinates in the two crops differ by t on the sensor, so the
    // correlated displacement is exactly -t.
    let window = Region::new(8, 8, 24, 24).unwrap();
    let map = correlation_map(
        &ref_view,
        window,
        &shifted_view,
        window,
        SearchBounds::symmetric(8, 8),
    )
    .unwrap();
    let result = register(&map, window, window).unwrap();
    assert_eq!(result.d_max, Displacement::new(-t.dx, -t.dy));
}

#[test]
fn map_symmetry_under_ref_probe_swap() {
    // value(D) of (A, B) anchored at R equals value(-D) of (B, A) anchored
    // at R + D, exactly.
    let mut cfg = clean_config(9, [Displacement::default(); 3]);
    cfg.arms[1].decorrelation = 0.3;
    let out = simulate(&cfg).unwrap();
    let anchor = Region::new(30, 30, 20, 20).unwrap();
    for d in [Displacement::new(3, 2), Displacement::new(-4, 1), Displacement::new(0, -5)] {
        let fwd = correlation_map(
            &out.arms[0],
            anchor,
            &out.arms[1],
            anchor,
            SearchBounds {
                dx_min: d.dx,
                dx_max: d.dx,
                dy_min: d.dy,
                dy_max: d.dy,
            },
        )
        .unwrap();
        let swapped_anchor = anchor.shift(d, 96, 96).unwrap();
        let rev = correlation_map(
            &out.arms[1],
            swapped_anchor,
            &out.arms[0],
            swapped_anchor,
            SearchBounds {
                dx_min: -d.dx,
                dx_max: -d.dx,
                dy_min: -d.dy,
                dy_max: -d.dy,
            },
        )
        .unwrap();
        let a = fwd.value(d).unwrap();
        let b = rev.value(Displacement::new(-d.dx, -d.dy)).unwrap();
        assert!((a - b).abs() < 1e-12, "{a} vs {b} at {d}");
    }
}

#[test]
fn peak_dominates_far_displacements() {
    let truth = Displacement::new(2, -1);
    let cfg = clean_config(17, [Displacement::default(), truth, Displacement::default()]);
    let out = simulate(&cfg).unwrap();
    let anchor = Region::new(30, 30, 28, 28).unwrap();
    let pair = register_pair(
        &out.arms[0],
        anchor,
        &out.arms[1],
        anchor,
        SearchBounds::symmetric(10, 10),
    )
    .unwrap();
    assert_eq!(pair.result.d_max, truth);
    let fwhm = pair.result.fwhm_x.max(pair.result.fwhm_y);
    let mut margin = f64::INFINITY;
    for (d, v) in pair.map.iter() {
        let dist = (((d.dx - truth.dx).pow(2) + (d.dy - truth.dy).pow(2)) as f64).sqrt();
        if dist > 2.0 * fwhm {
            if let Some(v) = v {
                margin = margin.min(pair.result.peak_value - v);
            }
        }
    }
    assert!(margin > 0.5, "peak dominance margin {margin}");
}

#[test]
fn chain_recovers_both_ground_truth_offsets() {
    let off2 = Displacement::new(5, 3);
    let off3 = Displacement::new(-6, 7);
    let cfg = clean_config(21, [Displacement::default(), off2, off3]);
    let out = simulate(&cfg).unwrap();
    let anchor = Region::new(36, 36, 24, 24).unwrap();
    let (p12, p23) = chain_register(
        &out.arms[0],
        &out.arms[1],
        &out.arms[2],
        anchor,
        SearchBounds::symmetric(12, 12),
    )
    .unwrap();
    assert_eq!(p12.result.d_max, off2);
    // Second link measures arm3 relative to arm2.
    assert_eq!(
        p23.result.d_max,
        Displacement::new(off3.dx - off2.dx, off3.dy - off2.dy)
    );
}

#[test]
fn identical_stacks_chain_to_zero() {
    let cfg = clean_config(25, [Displacement::default(); 3]);
    let out = simulate(&cfg).unwrap();
    let anchor = Region::new(36, 36, 24, 24).unwrap();
    let (p12, p23) = chain_register(
        &out.arms[0],
        &out.arms[1],
        &out.arms[2],
        anchor,
        SearchBounds::symmetric(6, 6),
    )
    .unwrap();
    for p in [&p12, &p23] {
        assert_eq!(p.result.d_max, Displacement::new(0, 0));
        assert!((p.result.peak_value - 1.0).abs() < 1e-9);
        assert!(!p.result.on_boundary);
    }
}

#[test]
fn window_excluding_truth_flags_boundary() {
    let truth = Displacement::new(7, 0);
    let cfg = clean_config(33, [Displacement::default(), truth, Displacement::default()]);
    let out = simulate(&cfg).unwrap();
    let anchor = Region::new(36, 36, 24, 24).unwrap();
    let pair = register_pair(
        &out.arms[0],
        anchor,
        &out.arms[1],
        anchor,
        SearchBounds::symmetric(3, 3),
    )
    .unwrap();
    assert!(pair.result.on_boundary);
    assert_eq!(pair.result.d_max.dx, 3);
}

#[test]
fn distance_is_euclidean_between_region_centers() {
    let truth = Displacement::new(3, -4);
    let cfg = clean_config(41, [Displacement::default(), truth, Displacement::default()]);
    let out = simulate(&cfg).unwrap();
    let anchor = Region::new(40, 40, 16, 16).unwrap();
    let pair = register_pair(
        &out.arms[0],
        anchor,
        &out.arms[1],
        anchor,
        SearchBounds::symmetric(6, 6),
    )
    .unwrap();
    assert_eq!(pair.result.d_max, truth);
    assert!((pair.result.distance - 5.0).abs() < 1e-12);
}
