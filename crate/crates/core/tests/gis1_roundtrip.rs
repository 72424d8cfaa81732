//! Persistence properties: bit-exact GIS1 round trips on arbitrary
//! quantized stacks, graceful failure on corrupted bytes, and the region
//! algebra laws.

use ghostlab_core::frames::gis1;
use ghostlab_core::frames::{Displacement, FrameStack, Meta, Region};
use proptest::prelude::*;

fn arb_stack() -> impl Strategy<Value = FrameStack> {
    (1u32..6, 1u32..6, 1u32..4)
        .prop_flat_map(|(w, h, n)| {
            let len = (w * h * n) as usize;
            (
                Just(w),
                Just(h),
                Just(n),
                prop::collection::vec(0u16..=65535, len),
                prop::collection::btree_map("[a-z]{1,6}", "[ -<>-~]{0,8}", 0..3),
            )
        })
        .prop_map(|(w, h, n, vals, meta)| {
            let pixels = vals.into_iter().map(|v| v as f64).collect();
            let meta: Meta = meta.into_iter().collect();
            FrameStack::new(w, h, n, pixels, meta).unwrap()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn round_trip_is_bit_exact(stack in arb_stack()) {
        let bytes = gis1::to_bytes(&stack).unwrap();
        let back = gis1::from_bytes(&bytes).unwrap();
        prop_assert_eq!(&stack, &back);
        let again = gis1::to_bytes(&back).unwrap();
        prop_assert_eq!(bytes, again);
    }

    #[test]
    fn corrupted_bytes_never_panic(
        stack in arb_stack(),
        idx in prop::num::usize::ANY,
        bit in 0u8..8,
    ) {
        let mut bytes = gis1::to_bytes(&stack).unwrap();
        let i = idx % bytes.len();
        bytes[i] ^= 1 << bit;
        // Either a clean error or a (different but valid) stack; the point
        // is no panic and no invalid stack invariants.
        if let Ok(s) = gis1::from_bytes(&bytes) {
            prop_assert!(s.pixels().iter().all(|&v| (0.0..=65535.0).contains(&v)));
        }
    }

    #[test]
    fn truncated_bytes_error(stack in arb_stack(), cut in 1usize..16) {
        let bytes = gis1::to_bytes(&stack).unwrap();
        let cut = cut.min(bytes.len());
        let r = gis1::from_bytes(&bytes[..bytes.len() - cut]);
        prop_assert!(r.is_err());
    }

    #[test]
    fn crop_is_a_pure_projection(
        stack in arb_stack(),
        rx in 0u32..4, ry in 0u32..4,
    ) {
        let w = stack.width();
        let h = stack.height();
        prop_assume!(w > rx && h > ry);
        let region = Region::new(rx, ry, w - rx, h - ry).unwrap();
        let cropped = stack.crop(region).unwrap();
        for f in 0..stack.n_frames() {
            for r in 0..region.height {
                for c in 0..region.width {
                    prop_assert_eq!(
                        cropped.pixel(f, r, c),
                        stack.pixel(f, r + ry, c + rx)
                    );
                }
            }
        }
    }

    #[test]
    fn shift_round_trip(
        x0 in 0u32..20, y0 in 0u32..20,
        dx in -10i32..10, dy in -10i32..10,
    ) {
        let r = Region::new(x0 + 10, y0 + 10, 4, 4).unwrap();
        if let Ok(shifted) = r.shift(Displacement::new(dx, dy), 64, 64) {
            let back = shifted.shift(Displacement::new(-dx, -dy), 64, 64).unwrap();
            prop_assert_eq!(back, r);
        }
    }
}
