use fxguard_core::{BitStream, Terminal};
use proptest::prelude::*;

fn nat(v: &BitStream) -> u64 {
    v.to_natural().unwrap().try_into().unwrap()
}

#[test]
fn unbounded_addition_is_exact_below_2_pow_10() {
    let values: Vec<BitStream> = (0..1u64 << 10).map(BitStream::from_u64).collect();
    for (a, va) in values.iter().enumerate() {
        for (b, vb) in values.iter().enumerate() {
            let s = va.add_unbounded(vb);
            assert!(s.is_clean());
            assert_eq!(nat(&s), (a + b) as u64, "{a} + {b}");
        }
    }
}

#[test]
fn unbounded_multiplication_is_exact_below_2_pow_8() {
    for a in 0..1u64 << 8 {
        let va = BitStream::from_u64(a);
        for b in 0..1u64 << 8 {
            let p = va.mul_unbounded(&BitStream::from_u64(b));
            assert!(p.is_clean());
            assert_eq!(nat(&p), a * b, "{a} * {b}");
        }
    }
}

#[test]
fn limited_addition_wraps_exhaustively_below_2_pow_8() {
    for l in 0..=9usize {
        for a in 0..1u64 << 8 {
            for b in 0..1u64 << 8 {
                let r = BitStream::from_u64(a).add_limited(&BitStream::from_u64(b), l);
                let raw: u64 = r.raw_natural().try_into().unwrap();
                assert_eq!(raw, (a + b) % (1 << l));
                assert_eq!(r.is_clean(), a + b < 1 << l);
            }
        }
    }
}

#[test]
fn dirty_streams_refuse_natural_conversion() {
    let v = BitStream::from_u64(5).with_terminal(Terminal::Overflow);
    assert!(v.to_natural().is_err());
    assert_eq!(v.raw_natural(), 5u32.into());
}

proptest! {
    #[test]
    fn addition_and_multiplication_commute(a in any::<u32>(), b in any::<u32>(), l in 0usize..40) {
        let (va, vb) = (BitStream::from_u64(a.into()), BitStream::from_u64(b.into()));
        prop_assert_eq!(nat(&va.add_unbounded(&vb)), nat(&vb.add_unbounded(&va)));
        prop_assert_eq!(nat(&va.mul_unbounded(&vb)), u64::from(a) * u64::from(b));
        let (x, y) = (va.mul_limited(&vb, l), vb.mul_limited(&va, l));
        prop_assert_eq!(x.raw_natural(), y.raw_natural());
        prop_assert_eq!(x.is_clean(), y.is_clean());
    }

    #[test]
    fn split_and_concat_roundtrip(n in any::<u64>(), k in 0usize..64) {
        let v = BitStream::from_u64(n);
        let joined = v.slice(0, k).concat(&v.slice(k, 64 - k));
        prop_assert_eq!(nat(&joined), n);
    }
}
