//! bfloat16 helpers.
//!
//! Values are stored as [`half::bf16`]. Narrowing from float32 rounds to
//! nearest with ties to even on the upper 16 bits; infinities keep their
//! sign and NaN stays NaN.

pub use half::bf16 as Bf16;

/// Round a float32 to the nearest bfloat16, ties to even.
pub fn bf16_round(x: f32) -> Bf16 {
    Bf16::from_f32(x)
}

/// Exact widening back to float32.
pub fn bf16_widen(x: Bf16) -> f32 {
    x.to_f32()
}

/// Apply `f` in float32 and round the result back, the way every bfloat16
/// arithmetic op is evaluated.
pub fn bf16_binary(a: Bf16, b: Bf16, f: impl Fn(f32, f32) -> f32) -> Bf16 {
    bf16_round(f(a.to_f32(), b.to_f32()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_is_exact() {
        assert_eq!(bf16_round(1.0).to_bits(), 0x3F80);
    }

    #[test]
    fn point_two_rounds_up() {
        let x = f32::from_bits(0x3E4C_CCCD);
        assert_eq!(bf16_round(x).to_bits(), 0x3E4D);
        assert_eq!(bf16_widen(bf16_round(x)), 0.200_195_31);
    }

    #[test]
    fn negative_zero_keeps_sign() {
        assert_eq!(bf16_round(-0.0).to_bits(), 0x8000);
    }

    #[test]
    fn ties_go_to_even() {
        // lower half exactly 0x8000: 0x3F80 is even, stays; 0x3F81 is odd, goes up
        assert_eq!(bf16_round(f32::from_bits(0x3F80_8000)).to_bits(), 0x3F80);
        assert_eq!(bf16_round(f32::from_bits(0x3F81_8000)).to_bits(), 0x3F82);
    }

    #[test]
    fn specials() {
        assert_eq!(bf16_round(f32::INFINITY).to_bits(), 0x7F80);
        assert_eq!(bf16_round(f32::NEG_INFINITY).to_bits(), 0xFF80);
        assert!(bf16_round(f32::NAN).is_nan());
        // largest finite float32 overflows to infinity under RNE
        assert_eq!(bf16_round(f32::MAX).to_bits(), 0x7F80);
    }

    #[test]
    fn widen_then_round_is_identity() {
        for bits in 0..=u16::MAX {
            let b = Bf16::from_bits(bits);
            if b.is_nan() {
                continue;
            }
            assert_eq!(bf16_round(bf16_widen(b)).to_bits(), bits);
        }
    }
}
