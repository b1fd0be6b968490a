//! Reproducible input data.
//!
//! Values come from SplitMix64 (`rand_xoshiro::SplitMix64`) seeded with the
//! user seed plus the argument index. Each draw uses one 64-bit output `u`:
//!
//! * `int(lo, hi)` = `lo + u % (hi - lo + 1)`
//! * `unit()` = `(u >> 11) / 2^53`, in [0, 1)
//!
//! The value regime depends on the consuming intrinsic so that results are
//! meaningful in every dtype:
//!
//! | use                       | integers             | floats                                  |
//! |---------------------------|----------------------|-----------------------------------------|
//! | sum                       | full range           | float32: `int(-64, 63) / 64`; bfloat16 or converted: sparse small integers |
//! | product                   | odd in [-9, 9]       | ±1, with 1 in 256 replaced by ±2 or ±0.5 |
//! | maxval, minval, transpose | full range           | `-1000 + 2000·unit()`                    |
//! | matmul                    | [-181, 181]          | `-1 + 2·unit()`                         |
//!
//! Sparse small integers are 0 except 1 in 256, which is `int(-2, 2)`.
//! Floats are rounded to the target dtype after drawing.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;

use crate::categorize::IntrinsicKind;
use crate::ir::DType;
use crate::scalar::Scalar;

pub struct Gen(SplitMix64);

impl Gen {
    pub fn new(seed: u64) -> Self {
        Gen(SplitMix64::seed_from_u64(seed))
    }

    /// Generator for argument `index` of a run seeded with `seed`.
    pub fn for_arg(seed: u64, index: usize) -> Self {
        Self::new(seed.wrapping_add(index as u64))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    /// Inclusive range.
    pub fn int(&mut self, lo: i64, hi: i64) -> i64 {
        let span = (hi - lo) as u64 + 1;
        lo + (self.next_u64() % span) as i64
    }

    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    fn full_range(&mut self, dtype: DType) -> Scalar {
        let u = self.next_u64();
        match dtype {
            DType::Int16 => Scalar::I16(u as i16),
            _ => Scalar::I32(u as i32),
        }
    }

    fn sparse_int(&mut self) -> f64 {
        if self.next_u64().is_multiple_of(256) {
            self.int(-2, 2) as f64
        } else {
            0.0
        }
    }

    /// One value of `dtype` for an operand of `kind`. `converted` marks
    /// float32 data that will be narrowed to bfloat16.
    pub fn value(&mut self, kind: Option<IntrinsicKind>, dtype: DType, converted: bool) -> Scalar {
        use IntrinsicKind::*;
        if !dtype.is_float() {
            return match kind {
                Some(Product) => Scalar::from_f64(dtype, (2 * self.int(-5, 4) + 1) as f64),
                Some(Matmul) => Scalar::from_f64(dtype, self.int(-181, 181) as f64),
                _ => self.full_range(dtype),
            };
        }
        let v = match kind {
            Some(Sum) if dtype == DType::Float32 && !converted => self.int(-64, 63) as f64 / 64.0,
            Some(Sum) => self.sparse_int(),
            Some(Product) => {
                let sign = if self.next_u64() & 1 == 0 { 1.0 } else { -1.0 };
                let mag = if self.next_u64().is_multiple_of(256) {
                    if self.next_u64() & 1 == 0 {
                        2.0
                    } else {
                        0.5
                    }
                } else {
                    1.0
                };
                sign * mag
            }
            Some(Matmul) => -1.0 + 2.0 * self.unit(),
            _ => -1000.0 + 2000.0 * self.unit(),
        };
        Scalar::from_f64(dtype, v)
    }

    pub fn values(&mut self, kind: Option<IntrinsicKind>, dtype: DType, n: usize, converted: bool) -> Vec<Scalar> {
        (0..n).map(|_| self.value(kind, dtype, converted)).collect()
    }
}
