//! Typed scalar values and the arithmetic every execution path shares.
//!
//! Integer arithmetic wraps at the declared width on every step. bfloat16
//! arithmetic widens to float32, computes, and rounds back after each op.
//! Float max/min are commutative and associative: NaN wins and becomes the
//! canonical quiet NaN, and `max(-0, +0)` is `+0` (`min` gives `-0`).

use std::fmt;

use crate::ir::DType;
use crate::sim::bf16::{bf16_binary, bf16_round, Bf16};

/// The four reduction combiners.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Combiner {
    Add,
    Mul,
    Max,
    Min,
}

impl Combiner {
    pub fn name(self) -> &'static str {
        match self {
            Combiner::Add => "add",
            Combiner::Mul => "mul",
            Combiner::Max => "max",
            Combiner::Min => "min",
        }
    }
}

/// Binary arithmetic op tags accepted in combiner bodies and core programs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ArithOp {
    AddI,
    AddF,
    MulI,
    MulF,
    MaxSI,
    MaxF,
    MinSI,
    MinF,
    MaxUI,
    MinUI,
    SubI,
    SubF,
}

impl ArithOp {
    pub const ALL: [ArithOp; 12] = [
        ArithOp::AddI,
        ArithOp::AddF,
        ArithOp::MulI,
        ArithOp::MulF,
        ArithOp::MaxSI,
        ArithOp::MaxF,
        ArithOp::MinSI,
        ArithOp::MinF,
        ArithOp::MaxUI,
        ArithOp::MinUI,
        ArithOp::SubI,
        ArithOp::SubF,
    ];

    pub fn mnemonic(self) -> &'static str {
        match self {
            ArithOp::AddI => "addi",
            ArithOp::AddF => "addf",
            ArithOp::MulI => "muli",
            ArithOp::MulF => "mulf",
            ArithOp::MaxSI => "maxsi",
            ArithOp::MaxF => "maxf",
            ArithOp::MinSI => "minsi",
            ArithOp::MinF => "minf",
            ArithOp::MaxUI => "maxui",
            ArithOp::MinUI => "minui",
            ArithOp::SubI => "subi",
            ArithOp::SubF => "subf",
        }
    }

    pub fn from_mnemonic(s: &str) -> Option<ArithOp> {
        ArithOp::ALL.into_iter().find(|op| op.mnemonic() == s)
    }

    pub fn is_float_op(self) -> bool {
        matches!(self, ArithOp::AddF | ArithOp::MulF | ArithOp::MaxF | ArithOp::MinF | ArithOp::SubF)
    }

    /// Whether the op is defined on `dtype`.
    pub fn accepts(self, dtype: DType) -> bool {
        self.is_float_op() == dtype.is_float()
    }

    /// The reduction combiner this op implements, if any. Unsigned and
    /// subtracting ops have none.
    pub fn combiner(self) -> Option<Combiner> {
        match self {
            ArithOp::AddI | ArithOp::AddF => Some(Combiner::Add),
            ArithOp::MulI | ArithOp::MulF => Some(Combiner::Mul),
            ArithOp::MaxSI | ArithOp::MaxF => Some(Combiner::Max),
            ArithOp::MinSI | ArithOp::MinF => Some(Combiner::Min),
            _ => None,
        }
    }
}

impl fmt::Display for ArithOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.mnemonic())
    }
}

/// A single typed value.
#[derive(Debug, Clone, Copy)]
pub enum Scalar {
    I16(i16),
    I32(i32),
    Bf16(Bf16),
    F32(f32),
}

/// Bitwise equality, so NaN constants compare equal to themselves.
impl PartialEq for Scalar {
    fn eq(&self, other: &Self) -> bool {
        self.dtype() == other.dtype() && self.bits() == other.bits()
    }
}

impl Eq for Scalar {}

const CANONICAL_NAN: f32 = f32::from_bits(0x7FC0_0000);

fn fmax(a: f32, b: f32) -> f32 {
    if a.is_nan() || b.is_nan() {
        CANONICAL_NAN
    } else if a > b {
        a
    } else if b > a {
        b
    } else if a.is_sign_positive() {
        a
    } else {
        b
    }
}

fn fmin(a: f32, b: f32) -> f32 {
    if a.is_nan() || b.is_nan() {
        CANONICAL_NAN
    } else if a < b {
        a
    } else if b < a {
        b
    } else if a.is_sign_negative() {
        a
    } else {
        b
    }
}

fn float_op(op: ArithOp) -> Option<fn(f32, f32) -> f32> {
    Some(match op {
        ArithOp::AddF => |a, b| a + b,
        ArithOp::SubF => |a, b| a - b,
        ArithOp::MulF => |a, b| a * b,
        ArithOp::MaxF => fmax,
        ArithOp::MinF => fmin,
        _ => return None,
    })
}

macro_rules! int_op {
    ($op:expr, $a:expr, $b:expr, $t:ty, $u:ty) => {
        match $op {
            ArithOp::AddI => Some($a.wrapping_add($b)),
            ArithOp::SubI => Some($a.wrapping_sub($b)),
            ArithOp::MulI => Some($a.wrapping_mul($b)),
            ArithOp::MaxSI => Some($a.max($b)),
            ArithOp::MinSI => Some($a.min($b)),
            ArithOp::MaxUI => Some(($a as $u).max($b as $u) as $t),
            ArithOp::MinUI => Some(($a as $u).min($b as $u) as $t),
            _ => None,
        }
    };
}

impl Scalar {
    pub fn dtype(&self) -> DType {
        match self {
            Scalar::I16(_) => DType::Int16,
            Scalar::I32(_) => DType::Int32,
            Scalar::Bf16(_) => DType::BFloat16,
            Scalar::F32(_) => DType::Float32,
        }
    }

    /// Raw bit pattern, zero-extended.
    pub fn bits(&self) -> u32 {
        match *self {
            Scalar::I16(v) => v as u16 as u32,
            Scalar::I32(v) => v as u32,
            Scalar::Bf16(v) => v.to_bits() as u32,
            Scalar::F32(v) => v.to_bits(),
        }
    }

    pub fn from_bits(dtype: DType, bits: u32) -> Scalar {
        match dtype {
            DType::Int16 => Scalar::I16(bits as u16 as i16),
            DType::Int32 => Scalar::I32(bits as i32),
            DType::BFloat16 => Scalar::Bf16(Bf16::from_bits(bits as u16)),
            DType::Float32 => Scalar::F32(f32::from_bits(bits)),
        }
    }

    pub fn zero(dtype: DType) -> Scalar {
        Scalar::from_bits(dtype, 0)
    }

    /// Identity element of `combiner` in `dtype`: 0, 1, the type's minimum
    /// (max) or maximum (min). Float extremes are the infinities.
    pub fn identity(combiner: Combiner, dtype: DType) -> Scalar {
        match (combiner, dtype) {
            (Combiner::Add, d) => Scalar::zero(d),
            (Combiner::Mul, d) => Scalar::from_f64(d, 1.0),
            (Combiner::Max, DType::Int16) => Scalar::I16(i16::MIN),
            (Combiner::Max, DType::Int32) => Scalar::I32(i32::MIN),
            (Combiner::Max, DType::BFloat16) => Scalar::Bf16(Bf16::NEG_INFINITY),
            (Combiner::Max, DType::Float32) => Scalar::F32(f32::NEG_INFINITY),
            (Combiner::Min, DType::Int16) => Scalar::I16(i16::MAX),
            (Combiner::Min, DType::Int32) => Scalar::I32(i32::MAX),
            (Combiner::Min, DType::BFloat16) => Scalar::Bf16(Bf16::INFINITY),
            (Combiner::Min, DType::Float32) => Scalar::F32(f32::INFINITY),
        }
    }

    /// Convert a float64 into `dtype` (integers truncate toward zero and wrap).
    pub fn from_f64(dtype: DType, v: f64) -> Scalar {
        match dtype {
            DType::Int16 => Scalar::I16(v as i64 as i16),
            DType::Int32 => Scalar::I32(v as i64 as i32),
            DType::BFloat16 => Scalar::Bf16(bf16_round(v as f32)),
            DType::Float32 => Scalar::F32(v as f32),
        }
    }

    pub fn to_f64(&self) -> f64 {
        match *self {
            Scalar::I16(v) => v as f64,
            Scalar::I32(v) => v as f64,
            Scalar::Bf16(v) => v.to_f64(),
            Scalar::F32(v) => v as f64,
        }
    }

    /// Convert to another dtype: floats narrow with RNE, integers wrap.
    pub fn cast(&self, dtype: DType) -> Scalar {
        match (*self, dtype) {
            (s, d) if s.dtype() == d => s,
            (Scalar::I16(v), DType::Int32) => Scalar::I32(v as i32),
            (Scalar::I32(v), DType::Int16) => Scalar::I16(v as i16),
            (Scalar::F32(v), DType::BFloat16) => Scalar::Bf16(bf16_round(v)),
            (Scalar::Bf16(v), DType::Float32) => Scalar::F32(v.to_f32()),
            (s, d) => Scalar::from_f64(d, s.to_f64()),
        }
    }

    /// Evaluate `op` on two scalars of the same dtype.
    pub fn apply(op: ArithOp, a: Scalar, b: Scalar) -> Result<Scalar, String> {
        let bad = || format!("`{op}` is not defined on {} and {}", a.dtype(), b.dtype());
        match (a, b) {
            (Scalar::I16(x), Scalar::I16(y)) => int_op!(op, x, y, i16, u16).map(Scalar::I16),
            (Scalar::I32(x), Scalar::I32(y)) => int_op!(op, x, y, i32, u32).map(Scalar::I32),
            (Scalar::Bf16(x), Scalar::Bf16(y)) => {
                float_op(op).map(|f| Scalar::Bf16(bf16_binary(x, y, f)))
            }
            (Scalar::F32(x), Scalar::F32(y)) => float_op(op).map(|f| Scalar::F32(f(x, y))),
            _ => None,
        }
        .ok_or_else(bad)
    }

    /// Combine with the dtype's op for `combiner`.
    pub fn combine(self, other: Scalar, combiner: Combiner) -> Scalar {
        let float = self.dtype().is_float();
        let op = match (combiner, float) {
            (Combiner::Add, false) => ArithOp::AddI,
            (Combiner::Add, true) => ArithOp::AddF,
            (Combiner::Mul, false) => ArithOp::MulI,
            (Combiner::Mul, true) => ArithOp::MulF,
            (Combiner::Max, false) => ArithOp::MaxSI,
            (Combiner::Max, true) => ArithOp::MaxF,
            (Combiner::Min, false) => ArithOp::MinSI,
            (Combiner::Min, true) => ArithOp::MinF,
        };
        Scalar::apply(op, self, other).expect("combine requires matching dtypes")
    }

    /// Read element `idx` from little-endian bytes.
    pub fn read(dtype: DType, bytes: &[u8], idx: usize) -> Scalar {
        let w = dtype.byte_width();
        let b = &bytes[idx * w..idx * w + w];
        let bits = match w {
            2 => u16::from_le_bytes([b[0], b[1]]) as u32,
            _ => u32::from_le_bytes([b[0], b[1], b[2], b[3]]),
        };
        Scalar::from_bits(dtype, bits)
    }

    /// Write into element slot `idx` of little-endian bytes.
    pub fn write(&self, bytes: &mut [u8], idx: usize) {
        let w = self.dtype().byte_width();
        let dst = &mut bytes[idx * w..idx * w + w];
        let bits = self.bits();
        if w == 2 {
            dst.copy_from_slice(&(bits as u16).to_le_bytes());
        } else {
            dst.copy_from_slice(&bits.to_le_bytes());
        }
    }

    /// Decode a whole buffer.
    pub fn read_all(dtype: DType, bytes: &[u8]) -> Vec<Scalar> {
        (0..bytes.len() / dtype.byte_width()).map(|i| Scalar::read(dtype, bytes, i)).collect()
    }

    pub fn encode_all(values: &[Scalar]) -> Vec<u8> {
        let mut out = Vec::with_capacity(values.iter().map(|v| v.dtype().byte_width()).sum());
        for v in values {
            let bits = v.bits();
            if v.dtype().byte_width() == 2 {
                out.extend_from_slice(&(bits as u16).to_le_bytes());
            } else {
                out.extend_from_slice(&bits.to_le_bytes());
            }
        }
        out
    }

    /// Textual literal as the IR printers emit it. Non-finite floats are
    /// written as raw hex bits so NaN payloads survive a round trip.
    pub fn literal(&self) -> String {
        match *self {
            Scalar::I16(v) => v.to_string(),
            Scalar::I32(v) => v.to_string(),
            Scalar::Bf16(v) if v.is_finite() => format!("{:?}", v.to_f32()),
            Scalar::F32(v) if v.is_finite() => format!("{v:?}"),
            Scalar::Bf16(v) => format!("0x{:04X}", v.to_bits()),
            Scalar::F32(v) => format!("0x{:08X}", v.to_bits()),
        }
    }

    /// Parse a literal in `dtype`. Floats accept decimal, `inf`/`-inf`/`nan`
    /// and `0x`-prefixed bit patterns.
    pub fn parse_literal(text: &str, dtype: DType) -> Result<Scalar, String> {
        let bad = || format!("`{text}` is not a valid {dtype} literal");
        if dtype.is_float() {
            if let Some(hex) = text.strip_prefix("0x") {
                let bits = u32::from_str_radix(hex, 16).map_err(|_| bad())?;
                if dtype == DType::BFloat16 && bits > u16::MAX as u32 {
                    return Err(bad());
                }
                return Ok(Scalar::from_bits(dtype, bits));
            }
            let v: f32 = text.parse().map_err(|_| bad())?;
            Ok(match dtype {
                DType::BFloat16 => Scalar::Bf16(bf16_round(v)),
                _ => Scalar::F32(v),
            })
        } else {
            let v: i64 = text.parse().map_err(|_| bad())?;
            match dtype {
                DType::Int16 => i16::try_from(v).map(Scalar::I16).map_err(|_| bad()),
                _ => i32::try_from(v).map(Scalar::I32).map_err(|_| bad()),
            }
        }
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.literal())
    }
}
