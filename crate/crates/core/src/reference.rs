//! Sequential CPU implementations of every supported intrinsic. They serve
//! both as the fallback path and as the oracle for simulated results.
//!
//! Reductions fold left to right from the identity (or a given initial
//! value). Integer arithmetic wraps at the dtype width and bfloat16 rounds
//! after every operation. Matrix products accumulate in the output dtype
//! with the k loop ascending.

use crate::categorize::IntrinsicKind;
use crate::ir::{DType, TensorType};
use crate::scalar::{Combiner, Scalar};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RefError {
    #[error("{0} of an empty array has no value")]
    EmptyTensor(IntrinsicKind),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("{0} is not a reduction")]
    NotAReduction(IntrinsicKind),
}

/// A tensor type with its row-major little-endian contents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HostTensor {
    ty: TensorType,
    bytes: Vec<u8>,
}

impl HostTensor {
    pub fn new(ty: TensorType, bytes: Vec<u8>) -> Result<Self, RefError> {
        if bytes.len() != ty.byte_size() {
            return Err(RefError::ShapeMismatch(format!("{ty} needs {} bytes, got {}", ty.byte_size(), bytes.len())));
        }
        Ok(HostTensor { ty, bytes })
    }

    pub fn from_scalars(ty: TensorType, values: &[Scalar]) -> Result<Self, RefError> {
        if values.iter().any(|v| v.dtype() != ty.dtype()) {
            return Err(RefError::ShapeMismatch(format!("values are not all {}", ty.dtype())));
        }
        Self::new(ty, Scalar::encode_all(values))
    }

    pub fn zeros(ty: TensorType) -> Self {
        let bytes = vec![0; ty.byte_size()];
        HostTensor { ty, bytes }
    }

    pub fn ty(&self) -> &TensorType {
        &self.ty
    }

    pub fn dtype(&self) -> DType {
        self.ty.dtype()
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.bytes
    }

    pub fn scalars(&self) -> Vec<Scalar> {
        Scalar::read_all(self.ty.dtype(), &self.bytes)
    }

    pub fn get(&self, idx: usize) -> Scalar {
        Scalar::read(self.ty.dtype(), &self.bytes, idx)
    }
}

fn combiner(kind: IntrinsicKind) -> Result<Combiner, RefError> {
    kind.combiner().ok_or(RefError::NotAReduction(kind))
}

/// Fold `values` left to right starting from `init`.
pub fn reduce_ref_from(kind: IntrinsicKind, init: Scalar, values: &[Scalar]) -> Result<Scalar, RefError> {
    let c = combiner(kind)?;
    Ok(values.iter().fold(init, |acc, x| acc.combine(*x, c)))
}

/// Fold a list of values of `dtype` from the combiner's identity. Maxval and
/// minval of nothing are errors.
pub fn reduce_values(kind: IntrinsicKind, dtype: DType, values: &[Scalar]) -> Result<Scalar, RefError> {
    let c = combiner(kind)?;
    if values.is_empty() && matches!(c, Combiner::Max | Combiner::Min) {
        return Err(RefError::EmptyTensor(kind));
    }
    reduce_ref_from(kind, Scalar::identity(c, dtype), values)
}

/// Full reduction of a tensor, elements taken in row-major order.
pub fn reduce_ref(kind: IntrinsicKind, t: &HostTensor) -> Result<Scalar, RefError> {
    reduce_values(kind, t.dtype(), &t.scalars())
}

pub fn transpose_ref(t: &HostTensor) -> Result<HostTensor, RefError> {
    let &[r, c] = t.ty.shape() else {
        return Err(RefError::ShapeMismatch(format!("transpose needs a rank-2 tensor, got {}", t.ty)));
    };
    let w = t.dtype().byte_width();
    let mut out = vec![0u8; t.bytes.len()];
    for i in 0..r {
        for j in 0..c {
            let src = (i * c + j) * w;
            let dst = (j * r + i) * w;
            out[dst..dst + w].copy_from_slice(&t.bytes[src..src + w]);
        }
    }
    Ok(HostTensor { ty: TensorType::matrix(c, r, t.dtype()), bytes: out })
}

/// `a · b` accumulated in `out_dtype`; both inputs are widened first.
pub fn matmul_ref(a: &HostTensor, b: &HostTensor, out_dtype: DType) -> Result<HostTensor, RefError> {
    let (&[m, k], &[k2, n]) = (a.ty.shape(), b.ty.shape()) else {
        return Err(RefError::ShapeMismatch("matmul needs rank-2 operands".into()));
    };
    if k != k2 {
        return Err(RefError::ShapeMismatch(format!("inner extents {k} and {k2} differ")));
    }
    if a.dtype() != b.dtype() {
        return Err(RefError::ShapeMismatch(format!("operand dtypes {} and {} differ", a.dtype(), b.dtype())));
    }
    let av: Vec<Scalar> = a.scalars().iter().map(|s| s.cast(out_dtype)).collect();
    let bv: Vec<Scalar> = b.scalars().iter().map(|s| s.cast(out_dtype)).collect();
    let mut c = Vec::with_capacity(m * n);
    for i in 0..m {
        for j in 0..n {
            let mut acc = Scalar::zero(out_dtype);
            for p in 0..k {
                acc = acc.combine(av[i * k + p].combine(bv[p * n + j], Combiner::Mul), Combiner::Add);
            }
            c.push(acc);
        }
    }
    HostTensor::from_scalars(TensorType::matrix(m, n, out_dtype), &c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn i32s(v: &[i32]) -> Vec<Scalar> {
        v.iter().map(|x| Scalar::I32(*x)).collect()
    }

    fn f32s(v: &[f32]) -> Vec<Scalar> {
        v.iter().map(|x| Scalar::F32(*x)).collect()
    }

    #[test]
    fn sum_wraps() {
        let v: Vec<i32> = (1..=100000).collect();
        let t = HostTensor::from_scalars(TensorType::vector(100000, DType::Int32), &i32s(&v)).unwrap();
        assert_eq!(reduce_ref(IntrinsicKind::Sum, &t).unwrap(), Scalar::I32((5000050000u64 % (1 << 32)) as u32 as i32));
        assert_eq!(reduce_ref(IntrinsicKind::Sum, &t).unwrap(), Scalar::I32(705082704));
    }

    #[test]
    fn products_minimums_and_empties() {
        for dt in DType::ALL {
            let ones = vec![Scalar::from_f64(dt, 1.0); 4];
            assert_eq!(reduce_values(IntrinsicKind::Product, dt, &ones).unwrap(), Scalar::from_f64(dt, 1.0));
        }
        assert_eq!(reduce_values(IntrinsicKind::Minval, DType::Float32, &f32s(&[3.5, -2.0, 7.0])).unwrap(), Scalar::F32(-2.0));
        assert_eq!(reduce_values(IntrinsicKind::Maxval, DType::Int16, &[]), Err(RefError::EmptyTensor(IntrinsicKind::Maxval)));
        assert_eq!(reduce_values(IntrinsicKind::Sum, DType::Int16, &[]).unwrap(), Scalar::I16(0));
        assert!(matches!(reduce_values(IntrinsicKind::Transpose, DType::Int16, &[]), Err(RefError::NotAReduction(_))));
    }

    #[test]
    fn bf16_sum_rounds_each_step() {
        // 256 + 1 is not representable; each step rounds back to 256
        let mut v = vec![Scalar::from_f64(DType::BFloat16, 256.0)];
        v.extend(std::iter::repeat_n(Scalar::from_f64(DType::BFloat16, 1.0), 8));
        assert_eq!(reduce_values(IntrinsicKind::Sum, DType::BFloat16, &v).unwrap().to_f64(), 256.0);
    }

    #[test]
    fn transpose_examples() {
        let one = HostTensor::from_scalars(TensorType::matrix(1, 1, DType::Int32), &i32s(&[7])).unwrap();
        assert_eq!(transpose_ref(&one).unwrap(), one);
        let a = HostTensor::from_scalars(TensorType::matrix(2, 3, DType::Int32), &i32s(&[1, 2, 3, 4, 5, 6])).unwrap();
        let t = transpose_ref(&a).unwrap();
        assert_eq!(t.ty().shape(), &[3, 2]);
        assert_eq!(t.scalars(), i32s(&[1, 4, 2, 5, 3, 6]));
        let v = HostTensor::zeros(TensorType::vector(3, DType::Int32));
        assert!(transpose_ref(&v).is_err());
    }

    #[test]
    fn matmul_examples() {
        let a = HostTensor::from_scalars(TensorType::matrix(1, 1, DType::Int16), &[Scalar::I16(3)]).unwrap();
        let b = HostTensor::from_scalars(TensorType::matrix(1, 1, DType::Int16), &[Scalar::I16(5)]).unwrap();
        assert_eq!(matmul_ref(&a, &b, DType::Int32).unwrap().scalars(), vec![Scalar::I32(15)]);

        let id: Vec<Scalar> = (0..16).map(|i| Scalar::I16((i % 5 == 0) as i16)).collect();
        let r: Vec<Scalar> = (0..16).map(|i| Scalar::I16(i * 37 - 200)).collect();
        let idt = HostTensor::from_scalars(TensorType::matrix(4, 4, DType::Int16), &id).unwrap();
        let rt = HostTensor::from_scalars(TensorType::matrix(4, 4, DType::Int16), &r).unwrap();
        let widened: Vec<Scalar> = r.iter().map(|s| s.cast(DType::Int32)).collect();
        assert_eq!(matmul_ref(&idt, &rt, DType::Int32).unwrap().scalars(), widened);

        let bad = HostTensor::zeros(TensorType::matrix(3, 4, DType::Int16));
        assert!(matches!(matmul_ref(&a, &bad, DType::Int32), Err(RefError::ShapeMismatch(_))));
    }

    #[test]
    fn host_tensor_checks_length() {
        assert!(HostTensor::new(TensorType::vector(4, DType::Int32), vec![0; 15]).is_err());
        assert!(HostTensor::from_scalars(TensorType::vector(1, DType::Int32), &[Scalar::I16(1)]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]

        #[test]
        fn transpose_is_an_involution(seed in any::<u64>()) {
            let n = 512 * 256;
            let v: Vec<Scalar> = (0..n as u64).map(|i| Scalar::I32((i.wrapping_mul(seed | 1) >> 7) as i32)).collect();
            let t = HostTensor::from_scalars(TensorType::matrix(512, 256, DType::Int32), &v).unwrap();
            prop_assert_eq!(transpose_ref(&transpose_ref(&t).unwrap()).unwrap(), t);
        }
    }
}
