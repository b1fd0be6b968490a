//! External kernels callable from core programs via `func.call`.
//!
//! | name                          | arguments                      | result |
//! |-------------------------------|--------------------------------|--------|
//! | `vec_reduce_<comb>_<dt>`      | object, accumulator            | `dt`   |
//! | `matmul_i16_i32`              | a, b, c objects, m, k, n       | none   |
//! | `matmul_bf16_f32`             | a, b, c objects, m, k, n       | none   |
//! | `zero_<dt>`                   | object                         | none   |
//!
//! `<comb>` is one of add, mul, max, min and `<dt>` one of i16, i32, bf16,
//! f32. Vector reductions fold element `i` into lane `i % lanes`, fold lanes
//! 0..lanes in order, then combine the result into the accumulator. Matmul
//! computes `c += a·b` row-major with the k loop ascending and accumulates
//! in the output type.

use crate::device::lanes;
use crate::ir::DType;
use crate::scalar::{Combiner, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArgKind {
    Obj(DType),
    Scalar(DType),
    Int,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Signature {
    pub args: Vec<ArgKind>,
    pub ret: Option<DType>,
}

/// An argument as the simulator passes it; objects are written back after
/// the call.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelArg {
    Obj(Vec<Scalar>),
    Scalar(Scalar),
    Int(i64),
}

/// What a call returned and how much vector work it did.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelOutcome {
    pub ret: Option<Scalar>,
    pub vector_ops: usize,
    /// Element type the vector unit operated on.
    pub compute_dtype: DType,
}

fn combiner_of(name: &str) -> Option<Combiner> {
    Some(match name {
        "add" => Combiner::Add,
        "mul" => Combiner::Mul,
        "max" => Combiner::Max,
        "min" => Combiner::Min,
        _ => return None,
    })
}

enum Builtin {
    Reduce(Combiner, DType),
    Matmul(DType, DType),
    Zero(DType),
}

fn decode(name: &str) -> Option<Builtin> {
    if let Some(rest) = name.strip_prefix("vec_reduce_") {
        let (comb, dt) = rest.split_once('_')?;
        return Some(Builtin::Reduce(combiner_of(comb)?, dt.parse().ok()?));
    }
    if let Some(dt) = name.strip_prefix("zero_") {
        return Some(Builtin::Zero(dt.parse().ok()?));
    }
    match name {
        "matmul_i16_i32" => Some(Builtin::Matmul(DType::Int16, DType::Int32)),
        "matmul_bf16_f32" => Some(Builtin::Matmul(DType::BFloat16, DType::Float32)),
        _ => None,
    }
}

/// Name of the vector reduction kernel for a combiner and dtype.
pub fn reduce_kernel_name(combiner: Combiner, dtype: DType) -> String {
    format!("vec_reduce_{}_{}", combiner.name(), dtype.mnemonic())
}

/// Name of the matmul micro-kernel for an input/output dtype pair.
pub fn matmul_kernel_name(input: DType, output: DType) -> Option<String> {
    let name = format!("matmul_{}_{}", input.mnemonic(), output.mnemonic());
    matches!(decode(&name), Some(Builtin::Matmul(..))).then_some(name)
}

pub fn signature(name: &str) -> Option<Signature> {
    Some(match decode(name)? {
        Builtin::Reduce(_, d) => Signature { args: vec![ArgKind::Obj(d), ArgKind::Scalar(d)], ret: Some(d) },
        Builtin::Matmul(i, o) => Signature {
            args: vec![ArgKind::Obj(i), ArgKind::Obj(i), ArgKind::Obj(o), ArgKind::Int, ArgKind::Int, ArgKind::Int],
            ret: None,
        },
        Builtin::Zero(d) => Signature { args: vec![ArgKind::Obj(d)], ret: None },
    })
}

/// Lane-partial reduction of `data` folded into `acc`.
pub fn lane_reduce(combiner: Combiner, data: &[Scalar], acc: Scalar) -> Scalar {
    let dt = acc.dtype();
    let l = lanes(dt);
    let mut partials = vec![Scalar::identity(combiner, dt); l];
    for (i, x) in data.iter().enumerate() {
        let p = &mut partials[i % l];
        *p = p.combine(*x, combiner);
    }
    let folded = partials
        .into_iter()
        .fold(Scalar::identity(combiner, dt), |t, p| t.combine(p, combiner));
    acc.combine(folded, combiner)
}

/// Run a builtin. Errors describe the offending argument; an unknown name is
/// reported as `None`.
pub fn call(name: &str, args: &mut [KernelArg]) -> Option<Result<KernelOutcome, String>> {
    let b = decode(name)?;
    Some(run(b, args))
}

fn run(b: Builtin, args: &mut [KernelArg]) -> Result<KernelOutcome, String> {
    match b {
        Builtin::Reduce(comb, dt) => {
            let [KernelArg::Obj(data), KernelArg::Scalar(acc)] = args else {
                return Err("expects an object and an accumulator".into());
            };
            if acc.dtype() != dt || data.iter().any(|x| x.dtype() != dt) {
                return Err(format!("expects {dt} operands"));
            }
            let ret = lane_reduce(comb, data, *acc);
            Ok(KernelOutcome { ret: Some(ret), vector_ops: data.len().div_ceil(lanes(dt)), compute_dtype: dt })
        }
        Builtin::Zero(dt) => {
            let [KernelArg::Obj(data)] = args else {
                return Err("expects one object".into());
            };
            data.iter_mut().for_each(|x| *x = Scalar::zero(dt));
            Ok(KernelOutcome { ret: None, vector_ops: data.len().div_ceil(lanes(dt)), compute_dtype: dt })
        }
        Builtin::Matmul(idt, odt) => {
            let [KernelArg::Obj(a), KernelArg::Obj(bm), KernelArg::Obj(c), KernelArg::Int(m), KernelArg::Int(k), KernelArg::Int(n)] =
                args
            else {
                return Err("expects three objects and three extents".into());
            };
            let (m, k, n) = (*m as usize, *k as usize, *n as usize);
            if a.len() < m * k || bm.len() < k * n || c.len() < m * n {
                return Err(format!("objects too small for a {m}x{k}x{n} product"));
            }
            matmul_accumulate(a, bm, c, m, k, n, odt);
            Ok(KernelOutcome { ret: None, vector_ops: (m * k * n).div_ceil(lanes(idt)), compute_dtype: idt })
        }
    }
}

/// `c[i][j] += Σ_k a[i][k]·b[k][j]` with products and sums in `odt`.
pub fn matmul_accumulate(a: &[Scalar], b: &[Scalar], c: &mut [Scalar], m: usize, k: usize, n: usize, odt: DType) {
    for i in 0..m {
        for j in 0..n {
            let mut acc = c[i * n + j];
            for kk in 0..k {
                let prod = a[i * k + kk].cast(odt).combine(b[kk * n + j].cast(odt), Combiner::Mul);
                acc = acc.combine(prod, Combiner::Add);
            }
            c[i * n + j] = acc;
        }
    }
}
