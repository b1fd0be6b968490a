//! End-to-end evaluation of compiled ops: bind module values, run each op on
//! the NPU path or the CPU path, and compare against the oracle.

use std::collections::HashMap;
use std::fmt;

use crate::categorize::IntrinsicKind;
use crate::host::{finalize_reduction, CompiledOp, OffloadDecision};
use crate::ir::{DType, IrModule, Stmt, TensorType};
use crate::reference::{matmul_ref, reduce_ref_from, transpose_ref, HostTensor, RefError};
use crate::runtime::{run_host_program, ProgramLoader, RuntimeError, RuntimeSession};
use crate::scalar::{Combiner, Scalar};
use crate::sim::CostReport;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Value {
    Scalar(Scalar),
    Tensor(HostTensor),
}

impl Value {
    pub fn dtype(&self) -> DType {
        match self {
            Value::Scalar(s) => s.dtype(),
            Value::Tensor(t) => t.dtype(),
        }
    }

    pub fn as_tensor(&self) -> Option<&HostTensor> {
        match self {
            Value::Tensor(t) => Some(t),
            Value::Scalar(_) => None,
        }
    }

    fn cast(&self, dtype: DType) -> Value {
        match self {
            Value::Scalar(s) => Value::Scalar(s.cast(dtype)),
            Value::Tensor(t) => {
                let v: Vec<Scalar> = t.scalars().iter().map(|s| s.cast(dtype)).collect();
                let ty = t.ty().with_dtype(dtype);
                Value::Tensor(HostTensor::from_scalars(ty, &v).expect("cast keeps the shape"))
            }
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Scalar(s) => write!(f, "{}", s.literal()),
            Value::Tensor(t) => write!(f, "{}", t.ty()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PipelineError {
    #[error("value %{0} is not bound")]
    Unbound(String),
    #[error("argument %{name}: {message}")]
    BadArgument { name: String, message: String },
    #[error("op %{0} has no compiled kind")]
    NoKind(String),
    #[error(transparent)]
    Reference(#[from] RefError),
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
}

/// Bound SSA values by name.
pub type Env = HashMap<String, Value>;

/// Bind arguments, constants and empty tensors of a module.
pub fn module_env(m: &IrModule, args: &HashMap<String, HostTensor>) -> Result<Env, PipelineError> {
    let mut env = Env::new();
    for s in &m.stmts {
        match s {
            Stmt::Arg { name, ty } => {
                let t = args.get(name).ok_or_else(|| PipelineError::Unbound(name.clone()))?;
                if t.ty() != ty {
                    return Err(PipelineError::BadArgument { name: name.clone(), message: format!("expected {ty}, got {}", t.ty()) });
                }
                env.insert(name.clone(), Value::Tensor(t.clone()));
            }
            Stmt::Constant { name, value } => {
                env.insert(name.clone(), Value::Scalar(*value));
            }
            Stmt::Empty { name, ty } => {
                env.insert(name.clone(), Value::Tensor(HostTensor::zeros(ty.clone())));
            }
            Stmt::Linalg(_) => {}
        }
    }
    Ok(env)
}

struct Operands<'e> {
    kind: IntrinsicKind,
    inputs: Vec<&'e HostTensor>,
    init: &'e Value,
}

fn operands<'e>(op: &CompiledOp, env: &'e Env) -> Result<Operands<'e>, PipelineError> {
    let kind = op.kind.ok_or_else(|| PipelineError::NoKind(op.result.clone()))?;
    let get = |n: &String| env.get(n).ok_or_else(|| PipelineError::Unbound(n.clone()));
    let mut inputs = Vec::new();
    for n in &op.operands {
        let v = get(n)?;
        inputs.push(v.as_tensor().ok_or_else(|| PipelineError::BadArgument { name: n.clone(), message: "expected a tensor".into() })?);
    }
    let init = get(op.init.as_ref().ok_or_else(|| PipelineError::NoKind(op.result.clone()))?)?;
    Ok(Operands { kind, inputs, init })
}

fn reference(o: &Operands) -> Result<Value, PipelineError> {
    Ok(match o.kind {
        IntrinsicKind::Transpose => Value::Tensor(transpose_ref(o.inputs[0])?),
        IntrinsicKind::Matmul => Value::Tensor(matmul_ref(o.inputs[0], o.inputs[1], o.init.dtype())?),
        k => {
            let Value::Scalar(init) = o.init else {
                return Err(PipelineError::BadArgument { name: "init".into(), message: "expected a scalar".into() });
            };
            Value::Scalar(reduce_ref_from(k, *init, &o.inputs[0].scalars())?)
        }
    })
}

/// Evaluate on the CPU path.
pub fn run_cpu(op: &CompiledOp, env: &Env) -> Result<Value, PipelineError> {
    reference(&operands(op, env)?)
}

/// The value a correct implementation of `op`'s placement produces. For
/// converted ops the inputs are narrowed to bfloat16 first and the result
/// widened back.
pub fn oracle(op: &CompiledOp, env: &Env) -> Result<Value, PipelineError> {
    let o = operands(op, env)?;
    let Some((from, to)) = op.decision.conversion() else {
        return reference(&o);
    };
    let narrow: Vec<HostTensor> = o.inputs.iter().map(|t| match Value::Tensor((*t).clone()).cast(to) {
        Value::Tensor(t) => t,
        Value::Scalar(_) => unreachable!("tensors stay tensors"),
    }).collect();
    // reductions accumulate in bfloat16; a matmul keeps its float32 output
    let init = if o.kind.is_reduction() { o.init.cast(to) } else { o.init.clone() };
    let r = reference(&Operands { kind: o.kind, inputs: narrow.iter().collect(), init: &init })?;
    Ok(r.cast(from))
}

/// Evaluate on the NPU path, returning the value and the invocation cost.
pub fn run_npu(session: &mut RuntimeSession, op: &CompiledOp, loader: &dyn ProgramLoader, env: &Env) -> Result<(Value, CostReport), PipelineError> {
    let o = operands(op, env)?;
    let host = op.host.as_ref().ok_or_else(|| PipelineError::NoKind(op.result.clone()))?;
    let inputs: Vec<Vec<u8>> = o.inputs.iter().map(|t| t.bytes().to_vec()).collect();
    let outputs = run_host_program(session, host, loader, &inputs)?;
    let cost = session.finish_invocation();
    let out = outputs.into_iter().next().ok_or_else(|| PipelineError::NoKind(op.result.clone()))?;
    let params = op.decision.params().expect("NPU ops have params");
    let conv = op.decision.conversion();
    let value = match o.kind {
        IntrinsicKind::Transpose => {
            let &[r, c] = o.inputs[0].ty().shape() else { unreachable!("planned transposes are rank 2") };
            Value::Tensor(HostTensor::new(TensorType::matrix(c, r, o.inputs[0].dtype()), out)?)
        }
        IntrinsicKind::Matmul => {
            let Value::Tensor(t) = o.init else { unreachable!("matmul outputs are tensors") };
            Value::Tensor(HostTensor::new(t.ty().clone(), out)?)
        }
        k => {
            let Value::Scalar(init) = o.init else { unreachable!("reductions have scalar inits") };
            let host_dtype = conv.map_or(params.dtype, |(from, _)| from);
            let partials: Vec<Scalar> = Scalar::read_all(host_dtype, &out).iter().map(|s| s.cast(params.dtype)).collect();
            let folded = finalize_reduction(&partials, k)?;
            let comb = k.combiner().expect("reductions have combiners");
            Value::Scalar(init.cast(params.dtype).combine(folded, comb).cast(host_dtype))
        }
    };
    Ok((value, cost))
}

#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    Exact,
    Within { error: f64, tolerance: f64 },
    Mismatch(String),
}

impl Verdict {
    pub fn passed(&self) -> bool {
        !matches!(self, Verdict::Mismatch(_))
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Exact => f.write_str("exact match"),
            Verdict::Within { error, tolerance } => write!(f, "within tolerance (rel {error:.3e} <= {tolerance:.0e})"),
            Verdict::Mismatch(m) => write!(f, "mismatch: {m}"),
        }
    }
}

/// Allowed relative error for an op, or `None` when results must match
/// bit for bit.
pub fn tolerance(kind: IntrinsicKind, compute_dtype: DType) -> Option<f64> {
    match (kind, compute_dtype) {
        (_, DType::Int16 | DType::Int32) | (IntrinsicKind::Transpose, _) => None,
        (IntrinsicKind::Maxval | IntrinsicKind::Minval, _) => None,
        (IntrinsicKind::Matmul, _) => Some(1e-2),
        (_, DType::Float32) => Some(1e-5),
        (_, DType::BFloat16) => Some(1e-2),
    }
}

/// Denominator floor for relative errors.
const REL_EPS: f64 = 1e-30;

/// Compare a result against the oracle. Scalars use
/// `|got - want| / max(|want|, eps)`; tensors use the largest absolute
/// difference over the largest magnitude in `want`.
pub fn compare(got: &Value, want: &Value, tol: Option<f64>) -> Verdict {
    let (g, w) = match (got, want) {
        (Value::Scalar(g), Value::Scalar(w)) => (vec![*g], vec![*w]),
        (Value::Tensor(g), Value::Tensor(w)) => {
            if g.ty() != w.ty() {
                return Verdict::Mismatch(format!("result is {}, expected {}", g.ty(), w.ty()));
            }
            (g.scalars(), w.scalars())
        }
        _ => return Verdict::Mismatch("result kind differs".into()),
    };
    if g == w {
        return Verdict::Exact;
    }
    let Some(tolerance) = tol else {
        let k = g.iter().zip(&w).position(|(a, b)| a != b).unwrap_or(0);
        return Verdict::Mismatch(format!("element {k} is {}, expected {}", g[k].literal(), w[k].literal()));
    };
    let nan_mismatch = g.iter().zip(&w).any(|(a, b)| a.to_f64().is_nan() != b.to_f64().is_nan());
    if nan_mismatch {
        return Verdict::Mismatch("NaN where the oracle has a number or the reverse".into());
    }
    let diff = g.iter().zip(&w).map(|(a, b)| if a == b { 0.0 } else { (a.to_f64() - b.to_f64()).abs() }).fold(0.0, f64::max);
    let scale = w.iter().map(|b| b.to_f64().abs()).filter(|v| v.is_finite()).fold(0.0, f64::max).max(REL_EPS);
    let error = diff / scale;
    if error <= tolerance {
        Verdict::Within { error, tolerance }
    } else {
        Verdict::Mismatch(format!("relative error {error:.3e} exceeds {tolerance:.0e}"))
    }
}

/// Check a result of `op` against its oracle.
pub fn check(op: &CompiledOp, env: &Env, got: &Value) -> Result<Verdict, PipelineError> {
    let want = oracle(op, env)?;
    let kind = op.kind.ok_or_else(|| PipelineError::NoKind(op.result.clone()))?;
    let compute = match &op.decision {
        OffloadDecision::Cpu(_) => return Ok(compare(got, &want, None)),
        d => d.params().expect("NPU ops have params").dtype,
    };
    Ok(compare(got, &want, tolerance(kind, compute)))
}

/// The combiner identity check used by reports: whether a reduction result
/// equals its init (typically a sign the input was empty or all identities).
pub fn is_identity(kind: IntrinsicKind, v: &Value) -> bool {
    match (kind.combiner(), v) {
        (Some(c), Value::Scalar(s)) => *s == Scalar::identity(c, s.dtype()),
        _ => false,
    }
}

#[allow(dead_code)]
fn _combiner_used(_: Combiner) {}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::host::{compile_module, DeviceInfo};
    use crate::kernels::KernelLibrary;
    use crate::runtime::RuntimeConfig;

    fn sum_module(n: usize, dt: &str, op: &str) -> IrModule {
        crate::ir::parse_module(&format!(
            "module {{\n  %x = arg : tensor<{n}x{dt}>\n  %z = arith.constant 0 : {dt}\n  \
             %s = linalg.reduce ins(%x : tensor<{n}x{dt}>) outs(%z : {dt}) dimensions = [0] {{\n  \
             ^bb0(%a : {dt}, %b : {dt}):\n    %r = arith.{op} %a, %b : {dt}\n    linalg.yield %r : {dt}\n  }}\n}}\n"
        ))
        .unwrap()
    }

    fn npu_value(m: &IrModule, args: HashMap<String, HostTensor>) -> (Value, Value, CostReport) {
        let ops = compile_module(m, &DeviceInfo::default(), &KernelLibrary::builtin(), false).unwrap();
        let env = module_env(m, &args).unwrap();
        let mut loader = HashMap::new();
        loader.insert(ops[0].program_ref(), ops[0].device.clone().unwrap());
        let mut s = RuntimeSession::new(RuntimeConfig::default());
        let (v, c) = run_npu(&mut s, &ops[0], &loader, &env).unwrap();
        (v, oracle(&ops[0], &env).unwrap(), c)
    }

    #[test]
    fn sixteen_tile_sum_wraps() {
        let m = sum_module(262144, "i32", "addi");
        let v: Vec<Scalar> = (0..262144).map(Scalar::I32).collect();
        let t = HostTensor::from_scalars(TensorType::vector(262144, DType::Int32), &v).unwrap();
        let (got, want, cost) = npu_value(&m, HashMap::from([("x".to_string(), t)]));
        let expect = (34359607296u64 % (1 << 32)) as u32 as i32;
        assert_eq!(got, Value::Scalar(Scalar::I32(expect)));
        assert_eq!(want, got);
        assert!(cost.setup > 0.0 && cost.compute > 0.0);
    }

    #[test]
    fn tolerance_classes() {
        assert_eq!(tolerance(IntrinsicKind::Sum, DType::Int32), None);
        assert_eq!(tolerance(IntrinsicKind::Maxval, DType::BFloat16), None);
        assert_eq!(tolerance(IntrinsicKind::Sum, DType::Float32), Some(1e-5));
        assert_eq!(tolerance(IntrinsicKind::Product, DType::BFloat16), Some(1e-2));
        let a = Value::Scalar(Scalar::F32(1.0));
        let b = Value::Scalar(Scalar::F32(1.000001));
        assert!(compare(&a, &b, Some(1e-5)).passed());
        assert!(!compare(&a, &b, None).passed());
        assert_eq!(compare(&a, &a, None), Verdict::Exact);
        let nan = Value::Scalar(Scalar::F32(f32::NAN));
        assert!(!compare(&nan, &a, Some(1.0)).passed());
    }
}
