//! Offload planning and the host command stream.
//!
//! The host stream uses a small op set: `NUM_DEVICES`, `INIT`,
//! `ALLOCATE_BUFFER`, `BUFFER_MAP`, `BUFFER_SYNC`, `RUN` and `WAIT`, one op
//! per line with `key=value` arguments:
//!
//! ```text
//! NUM_DEVICES
//! INIT device=0 program=op0.dprog
//! ALLOCATE_BUFFER id=0 bytes=1048576
//! ALLOCATE_BUFFER id=1 bytes=64
//! BUFFER_MAP id=0
//! BUFFER_MAP id=1
//! BUFFER_SYNC id=0 dir=to_device
//! RUN ids=0,1
//! WAIT
//! BUFFER_SYNC id=1 dir=from_device
//! ```
//!
//! A converted buffer carries `convert=float32->bfloat16`: `bytes` is the
//! device size and the host side holds float32.

use std::fmt;

use crate::categorize::{categorize_op, Category, IntrinsicKind};
use crate::device::{COMPUTE_ROWS, INTERFACE_COLUMNS, MEMORY_TILE_BYTES};
use crate::ir::{DType, IrModule, LinalgOp, TensorType, ValueType};
use crate::kernels::{specialize_template, KernelError, KernelLibrary, SpecParams};
use crate::reference::{reduce_values, RefError};
use crate::scalar::Scalar;
use crate::device::DeviceProgram;
use crate::sim::builtins;

/// Elements each reduction core folds per kernel call.
pub const REDUCE_BATCH: usize = 16384;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeviceInfo {
    pub npu_count: usize,
    pub native_dtypes: Vec<DType>,
    pub memory_tile_bytes: usize,
    pub interface_columns: usize,
}

impl Default for DeviceInfo {
    fn default() -> Self {
        DeviceInfo {
            npu_count: 1,
            native_dtypes: vec![DType::Int16, DType::BFloat16],
            memory_tile_bytes: MEMORY_TILE_BYTES,
            interface_columns: INTERFACE_COLUMNS,
        }
    }
}

impl DeviceInfo {
    pub fn without_npu() -> Self {
        DeviceInfo { npu_count: 0, ..Self::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum OffloadDecision {
    Npu(SpecParams),
    /// Inputs are narrowed from `from` to `to` on the host before the run.
    NpuWithConversion { params: SpecParams, from: DType, to: DType },
    Cpu(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Placement {
    #[serde(rename = "NPU")]
    Npu,
    #[serde(rename = "NPU-conv")]
    NpuConv,
    #[serde(rename = "CPU")]
    Cpu,
}

impl fmt::Display for Placement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Placement::Npu => "NPU",
            Placement::NpuConv => "NPU-conv",
            Placement::Cpu => "CPU",
        })
    }
}

impl OffloadDecision {
    pub fn placement(&self) -> Placement {
        match self {
            OffloadDecision::Npu(_) => Placement::Npu,
            OffloadDecision::NpuWithConversion { .. } => Placement::NpuConv,
            OffloadDecision::Cpu(_) => Placement::Cpu,
        }
    }

    pub fn params(&self) -> Option<&SpecParams> {
        match self {
            OffloadDecision::Npu(p) | OffloadDecision::NpuWithConversion { params: p, .. } => Some(p),
            OffloadDecision::Cpu(_) => None,
        }
    }

    pub fn conversion(&self) -> Option<(DType, DType)> {
        match self {
            OffloadDecision::NpuWithConversion { from, to, .. } => Some((*from, *to)),
            _ => None,
        }
    }

    /// One-line summary, e.g. `NPU (float32 emulated)` or `CPU: no NPU present`.
    pub fn describe(&self, device: &DeviceInfo) -> String {
        match self {
            OffloadDecision::Npu(p) => {
                let dt = p.dtype;
                // transposes never touch the vector unit
                if device.native_dtypes.contains(&dt) || p.extents.is_some() {
                    "NPU".to_string()
                } else {
                    format!("NPU ({} emulated)", dt.long_name())
                }
            }
            OffloadDecision::NpuWithConversion { from, to, .. } => {
                format!("NPU with conversion {} -> {}", from.long_name(), to.long_name())
            }
            OffloadDecision::Cpu(reason) => format!("CPU: {reason}"),
        }
    }
}

fn cpu(reason: impl Into<String>) -> OffloadDecision {
    OffloadDecision::Cpu(reason.into())
}

/// Choose where an intrinsic runs. `operands` lists the input tensors; for
/// matmul the output tensor follows the two inputs.
pub fn plan_offload(kind: IntrinsicKind, operands: &[TensorType], device: &DeviceInfo, allow_conversion: bool) -> OffloadDecision {
    if device.npu_count == 0 {
        return cpu("no NPU present");
    }
    let Some(first) = operands.first() else {
        return cpu("no operands");
    };
    let columns = device.interface_columns.clamp(1, INTERFACE_COLUMNS);
    match kind {
        IntrinsicKind::Sum | IntrinsicKind::Product | IntrinsicKind::Maxval | IntrinsicKind::Minval => {
            let n = first.element_count();
            if n % (columns * COMPUTE_ROWS * REDUCE_BATCH) != 0 {
                return cpu("element count not divisible by batching factor");
            }
            let (dtype, conv) = match first.dtype() {
                DType::Float32 if allow_conversion => (DType::BFloat16, true),
                d => (d, false),
            };
            let comb = kind.combiner().expect("reductions have combiners");
            let params = SpecParams {
                columns_used: columns,
                rows_per_column: COMPUTE_ROWS,
                batch_elements: REDUCE_BATCH,
                kernel: Some(builtins::reduce_kernel_name(comb, dtype)),
                identity: Some(Scalar::identity(comb, dtype)),
                ..SpecParams::new(dtype, n)
            };
            if conv {
                OffloadDecision::NpuWithConversion { params, from: DType::Float32, to: DType::BFloat16 }
            } else {
                OffloadDecision::Npu(params)
            }
        }
        IntrinsicKind::Transpose => {
            let &[r, c] = first.shape() else {
                return cpu("transpose needs a rank-2 operand");
            };
            if first.byte_size() > device.memory_tile_bytes {
                return cpu("exceeds memory tile");
            }
            OffloadDecision::Npu(SpecParams { extents: Some((r, c)), ..SpecParams::new(first.dtype(), r * c) })
        }
        IntrinsicKind::Matmul => {
            let [a, b, out] = operands else {
                return cpu("matmul needs two inputs and an output");
            };
            let (&[m, k], &[_, n]) = (a.shape(), b.shape()) else {
                return cpu("matmul needs rank-2 operands");
            };
            let (input, conv) = match (a.dtype(), out.dtype()) {
                (DType::Int16, DType::Int32) => (DType::Int16, false),
                (DType::BFloat16, DType::Float32) => (DType::BFloat16, false),
                (DType::Float32, DType::Float32) if allow_conversion => (DType::BFloat16, true),
                (i, o) => return cpu(format!("no matmul micro-kernel for {} -> {}", i.long_name(), o.long_name())),
            };
            let tile = 64;
            if m % (tile * COMPUTE_ROWS) != 0 || n % (tile * columns) != 0 || k % tile != 0 {
                return cpu("matrix extents not divisible by the tile grid");
            }
            let params = SpecParams {
                out_dtype: Some(out.dtype()),
                matmul: Some((m, k, n)),
                columns_used: columns,
                rows_per_column: COMPUTE_ROWS,
                kernel: builtins::matmul_kernel_name(input, out.dtype()),
                ..SpecParams::new(input, m * k)
            };
            if conv {
                OffloadDecision::NpuWithConversion { params, from: DType::Float32, to: DType::BFloat16 }
            } else {
                OffloadDecision::Npu(params)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyncDir {
    ToDevice,
    FromDevice,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum XrtwOp {
    NumDevices,
    Init { device: usize, program: String },
    AllocateBuffer { id: usize, bytes: usize, convert: Option<(DType, DType)> },
    BufferMap { id: usize },
    BufferSync { id: usize, dir: SyncDir },
    Run { ids: Vec<usize> },
    Wait,
}

impl fmt::Display for XrtwOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            XrtwOp::NumDevices => write!(f, "NUM_DEVICES"),
            XrtwOp::Init { device, program } => write!(f, "INIT device={device} program={program}"),
            XrtwOp::AllocateBuffer { id, bytes, convert } => {
                write!(f, "ALLOCATE_BUFFER id={id} bytes={bytes}")?;
                if let Some((a, b)) = convert {
                    write!(f, " convert={}->{}", a.long_name(), b.long_name())?;
                }
                Ok(())
            }
            XrtwOp::BufferMap { id } => write!(f, "BUFFER_MAP id={id}"),
            XrtwOp::BufferSync { id, dir } => {
                let d = match dir {
                    SyncDir::ToDevice => "to_device",
                    SyncDir::FromDevice => "from_device",
                };
                write!(f, "BUFFER_SYNC id={id} dir={d}")
            }
            XrtwOp::Run { ids } => {
                let ids: Vec<String> = ids.iter().map(|i| i.to_string()).collect();
                write!(f, "RUN ids={}", ids.join(","))
            }
            XrtwOp::Wait => write!(f, "WAIT"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct HostProgram {
    pub ops: Vec<XrtwOp>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("host program line {line}: {message}")]
pub struct HostParseError {
    pub line: usize,
    pub message: String,
}

fn long_dtype(s: &str) -> Option<DType> {
    DType::ALL.into_iter().find(|d| d.long_name() == s)
}

impl HostProgram {
    pub fn to_text(&self) -> String {
        self.ops.iter().map(|o| format!("{o}\n")).collect()
    }

    pub fn parse(text: &str) -> Result<HostProgram, HostParseError> {
        let mut ops = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let err = |m: String| HostParseError { line: i + 1, message: m };
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut words = line.split_whitespace();
            let op = words.next().unwrap_or_default();
            let mut args = std::collections::HashMap::new();
            for w in words {
                let (k, v) = w.split_once('=').ok_or_else(|| err(format!("argument `{w}` is not key=value")))?;
                if args.insert(k, v).is_some() {
                    return Err(err(format!("argument `{k}` given twice")));
                }
            }
            let mut take = |k: &str| args.remove(k).ok_or_else(|| err(format!("{op} needs `{k}=`")));
            let num = |v: &str| v.parse::<usize>().map_err(|_| err(format!("`{v}` is not a non-negative integer")));
            let parsed = match op {
                "NUM_DEVICES" => XrtwOp::NumDevices,
                "INIT" => XrtwOp::Init { device: num(take("device")?)?, program: take("program")?.to_string() },
                "ALLOCATE_BUFFER" => {
                    let id = num(take("id")?)?;
                    let bytes = num(take("bytes")?)?;
                    let convert = match args.remove("convert") {
                        None => None,
                        Some(c) => {
                            let (a, b) = c.split_once("->").ok_or_else(|| err(format!("bad conversion `{c}`")))?;
                            match (long_dtype(a), long_dtype(b)) {
                                (Some(a), Some(b)) => Some((a, b)),
                                _ => return Err(err(format!("bad conversion `{c}`"))),
                            }
                        }
                    };
                    XrtwOp::AllocateBuffer { id, bytes, convert }
                }
                "BUFFER_MAP" => XrtwOp::BufferMap { id: num(take("id")?)? },
                "BUFFER_SYNC" => {
                    let id = num(take("id")?)?;
                    let dir = match take("dir")? {
                        "to_device" => SyncDir::ToDevice,
                        "from_device" => SyncDir::FromDevice,
                        d => return Err(err(format!("unknown direction `{d}`"))),
                    };
                    XrtwOp::BufferSync { id, dir }
                }
                "RUN" => {
                    let v = take("ids")?;
                    let ids = if v.is_empty() { Vec::new() } else { v.split(',').map(num).collect::<Result<_, _>>()? };
                    XrtwOp::Run { ids }
                }
                "WAIT" => XrtwOp::Wait,
                _ => return Err(err(format!("unknown op `{op}`"))),
            };
            if let Some(k) = args.keys().next() {
                return Err(err(format!("unexpected argument `{k}`")));
            }
            ops.push(parsed);
        }
        Ok(HostProgram { ops })
    }

    /// Problems with op order and buffer use; empty when well formed.
    pub fn check(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut seen_num = false;
        let mut ids = std::collections::BTreeSet::new();
        let mut run: Option<Vec<usize>> = None;
        let mut waited = false;
        let mut synced_back = std::collections::BTreeSet::new();
        for (i, op) in self.ops.iter().enumerate() {
            match op {
                XrtwOp::NumDevices => seen_num = true,
                XrtwOp::Init { .. } if !seen_num => out.push(format!("op {i}: INIT before NUM_DEVICES")),
                XrtwOp::AllocateBuffer { id, .. } => {
                    if !ids.insert(*id) {
                        out.push(format!("op {i}: buffer {id} allocated twice"));
                    }
                }
                XrtwOp::Run { ids: r } => {
                    for id in r {
                        if !ids.contains(id) {
                            out.push(format!("op {i}: RUN uses unallocated buffer {id}"));
                        }
                    }
                    run = Some(r.clone());
                }
                XrtwOp::Wait if run.is_none() => out.push(format!("op {i}: WAIT without RUN")),
                XrtwOp::Wait => waited = true,
                XrtwOp::BufferSync { id, dir: SyncDir::FromDevice } => {
                    if !waited {
                        out.push(format!("op {i}: from-device sync of {id} before WAIT"));
                    }
                    synced_back.insert(*id);
                }
                _ => {}
            }
        }
        if ids.iter().enumerate().any(|(k, id)| k != *id) {
            out.push("buffer ids are not dense from 0".into());
        }
        if run.is_some() && !waited {
            out.push("RUN is never waited for".into());
        }
        out
    }
}

/// Emit the host stream for an NPU decision. `bindings` gives the device byte
/// size and direction of each program buffer in run order; inputs are synced
/// to the device and outputs back after the wait.
pub fn build_host_program(decision: &OffloadDecision, program_ref: &str, bindings: &[(usize, bool)]) -> Option<HostProgram> {
    decision.params()?;
    if bindings.is_empty() {
        return None;
    }
    let conv = decision.conversion();
    let mut ops = vec![XrtwOp::NumDevices, XrtwOp::Init { device: 0, program: program_ref.to_string() }];
    // reduction partials come back narrow and are widened on the host; a
    // matmul result is float32 on the device already
    let convert_output = matches!(decision, OffloadDecision::NpuWithConversion { params, .. } if params.out_dtype.is_none());
    for (id, (bytes, is_input)) in bindings.iter().enumerate() {
        let convert = if *is_input || convert_output { conv } else { None };
        ops.push(XrtwOp::AllocateBuffer { id, bytes: *bytes, convert });
    }
    for id in 0..bindings.len() {
        ops.push(XrtwOp::BufferMap { id });
    }
    for (id, (_, is_input)) in bindings.iter().enumerate() {
        if *is_input {
            ops.push(XrtwOp::BufferSync { id, dir: SyncDir::ToDevice });
        }
    }
    ops.push(XrtwOp::Run { ids: (0..bindings.len()).collect() });
    ops.push(XrtwOp::Wait);
    for (id, (_, is_input)) in bindings.iter().enumerate() {
        if !*is_input {
            ops.push(XrtwOp::BufferSync { id, dir: SyncDir::FromDevice });
        }
    }
    Some(HostProgram { ops })
}

/// Bindings of a device program as `(device bytes, is_input)`.
pub fn program_bindings(p: &DeviceProgram) -> Vec<(usize, bool)> {
    p.bindings().into_iter().map(|(h, d)| (h.obj.bytes(), d == crate::device::Direction::Input)).collect()
}

/// Combine per-core partials on the host.
pub fn finalize_reduction(partials: &[Scalar], kind: IntrinsicKind) -> Result<Scalar, RefError> {
    let dtype = partials.first().map(|p| p.dtype()).ok_or(RefError::EmptyTensor(kind))?;
    reduce_values(kind, dtype, partials)
}

/// One linalg op after planning.
#[derive(Debug, Clone, PartialEq)]
pub struct CompiledOp {
    pub index: usize,
    /// Module-level name of the op's result.
    pub result: String,
    pub kind: Option<IntrinsicKind>,
    pub dtype: DType,
    pub operands: Vec<String>,
    pub init: Option<String>,
    pub decision: OffloadDecision,
    pub device: Option<DeviceProgram>,
    pub host: Option<HostProgram>,
}

impl CompiledOp {
    pub fn program_ref(&self) -> String {
        format!("op{}.dprog", self.index)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CompileError {
    #[error("op %{result}: {message}")]
    Unsupported { result: String, message: String },
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

fn tensor(ty: &ValueType) -> Option<TensorType> {
    ty.as_tensor().cloned()
}

/// Plan, specialize and emit host streams for every op of a module.
/// Unsupported ops are compile errors; planner rejections become CPU ops.
pub fn compile_module(
    m: &IrModule,
    device: &DeviceInfo,
    library: &KernelLibrary,
    allow_conversion: bool,
) -> Result<Vec<CompiledOp>, CompileError> {
    let mut out = Vec::new();
    for (index, op) in m.ops().enumerate() {
        out.push(compile_op(index, op, device, library, allow_conversion)?);
    }
    Ok(out)
}

fn compile_op(index: usize, op: &LinalgOp, device: &DeviceInfo, library: &KernelLibrary, allow_conversion: bool) -> Result<CompiledOp, CompileError> {
    let kind = match categorize_op(op) {
        Category::Kind(k) => k,
        Category::Unsupported(message) => return Err(CompileError::Unsupported { result: op.result.clone(), message }),
    };
    let mut operands: Vec<TensorType> = op.inputs.iter().filter_map(|o| tensor(&o.ty)).collect();
    if kind == IntrinsicKind::Matmul {
        operands.extend(tensor(&op.init.ty));
    }
    let mut decision = plan_offload(kind, &operands, device, allow_conversion);
    let mut program = None;
    if let Some(params) = decision.params() {
        let specialized = library
            .lookup_template(kind, params.dtype)
            .and_then(|t| specialize_template(t, params));
        match specialized {
            Ok(p) => program = Some(p),
            Err(KernelError::NotFound { .. }) => {
                decision = cpu(format!("no device template for {kind} on {}", params.dtype.long_name()))
            }
            Err(KernelError::ConstraintViolation(m)) => decision = cpu(m),
            Err(e) => return Err(e.into()),
        }
    }
    let mut result = CompiledOp {
        index,
        result: op.result.clone(),
        kind: Some(kind),
        dtype: op.inputs[0].ty.dtype(),
        operands: op.inputs.iter().map(|o| o.name.clone()).collect(),
        init: Some(op.init.name.clone()),
        decision,
        device: None,
        host: None,
    };
    if let Some(p) = program {
        result.host = build_host_program(&result.decision, &result.program_ref(), &program_bindings(&p));
        result.device = Some(p);
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dev() -> DeviceInfo {
        DeviceInfo::default()
    }

    #[test]
    fn reduction_planning() {
        let f32v = TensorType::vector(262144, DType::Float32);
        let d = plan_offload(IntrinsicKind::Sum, std::slice::from_ref(&f32v), &dev(), false);
        let OffloadDecision::Npu(p) = &d else { panic!("{d:?}") };
        assert_eq!(p.dtype, DType::Float32);
        assert_eq!(d.describe(&dev()), "NPU (float32 emulated)");
        let c = plan_offload(IntrinsicKind::Sum, std::slice::from_ref(&f32v), &dev(), true);
        assert_eq!(c.conversion(), Some((DType::Float32, DType::BFloat16)));
        assert_eq!(c.params().unwrap().dtype, DType::BFloat16);
        assert_eq!(plan_offload(IntrinsicKind::Sum, &[f32v], &DeviceInfo::without_npu(), false), cpu("no NPU present"));
        assert_eq!(
            plan_offload(IntrinsicKind::Sum, &[TensorType::vector(100000, DType::Int32)], &dev(), false),
            cpu("element count not divisible by batching factor")
        );
        // pure function of the arguments
        let i16v = [TensorType::vector(524288, DType::Int16)];
        assert_eq!(plan_offload(IntrinsicKind::Maxval, &i16v, &dev(), true), plan_offload(IntrinsicKind::Maxval, &i16v, &dev(), true));
    }

    #[test]
    fn transpose_memory_limit() {
        let big = TensorType::matrix(1024, 1024, DType::Int32);
        assert_eq!(plan_offload(IntrinsicKind::Transpose, &[big], &dev(), false), cpu("exceeds memory tile"));
        let edge = TensorType::matrix(512, 256, DType::Int32);
        assert_eq!(edge.byte_size(), 524288);
        assert_eq!(plan_offload(IntrinsicKind::Transpose, &[edge], &dev(), false).placement(), Placement::Npu);
        let over = TensorType::matrix(512, 257, DType::Int32);
        assert_eq!(plan_offload(IntrinsicKind::Transpose, &[over], &dev(), false), cpu("exceeds memory tile"));
    }

    #[test]
    fn matmul_precision_rule() {
        let mm = |i: DType, o: DType| {
            let ops = [TensorType::matrix(256, 256, i), TensorType::matrix(256, 512, i), TensorType::matrix(256, 512, o)];
            plan_offload(IntrinsicKind::Matmul, &ops, &dev(), true)
        };
        assert_eq!(mm(DType::Int16, DType::Int32).params().unwrap().kernel.as_deref(), Some("matmul_i16_i32"));
        assert_eq!(mm(DType::BFloat16, DType::Float32).placement(), Placement::Npu);
        assert_eq!(mm(DType::Float32, DType::Float32).placement(), Placement::NpuConv);
        assert_eq!(mm(DType::Int16, DType::Int16).placement(), Placement::Cpu);
        assert_eq!(mm(DType::Int32, DType::Int32).placement(), Placement::Cpu);
    }

    #[test]
    fn sum_host_program() {
        let d = plan_offload(IntrinsicKind::Sum, &[TensorType::vector(262144, DType::Int32)], &dev(), false);
        let h = build_host_program(&d, "op0.dprog", &[(1048576, true), (64, false)]).unwrap();
        let expect = "NUM_DEVICES\nINIT device=0 program=op0.dprog\nALLOCATE_BUFFER id=0 bytes=1048576\n\
                      ALLOCATE_BUFFER id=1 bytes=64\nBUFFER_MAP id=0\nBUFFER_MAP id=1\nBUFFER_SYNC id=0 dir=to_device\n\
                      RUN ids=0,1\nWAIT\nBUFFER_SYNC id=1 dir=from_device\n";
        assert_eq!(h.to_text(), expect);
        assert_eq!(HostProgram::parse(expect).unwrap(), h);
        assert!(h.check().is_empty());
        assert!(build_host_program(&cpu("x"), "op0.dprog", &[(4, true)]).is_none());
        assert!(build_host_program(&d, "op0.dprog", &[]).is_none());
    }

    #[test]
    fn conversion_buffers_are_narrow() {
        let lib = KernelLibrary::builtin();
        let m = crate::ir::parse_module(
            "module {\n  %x = arg : tensor<262144xf32>\n  %z = arith.constant 0.0 : f32\n  \
             %s = linalg.reduce ins(%x : tensor<262144xf32>) outs(%z : f32) dimensions = [0] {\n  \
             ^bb0(%a : f32, %b : f32):\n    %r = arith.addf %a, %b : f32\n    linalg.yield %r : f32\n  }\n}\n",
        )
        .unwrap();
        let ops = compile_module(&m, &dev(), &lib, true).unwrap();
        let h = ops[0].host.as_ref().unwrap();
        assert!(h.ops.contains(&XrtwOp::AllocateBuffer { id: 0, bytes: 2 * 262144, convert: Some((DType::Float32, DType::BFloat16)) }));
        assert!(h.to_text().contains("convert=float32->bfloat16"));
        assert_eq!(HostProgram::parse(&h.to_text()).unwrap(), *h);
    }

    #[test]
    fn host_parse_errors() {
        assert!(HostProgram::parse("FLY id=0").is_err());
        assert!(HostProgram::parse("BUFFER_MAP").is_err());
        assert!(HostProgram::parse("BUFFER_MAP id=x").is_err());
        assert!(HostProgram::parse("BUFFER_SYNC id=0 dir=up").is_err());
        assert!(HostProgram::parse("WAIT now=1").is_err());
        let bad = HostProgram { ops: vec![XrtwOp::Init { device: 0, program: "p".into() }, XrtwOp::Wait] };
        assert_eq!(bad.check().len(), 2);
    }

    #[test]
    fn finalize_examples() {
        let z = vec![Scalar::I32(0); 16];
        assert_eq!(finalize_reduction(&z, IntrinsicKind::Sum).unwrap(), Scalar::I32(0));
        let p: Vec<Scalar> = [3, 9, 1, 9].iter().map(|v| Scalar::I32(*v)).collect();
        assert_eq!(finalize_reduction(&p, IntrinsicKind::Maxval).unwrap(), Scalar::I32(9));
        assert!(finalize_reduction(&[], IntrinsicKind::Sum).is_err());
    }
}
