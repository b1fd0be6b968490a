//! Device programs: tiles, object FIFOs, links, core programs and the host
//! runtime sequence that moves data between host buffers and interface tiles.
//!
//! Text form (`.dprog`):
//!
//! ```text
//! aie.device(npu1_1col) {
//!   %s0 = aie.shim_tile(0)
//!   %t0 = aie.tile(0, 0)
//!   aie.objectfifo @in0(%s0 -> %t0, depth = 2) : memref<32xi32>
//!   aie.objectfifo @out0(%t0 -> %s0, depth = 2) : memref<32xi32>
//!   aie.core(%t0) {
//!     %one = arith.constant 1 : i32
//!     scf.for %i = 0 to 1 step 1 {
//!       %a = aie.objectfifo.acquire @in0(Consume, 1)
//!       %b = aie.objectfifo.acquire @out0(Produce, 1)
//!       scf.for %j = 0 to 32 step 1 {
//!         %v = memref.load %a[%j] : i32
//!         %w = arith.addi %v, %one : i32
//!         memref.store %w, %b[%j] : i32
//!       }
//!       aie.objectfifo.release @in0(Consume, 1)
//!       aie.objectfifo.release @out0(Produce, 1)
//!     }
//!     aie.end
//!   }
//!   aie.runtime_sequence(%in : memref<32xi32>, %out : memref<32xi32>) {
//!     aie.dma_in %in -> @in0 offset = 0 dims = [(32, 1)]
//!     aie.dma_out @out0 -> %out offset = 0 dims = [(32, 1)]
//!   }
//! }
//! ```
//!
//! Compute rows are numbered 0..3 within a column. Access patterns list
//! `(size, stride)` pairs outermost first; element `k` of the stream comes
//! from `offset + Σ idx·stride`.

mod parse;
mod print;
mod validate;

use std::fmt;

use crate::ir::DType;
use crate::scalar::{ArithOp, Combiner, Scalar};

pub use parse::{parse_program, DeviceParseError};
pub use print::print_program;
pub use validate::{validate_program, Diagnostic};

pub const ARRAY_COLUMNS: usize = 5;
pub const INTERFACE_COLUMNS: usize = 4;
pub const COMPUTE_ROWS: usize = 4;
pub const COMPUTE_TILE_BYTES: usize = 64 * 1024;
pub const MEMORY_TILE_BYTES: usize = 512 * 1024;
pub const MEMORY_TILE_MOVERS: usize = 12;
pub const MAX_INPUT_STREAMS: usize = 2;
pub const MAX_OUTPUT_STREAMS: usize = 2;
pub const VECTOR_BITS: usize = 512;

/// Vector lanes for `dtype` on a 512-bit datapath.
pub fn lanes(dtype: DType) -> usize {
    VECTOR_BITS / dtype.bits()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TileKind {
    Interface,
    Memory,
    Compute,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tile {
    pub name: String,
    pub col: usize,
    /// Compute row (0..3); always 0 for interface and memory tiles.
    pub row: usize,
    pub kind: TileKind,
}

/// Flat element-count × dtype shape of a FIFO object or buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ObjType {
    pub elems: usize,
    pub dtype: DType,
}

impl ObjType {
    pub fn new(elems: usize, dtype: DType) -> Self {
        ObjType { elems, dtype }
    }

    pub fn bytes(&self) -> usize {
        self.elems * self.dtype.byte_width()
    }
}

impl fmt::Display for ObjType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "memref<{}x{}>", self.elems, self.dtype)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObjectFifo {
    pub name: String,
    pub producer: String,
    pub consumer: String,
    pub depth: usize,
    pub obj: ObjType,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dim {
    pub size: usize,
    pub stride: usize,
}

impl Dim {
    pub fn new(size: usize, stride: usize) -> Self {
        Dim { size, stride }
    }
}

/// Number of elements an access pattern produces.
pub fn pattern_len(dims: &[Dim]) -> usize {
    dims.iter().map(|d| d.size).product()
}

/// Largest address an access pattern touches, relative to its offset.
pub fn pattern_extent(dims: &[Dim]) -> usize {
    dims.iter().map(|d| d.size.saturating_sub(1) * d.stride).sum()
}

/// Addresses produced by an access pattern, in stream order.
pub fn pattern_addresses(offset: usize, dims: &[Dim]) -> impl Iterator<Item = usize> + '_ {
    let total = pattern_len(dims);
    let mut idx = vec![0usize; dims.len()];
    (0..total).map(move |k| {
        if k > 0 {
            for d in (0..dims.len()).rev() {
                idx[d] += 1;
                if idx[d] < dims[d].size {
                    break;
                }
                idx[d] = 0;
            }
        }
        offset + idx.iter().zip(dims).map(|(i, d)| i * d.stride).sum::<usize>()
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LinkKind {
    /// One source object split into consecutive slices, one per destination.
    Distribute,
    /// One object from each source concatenated into one destination object.
    Join,
    /// One source object copied to every destination.
    Broadcast,
    /// Source object re-ordered by an access pattern into one destination.
    Permute(Vec<Dim>),
}

impl LinkKind {
    pub fn name(&self) -> &'static str {
        match self {
            LinkKind::Distribute => "distribute",
            LinkKind::Join => "join",
            LinkKind::Broadcast => "broadcast",
            LinkKind::Permute(_) => "permute",
        }
    }
}

/// A data-mover-only connection between FIFOs meeting at one tile.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Link {
    pub kind: LinkKind,
    pub sources: Vec<String>,
    pub dests: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocalBuffer {
    pub name: String,
    pub tile: String,
    pub obj: ObjType,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Port {
    Consume,
    Produce,
}

impl fmt::Display for Port {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Port::Consume => "Consume",
            Port::Produce => "Produce",
        })
    }
}

/// Integer operand: an index register or a literal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IndexOperand {
    Reg(String),
    Lit(i64),
}

/// Something that names memory: an acquired object register or a buffer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MemRef {
    Reg(String),
    Buffer(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CallArg {
    /// A register: an acquired object or a scalar value.
    Reg(String),
    Buffer(String),
    Int(i64),
}

/// Constant operand of `arith.constant`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConstValue {
    Index(i64),
    Scalar(Scalar),
}

/// Result type of a scalar register operation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RegType {
    Index,
    Scalar(DType),
}

impl fmt::Display for RegType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RegType::Index => f.write_str("index"),
            RegType::Scalar(d) => d.fmt(f),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CoreOp {
    Const { dst: String, value: ConstValue },
    Arith { dst: String, op: ArithOp, lhs: String, rhs: String, ty: RegType },
    For { var: String, lo: i64, hi: i64, step: i64, body: Vec<CoreOp> },
    Acquire { dst: Option<String>, fifo: String, port: Port, n: usize },
    Release { fifo: String, port: Port, n: usize },
    Load { dst: String, src: MemRef, index: IndexOperand, ty: DType },
    Store { value: String, dst: MemRef, index: IndexOperand, ty: DType },
    /// Lane-parallel reduction of a whole object folded into `acc`.
    VecReduce { dst: String, combiner: Combiner, src: MemRef, acc: String, lanes: usize, ty: DType },
    Call { dst: Option<String>, kernel: String, args: Vec<CallArg>, ty: Option<DType> },
}

impl CoreOp {
    /// Visit this op and everything nested in it, in program order.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a CoreOp)) {
        f(self);
        if let CoreOp::For { body, .. } = self {
            for op in body {
                op.walk(f);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoreProgram {
    pub tile: String,
    pub body: Vec<CoreOp>,
}

impl CoreProgram {
    pub fn walk<'a>(&'a self, mut f: impl FnMut(&'a CoreOp)) {
        for op in &self.body {
            op.walk(&mut f);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Input,
    Output,
}

/// A host buffer argument of the runtime sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HostParam {
    pub name: String,
    pub obj: ObjType,
}

/// A DMA between a host buffer and an interface-tile FIFO endpoint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DmaTransfer {
    pub direction: Direction,
    pub param: String,
    pub fifo: String,
    pub offset: usize,
    pub dims: Vec<Dim>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RuntimeSequence {
    pub params: Vec<HostParam>,
    pub transfers: Vec<DmaTransfer>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeviceProgram {
    pub device: String,
    pub tiles: Vec<Tile>,
    pub fifos: Vec<ObjectFifo>,
    pub links: Vec<Link>,
    pub buffers: Vec<LocalBuffer>,
    pub cores: Vec<CoreProgram>,
    pub sequence: RuntimeSequence,
}

impl DeviceProgram {
    pub fn tile(&self, name: &str) -> Option<&Tile> {
        self.tiles.iter().find(|t| t.name == name)
    }

    pub fn fifo(&self, name: &str) -> Option<&ObjectFifo> {
        self.fifos.iter().find(|f| f.name == name)
    }

    pub fn buffer(&self, name: &str) -> Option<&LocalBuffer> {
        self.buffers.iter().find(|b| b.name == name)
    }

    /// Number of array columns the device tag exposes.
    pub fn device_columns(&self) -> Option<usize> {
        device_columns(&self.device)
    }

    /// Direction of a runtime-sequence parameter, from the transfers using it.
    pub fn param_direction(&self, param: &str) -> Option<Direction> {
        self.sequence.transfers.iter().find(|t| t.param == param).map(|t| t.direction)
    }

    /// Host buffer bindings in `run` order.
    pub fn bindings(&self) -> Vec<(&HostParam, Direction)> {
        self.sequence
            .params
            .iter()
            .map(|p| (p, self.param_direction(&p.name).unwrap_or(Direction::Input)))
            .collect()
    }

    /// Distinct interface columns a parameter's transfers go through.
    pub fn param_columns(&self, param: &str) -> usize {
        let mut cols: Vec<usize> = self
            .sequence
            .transfers
            .iter()
            .filter(|t| t.param == param)
            .filter_map(|t| {
                let f = self.fifo(&t.fifo)?;
                let end = if t.direction == Direction::Input { &f.producer } else { &f.consumer };
                self.tile(end).map(|t| t.col)
            })
            .collect();
        cols.sort_unstable();
        cols.dedup();
        cols.len().max(1)
    }
}

/// Columns exposed by a device tag: `npu1` is the whole array and
/// `npu1_<n>col` the first `n` columns.
pub fn device_columns(tag: &str) -> Option<usize> {
    if tag == "npu1" {
        return Some(ARRAY_COLUMNS);
    }
    let n: usize = tag.strip_prefix("npu1_")?.strip_suffix("col")?.parse().ok()?;
    (1..=INTERFACE_COLUMNS).contains(&n).then_some(n)
}

#[cfg(test)]
pub(crate) const SCALAR_ADD: &str = r#"
aie.device(npu1_1col) {
  %s0 = aie.shim_tile(0)
  %t0 = aie.tile(0, 0)
  aie.objectfifo @in0(%s0 -> %t0, depth = 2) : memref<32xi32>
  aie.objectfifo @out0(%t0 -> %s0, depth = 2) : memref<32xi32>
  aie.core(%t0) {
    %one = arith.constant 1 : i32
    scf.for %i = 0 to 1 step 1 {
      %a = aie.objectfifo.acquire @in0(Consume, 1)
      %b = aie.objectfifo.acquire @out0(Produce, 1)
      scf.for %j = 0 to 32 step 1 {
        %v = memref.load %a[%j] : i32
        %w = arith.addi %v, %one : i32
        memref.store %w, %b[%j] : i32
      }
      aie.objectfifo.release @in0(Consume, 1)
      aie.objectfifo.release @out0(Produce, 1)
    }
    aie.end
  }
  aie.runtime_sequence(%in : memref<32xi32>, %out : memref<32xi32>) {
    aie.dma_in %in -> @in0 offset = 0 dims = [(32, 1)]
    aie.dma_out @out0 -> %out offset = 0 dims = [(32, 1)]
  }
}
"#;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn device_tags() {
        assert_eq!(device_columns("npu1_1col"), Some(1));
        assert_eq!(device_columns("npu1_4col"), Some(4));
        assert_eq!(device_columns("npu1"), Some(5));
        assert_eq!(device_columns("npu1_5col"), None);
        assert_eq!(device_columns("xcvc1902"), None);
    }

    #[test]
    fn transpose_pattern_addresses() {
        // 2x3 row-major source read column by column
        let dims = [Dim::new(3, 1), Dim::new(2, 3)];
        let got: Vec<usize> = pattern_addresses(0, &dims).collect();
        assert_eq!(got, vec![0, 3, 1, 4, 2, 5]);
        assert_eq!(pattern_extent(&dims), 5);
    }

    #[test]
    fn zero_stride_repeats() {
        let dims = [Dim::new(2, 0), Dim::new(3, 1)];
        let got: Vec<usize> = pattern_addresses(10, &dims).collect();
        assert_eq!(got, vec![10, 11, 12, 10, 11, 12]);
    }

    #[test]
    fn lanes_per_dtype() {
        assert_eq!(lanes(DType::Int16), 32);
        assert_eq!(lanes(DType::Float32), 16);
    }
}
