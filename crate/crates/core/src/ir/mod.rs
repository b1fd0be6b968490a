//! Linear-algebra IR: the subset of `linalg` that Fortran intrinsics lower
//! to (reduce, matmul, transpose) in a simplified textual syntax.
//!
//! ```text
//! module @sum {
//!   %data = arg : tensor<262144xi32>
//!   %init = arith.constant 0 : i32
//!   %sum = linalg.reduce ins(%data : tensor<262144xi32>) outs(%init : i32) dimensions = [0] {
//!   ^bb0(%in : i32, %acc : i32):
//!     %r = arith.addi %in, %acc : i32
//!     linalg.yield %r : i32
//!   }
//! }
//! ```
//!
//! Value names are opaque strings and are never renumbered.

mod parse;
mod print;
mod types;

use std::fmt;

pub use parse::{parse_module, ParseError, ParseErrorKind};
pub use print::print_module;
pub use types::{DType, TensorType};

pub use crate::scalar::{ArithOp, Scalar};

/// Type of an SSA value: a tensor or a bare scalar (reduction accumulators).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ValueType {
    Tensor(TensorType),
    Scalar(DType),
}

impl ValueType {
    pub fn dtype(&self) -> DType {
        match self {
            ValueType::Tensor(t) => t.dtype(),
            ValueType::Scalar(d) => *d,
        }
    }

    pub fn as_tensor(&self) -> Option<&TensorType> {
        match self {
            ValueType::Tensor(t) => Some(t),
            ValueType::Scalar(_) => None,
        }
    }
}

impl fmt::Display for ValueType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValueType::Tensor(t) => t.fmt(f),
            ValueType::Scalar(d) => d.fmt(f),
        }
    }
}

/// A use of a named value together with its annotated type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Operand {
    pub name: String,
    pub ty: ValueType,
}

/// One `%r = arith.<op> %a, %b` line inside a combiner body.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BodyOp {
    pub result: String,
    pub op: ArithOp,
    pub lhs: String,
    pub rhs: String,
}

/// The region of a `linalg.reduce`: two block arguments, arithmetic, and a
/// yield.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CombinerBody {
    pub label: String,
    pub element: String,
    pub accumulator: String,
    pub dtype: DType,
    pub ops: Vec<BodyOp>,
    pub yielded: String,
}

impl CombinerBody {
    /// The arithmetic op when the body is exactly `yield op(element, acc)`
    /// (operands in either order).
    pub fn single_op(&self) -> Option<ArithOp> {
        let [op] = self.ops.as_slice() else {
            return None;
        };
        let args = [self.element.as_str(), self.accumulator.as_str()];
        let uses_both = (op.lhs == args[0] && op.rhs == args[1])
            || (op.lhs == args[1] && op.rhs == args[0]);
        (uses_both && op.result == self.yielded).then_some(op.op)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OpKind {
    Reduce { dimensions: Vec<usize>, body: CombinerBody },
    Matmul,
    Transpose,
}

impl OpKind {
    pub fn mnemonic(&self) -> &'static str {
        match self {
            OpKind::Reduce { .. } => "linalg.reduce",
            OpKind::Matmul => "linalg.matmul",
            OpKind::Transpose => "linalg.transpose",
        }
    }
}

/// A linalg operation writing its result into `result`, typed as `init`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinalgOp {
    pub result: String,
    pub kind: OpKind,
    pub inputs: Vec<Operand>,
    pub init: Operand,
}

impl LinalgOp {
    pub fn result_type(&self) -> &ValueType {
        &self.init.ty
    }

    /// Whether a reduce folds every input dimension into a scalar.
    pub fn is_full_reduction(&self) -> bool {
        match &self.kind {
            OpKind::Reduce { dimensions, .. } => {
                let rank = self.inputs[0].ty.as_tensor().map_or(0, |t| t.rank());
                dimensions.len() == rank && matches!(self.init.ty, ValueType::Scalar(_))
            }
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Stmt {
    /// `%x = arg : tensor<...>`, a tensor supplied by the caller.
    Arg { name: String, ty: TensorType },
    /// `%x = arith.constant <lit> : <dtype>`
    Constant { name: String, value: Scalar },
    /// `%x = tensor.empty : tensor<...>`, an uninitialised output tensor.
    Empty { name: String, ty: TensorType },
    Linalg(LinalgOp),
}

impl Stmt {
    pub fn defined_name(&self) -> &str {
        match self {
            Stmt::Arg { name, .. } | Stmt::Constant { name, .. } | Stmt::Empty { name, .. } => name,
            Stmt::Linalg(op) => &op.result,
        }
    }

    pub fn defined_type(&self) -> ValueType {
        match self {
            Stmt::Arg { ty, .. } | Stmt::Empty { ty, .. } => ValueType::Tensor(ty.clone()),
            Stmt::Constant { value, .. } => ValueType::Scalar(value.dtype()),
            Stmt::Linalg(op) => op.result_type().clone(),
        }
    }
}

/// An ordered sequence of definitions; uses always follow their definition.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct IrModule {
    pub name: Option<String>,
    pub stmts: Vec<Stmt>,
}

impl IrModule {
    pub fn ops(&self) -> impl Iterator<Item = &LinalgOp> {
        self.stmts.iter().filter_map(|s| match s {
            Stmt::Linalg(op) => Some(op),
            _ => None,
        })
    }

    /// Tensor arguments in declaration order.
    pub fn args(&self) -> impl Iterator<Item = (&str, &TensorType)> {
        self.stmts.iter().filter_map(|s| match s {
            Stmt::Arg { name, ty } => Some((name.as_str(), ty)),
            _ => None,
        })
    }

    pub fn lookup(&self, name: &str) -> Option<&Stmt> {
        self.stmts.iter().find(|s| s.defined_name() == name)
    }
}
