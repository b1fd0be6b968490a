//! Map linalg operations onto the intrinsic they implement.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ir::{ArithOp, LinalgOp, OpKind};
use crate::scalar::Combiner;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntrinsicKind {
    Sum,
    Product,
    Maxval,
    Minval,
    Transpose,
    Matmul,
}

impl IntrinsicKind {
    pub const ALL: [IntrinsicKind; 6] = [
        IntrinsicKind::Sum,
        IntrinsicKind::Product,
        IntrinsicKind::Maxval,
        IntrinsicKind::Minval,
        IntrinsicKind::Transpose,
        IntrinsicKind::Matmul,
    ];

    pub const REDUCTIONS: [IntrinsicKind; 4] =
        [IntrinsicKind::Sum, IntrinsicKind::Product, IntrinsicKind::Maxval, IntrinsicKind::Minval];

    pub fn name(self) -> &'static str {
        match self {
            IntrinsicKind::Sum => "sum",
            IntrinsicKind::Product => "product",
            IntrinsicKind::Maxval => "maxval",
            IntrinsicKind::Minval => "minval",
            IntrinsicKind::Transpose => "transpose",
            IntrinsicKind::Matmul => "matmul",
        }
    }

    /// The combiner of a reduction kind.
    pub fn combiner(self) -> Option<Combiner> {
        match self {
            IntrinsicKind::Sum => Some(Combiner::Add),
            IntrinsicKind::Product => Some(Combiner::Mul),
            IntrinsicKind::Maxval => Some(Combiner::Max),
            IntrinsicKind::Minval => Some(Combiner::Min),
            _ => None,
        }
    }

    pub fn is_reduction(self) -> bool {
        self.combiner().is_some()
    }
}

impl fmt::Display for IntrinsicKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for IntrinsicKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        IntrinsicKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown intrinsic `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Category {
    Kind(IntrinsicKind),
    Unsupported(String),
}

/// Kind for a single-op combiner, or why it has none.
pub fn kind_of_combiner(op: ArithOp) -> Result<IntrinsicKind, String> {
    match op {
        ArithOp::AddI | ArithOp::AddF => Ok(IntrinsicKind::Sum),
        ArithOp::MulI | ArithOp::MulF => Ok(IntrinsicKind::Product),
        ArithOp::MaxSI | ArithOp::MaxF => Ok(IntrinsicKind::Maxval),
        ArithOp::MinSI | ArithOp::MinF => Ok(IntrinsicKind::Minval),
        ArithOp::MaxUI | ArithOp::MinUI => {
            Err(format!("unsigned comparison `arith.{op}` has no intrinsic counterpart"))
        }
        ArithOp::SubI | ArithOp::SubF => Err(format!("`arith.{op}` is not an associative combiner")),
    }
}

pub fn categorize_op(op: &LinalgOp) -> Category {
    match &op.kind {
        OpKind::Matmul => Category::Kind(IntrinsicKind::Matmul),
        OpKind::Transpose => Category::Kind(IntrinsicKind::Transpose),
        OpKind::Reduce { dimensions, body } => {
            if !op.is_full_reduction() {
                return Category::Unsupported(format!(
                    "reduction over dimensions {dimensions:?} does not cover every input dimension"
                ));
            }
            let Some(arith) = body.single_op() else {
                return Category::Unsupported(format!(
                    "reduce body with {} operation(s) is not a single combiner over both block arguments",
                    body.ops.len()
                ));
            };
            match kind_of_combiner(arith) {
                Ok(k) => Category::Kind(k),
                Err(reason) => Category::Unsupported(reason),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{parse_module, DType};

    fn reduce_src(op: &str, dt: &str) -> String {
        format!(
            "module {{
  %x = arg : tensor<16x{dt}>
  %c = arith.constant 0 : {dt}
  %r = linalg.reduce ins(%x : tensor<16x{dt}>) outs(%c : {dt}) dimensions = [0] {{
  ^bb0(%a : {dt}, %b : {dt}):
    %y = arith.{op} %a, %b : {dt}
    linalg.yield %y : {dt}
  }}
}}"
        )
    }

    fn cat(src: &str) -> Category {
        let m = parse_module(src).unwrap();
        let c = categorize_op(m.ops().next().unwrap());
        c
    }

    #[test]
    fn kind_table() {
        use IntrinsicKind::*;
        let table = [
            ("addi", "i32", Sum),
            ("addf", "f32", Sum),
            ("muli", "i16", Product),
            ("mulf", "bf16", Product),
            ("maxsi", "i32", Maxval),
            ("maxf", "f32", Maxval),
            ("minsi", "i16", Minval),
            ("minf", "bf16", Minval),
        ];
        for (op, dt, kind) in table {
            assert_eq!(cat(&reduce_src(op, dt)), Category::Kind(kind), "{op} {dt}");
        }
    }

    #[test]
    fn unsigned_and_sub_are_unsupported() {
        for op in ["maxui", "minui", "subi"] {
            let Category::Unsupported(reason) = cat(&reduce_src(op, "i32")) else { panic!("{op}") };
            assert!(reason.contains(op), "{reason}");
        }
    }

    #[test]
    fn kind_is_dtype_invariant() {
        for dt in DType::ALL {
            let op = if dt.is_float() { "addf" } else { "addi" };
            assert_eq!(cat(&reduce_src(op, dt.mnemonic())), Category::Kind(IntrinsicKind::Sum));
        }
    }

    #[test]
    fn names_round_trip() {
        for k in IntrinsicKind::ALL {
            assert_eq!(k.name().parse::<IntrinsicKind>().unwrap(), k);
        }
    }
}
