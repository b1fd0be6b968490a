use std::collections::HashMap;
use std::fmt;

use super::*;
use crate::text::{tokenize, Cursor, Pos, Tok};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseErrorKind {
    Syntax,
    Type,
    UseBeforeDef,
    Redefinition,
}

/// A diagnostic from [`parse_module`], located at a 1-based line/column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub line: usize,
    pub col: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            ParseErrorKind::Syntax => "syntax error",
            ParseErrorKind::Type => "type error",
            ParseErrorKind::UseBeforeDef => "use before definition",
            ParseErrorKind::Redefinition => "redefinition",
        };
        write!(f, "{}:{}: {kind}: {}", self.line, self.col, self.message)
    }
}

impl std::error::Error for ParseError {}

fn err(kind: ParseErrorKind, pos: Pos, message: impl Into<String>) -> ParseError {
    ParseError { kind, line: pos.line, col: pos.col, message: message.into() }
}

fn syntax((pos, message): (Pos, String)) -> ParseError {
    err(ParseErrorKind::Syntax, pos, message)
}

struct Parser {
    cur: Cursor,
    env: HashMap<String, ValueType>,
}

/// Parse `.lair` text into a module. Empty (or comment-only) text is the
/// empty module.
pub fn parse_module(text: &str) -> Result<IrModule, ParseError> {
    let toks = tokenize(text)
        .map_err(|e| err(ParseErrorKind::Syntax, e.pos, e.message))?;
    let mut p = Parser { cur: Cursor::new(toks, text), env: HashMap::new() };
    if p.cur.at_end() {
        return Ok(IrModule::default());
    }
    let module = p.module()?;
    if !p.cur.at_end() {
        return Err(err(
            ParseErrorKind::Syntax,
            p.cur.pos(),
            format!("unexpected {} after module", p.cur.describe_next()),
        ));
    }
    Ok(module)
}

impl Parser {
    fn module(&mut self) -> Result<IrModule, ParseError> {
        self.cur.expect_word("module").map_err(syntax)?;
        let name = match self.cur.peek() {
            Some(Tok::Symbol(_)) => Some(self.cur.symbol().map_err(syntax)?),
            _ => None,
        };
        self.cur.expect_punct('{').map_err(syntax)?;
        let mut stmts = Vec::new();
        while !self.cur.is_punct('}') {
            if self.cur.at_end() {
                return Err(err(ParseErrorKind::Syntax, self.cur.pos(), "unterminated module"));
            }
            let stmt = self.stmt()?;
            stmts.push(stmt);
        }
        self.cur.expect_punct('}').map_err(syntax)?;
        Ok(IrModule { name, stmts })
    }

    fn define(&mut self, name: &str, ty: ValueType, pos: Pos) -> Result<(), ParseError> {
        if self.env.contains_key(name) {
            return Err(err(
                ParseErrorKind::Redefinition,
                pos,
                format!("%{name} is already defined"),
            ));
        }
        self.env.insert(name.to_string(), ty);
        Ok(())
    }

    fn stmt(&mut self) -> Result<Stmt, ParseError> {
        let pos = self.cur.pos();
        let name = self.cur.value().map_err(syntax)?;
        self.cur.expect_punct('=').map_err(syntax)?;
        let kw_pos = self.cur.pos();
        let kw = self.cur.word().map_err(syntax)?;
        let stmt = match kw.as_str() {
            "arg" => {
                self.cur.expect_punct(':').map_err(syntax)?;
                let ty = self.tensor_type()?;
                Stmt::Arg { name: name.clone(), ty }
            }
            "tensor.empty" => {
                self.cur.expect_punct(':').map_err(syntax)?;
                let ty = self.tensor_type()?;
                Stmt::Empty { name: name.clone(), ty }
            }
            "arith.constant" => {
                let lit_pos = self.cur.pos();
                let lit = self.cur.word().map_err(syntax)?;
                self.cur.expect_punct(':').map_err(syntax)?;
                let dtype = self.dtype()?;
                let value = Scalar::parse_literal(&lit, dtype)
                    .map_err(|m| err(ParseErrorKind::Type, lit_pos, m))?;
                Stmt::Constant { name: name.clone(), value }
            }
            "linalg.reduce" => Stmt::Linalg(self.reduce(name.clone())?),
            "linalg.matmul" => Stmt::Linalg(self.matmul(name.clone(), kw_pos)?),
            "linalg.transpose" => Stmt::Linalg(self.transpose(name.clone(), kw_pos)?),
            other => {
                return Err(err(ParseErrorKind::Syntax, kw_pos, format!("unknown operation `{other}`")))
            }
        };
        self.define(&name, stmt.defined_type(), pos)?;
        Ok(stmt)
    }

    fn dtype(&mut self) -> Result<DType, ParseError> {
        let pos = self.cur.pos();
        let w = self.cur.word().map_err(syntax)?;
        w.parse().map_err(|m: String| err(ParseErrorKind::Syntax, pos, m))
    }

    fn tensor_type(&mut self) -> Result<TensorType, ParseError> {
        self.cur.expect_word("tensor").map_err(syntax)?;
        self.cur.expect_punct('<').map_err(syntax)?;
        let pos = self.cur.pos();
        let w = self.cur.word().map_err(syntax)?;
        let ty = TensorType::from_shape_word(&w).map_err(|m| err(ParseErrorKind::Type, pos, m))?;
        self.cur.expect_punct('>').map_err(syntax)?;
        Ok(ty)
    }

    fn value_type(&mut self) -> Result<ValueType, ParseError> {
        if self.cur.is_word("tensor") {
            Ok(ValueType::Tensor(self.tensor_type()?))
        } else {
            Ok(ValueType::Scalar(self.dtype()?))
        }
    }

    /// A use of a value from the module environment.
    fn use_value(&mut self) -> Result<(String, Pos), ParseError> {
        let pos = self.cur.pos();
        let name = self.cur.value().map_err(syntax)?;
        if !self.env.contains_key(&name) {
            return Err(err(
                ParseErrorKind::UseBeforeDef,
                pos,
                format!("%{name} is used before it is defined"),
            ));
        }
        Ok((name, pos))
    }

    fn check_annot(&self, name: &str, pos: Pos, annot: &ValueType) -> Result<(), ParseError> {
        let defined = &self.env[name];
        if defined != annot {
            return Err(err(
                ParseErrorKind::Type,
                pos,
                format!("%{name} has type {defined}, annotated as {annot}"),
            ));
        }
        Ok(())
    }

    /// `ins(%a, %b : T1, T2)` or `outs(%c : T)`.
    fn operand_list(&mut self, kw: &str) -> Result<Vec<Operand>, ParseError> {
        self.cur.expect_word(kw).map_err(syntax)?;
        self.cur.expect_punct('(').map_err(syntax)?;
        let mut names = vec![self.use_value()?];
        while self.cur.eat_punct(',') {
            names.push(self.use_value()?);
        }
        self.cur.expect_punct(':').map_err(syntax)?;
        let mut out = Vec::new();
        for (i, (name, pos)) in names.iter().enumerate() {
            if i > 0 {
                self.cur.expect_punct(',').map_err(syntax)?;
            }
            let ty = self.value_type()?;
            self.check_annot(name, *pos, &ty)?;
            out.push(Operand { name: name.clone(), ty });
        }
        self.cur.expect_punct(')').map_err(syntax)?;
        Ok(out)
    }

    fn int_list(&mut self) -> Result<Vec<usize>, ParseError> {
        self.cur.expect_punct('[').map_err(syntax)?;
        let mut out = Vec::new();
        if !self.cur.is_punct(']') {
            loop {
                out.push(self.cur.integer::<usize>().map_err(syntax)?);
                if !self.cur.eat_punct(',') {
                    break;
                }
            }
        }
        self.cur.expect_punct(']').map_err(syntax)?;
        Ok(out)
    }

    fn single(kind: &str, mut ops: Vec<Operand>, pos: Pos, clause: &str) -> Result<Operand, ParseError> {
        if ops.len() != 1 {
            return Err(err(
                ParseErrorKind::Type,
                pos,
                format!("{kind} takes exactly one {clause} operand, got {}", ops.len()),
            ));
        }
        Ok(ops.remove(0))
    }

    fn reduce(&mut self, result: String) -> Result<LinalgOp, ParseError> {
        let ins_pos = self.cur.pos();
        let inputs = self.operand_list("ins")?;
        let input = Self::single("linalg.reduce", inputs, ins_pos, "input")?;
        let outs_pos = self.cur.pos();
        let outs = self.operand_list("outs")?;
        let init = Self::single("linalg.reduce", outs, outs_pos, "init")?;
        self.cur.expect_word("dimensions").map_err(syntax)?;
        self.cur.expect_punct('=').map_err(syntax)?;
        let dims_pos = self.cur.pos();
        let dimensions = self.int_list()?;

        let ValueType::Tensor(in_ty) = &input.ty else {
            return Err(err(ParseErrorKind::Type, ins_pos, "reduce input must be a tensor"));
        };
        let rank = in_ty.rank();
        let sorted = dimensions.windows(2).all(|w| w[0] < w[1]);
        if dimensions.is_empty() || !sorted || dimensions.iter().any(|d| *d >= rank) {
            return Err(err(
                ParseErrorKind::Type,
                dims_pos,
                format!("reduction dimensions {dimensions:?} are invalid for rank {rank}"),
            ));
        }
        if init.ty.dtype() != in_ty.dtype() {
            return Err(err(
                ParseErrorKind::Type,
                outs_pos,
                format!(
                    "reduce init has element type {}, input has {}",
                    init.ty.dtype(),
                    in_ty.dtype()
                ),
            ));
        }
        let kept: Vec<usize> = (0..rank)
            .filter(|d| !dimensions.contains(d))
            .map(|d| in_ty.shape()[d])
            .collect();
        let expected = if kept.is_empty() {
            ValueType::Scalar(in_ty.dtype())
        } else {
            ValueType::Tensor(TensorType::new(kept, in_ty.dtype()).expect("kept extents are valid"))
        };
        if init.ty != expected {
            return Err(err(
                ParseErrorKind::Type,
                outs_pos,
                format!("reduce init must have type {expected}, found {}", init.ty),
            ));
        }

        let body = self.combiner_body(in_ty.dtype())?;
        Ok(LinalgOp {
            result,
            kind: OpKind::Reduce { dimensions, body },
            inputs: vec![input],
            init,
        })
    }

    fn combiner_body(&mut self, dtype: DType) -> Result<CombinerBody, ParseError> {
        self.cur.expect_punct('{').map_err(syntax)?;
        let label = match self.cur.next() {
            Some(Tok::Label(l)) => l,
            _ => {
                return Err(err(ParseErrorKind::Syntax, self.cur.pos(), "expected a ^block label"))
            }
        };
        self.cur.expect_punct('(').map_err(syntax)?;
        let mut local: HashMap<String, ()> = HashMap::new();
        let mut args = Vec::new();
        for i in 0..2 {
            if i > 0 {
                self.cur.expect_punct(',').map_err(syntax)?;
            }
            let pos = self.cur.pos();
            let name = self.cur.value().map_err(syntax)?;
            self.cur.expect_punct(':').map_err(syntax)?;
            let ty_pos = self.cur.pos();
            let ty = self.dtype()?;
            if ty != dtype {
                return Err(err(
                    ParseErrorKind::Type,
                    ty_pos,
                    format!("block argument has type {ty}, input element type is {dtype}"),
                ));
            }
            if local.insert(name.clone(), ()).is_some() {
                return Err(err(ParseErrorKind::Redefinition, pos, format!("%{name} is already defined")));
            }
            args.push(name);
        }
        self.cur.expect_punct(')').map_err(syntax)?;
        self.cur.expect_punct(':').map_err(syntax)?;

        let local_use = |cur: &mut Cursor, local: &HashMap<String, ()>| -> Result<String, ParseError> {
            let pos = cur.pos();
            let name = cur.value().map_err(syntax)?;
            if !local.contains_key(&name) {
                return Err(err(
                    ParseErrorKind::UseBeforeDef,
                    pos,
                    format!("%{name} is not defined in the reduce body"),
                ));
            }
            Ok(name)
        };

        let mut ops = Vec::new();
        loop {
            if self.cur.eat_word("linalg.yield") {
                break;
            }
            let pos = self.cur.pos();
            let result = self.cur.value().map_err(syntax)?;
            self.cur.expect_punct('=').map_err(syntax)?;
            let op_pos = self.cur.pos();
            let w = self.cur.word().map_err(syntax)?;
            let op = w
                .strip_prefix("arith.")
                .and_then(ArithOp::from_mnemonic)
                .ok_or_else(|| err(ParseErrorKind::Syntax, op_pos, format!("unknown body operation `{w}`")))?;
            let lhs = local_use(&mut self.cur, &local)?;
            self.cur.expect_punct(',').map_err(syntax)?;
            let rhs = local_use(&mut self.cur, &local)?;
            self.cur.expect_punct(':').map_err(syntax)?;
            let ty_pos = self.cur.pos();
            let ty = self.dtype()?;
            if ty != dtype || !op.accepts(dtype) {
                return Err(err(
                    ParseErrorKind::Type,
                    ty_pos,
                    format!("`arith.{op}` on {ty} is not valid in a {dtype} reduction"),
                ));
            }
            if local.insert(result.clone(), ()).is_some() {
                return Err(err(ParseErrorKind::Redefinition, pos, format!("%{result} is already defined")));
            }
            ops.push(BodyOp { result, op, lhs, rhs });
        }
        let yielded = local_use(&mut self.cur, &local)?;
        self.cur.expect_punct(':').map_err(syntax)?;
        let ty_pos = self.cur.pos();
        let ty = self.dtype()?;
        if ty != dtype {
            return Err(err(ParseErrorKind::Type, ty_pos, format!("yield of {ty} in a {dtype} reduction")));
        }
        self.cur.expect_punct('}').map_err(syntax)?;
        let [element, accumulator]: [String; 2] = args.try_into().expect("two block arguments");
        Ok(CombinerBody { label, element, accumulator, dtype, ops, yielded })
    }

    fn matmul(&mut self, result: String, pos: Pos) -> Result<LinalgOp, ParseError> {
        let inputs = self.operand_list("ins")?;
        let outs_pos = self.cur.pos();
        let outs = self.operand_list("outs")?;
        let init = Self::single("linalg.matmul", outs, outs_pos, "init")?;
        let tensors: Vec<&TensorType> = inputs.iter().filter_map(|o| o.ty.as_tensor()).collect();
        let (a, b) = match tensors.as_slice() {
            [a, b] if inputs.len() == 2 && a.rank() == 2 && b.rank() == 2 => (*a, *b),
            _ => {
                return Err(err(ParseErrorKind::Type, pos, "linalg.matmul takes two rank-2 tensor inputs"))
            }
        };
        if a.dtype() != b.dtype() {
            return Err(err(
                ParseErrorKind::Type,
                pos,
                format!("matmul inputs disagree on element type: {} vs {}", a.dtype(), b.dtype()),
            ));
        }
        let (m, k) = (a.shape()[0], a.shape()[1]);
        let (k2, n) = (b.shape()[0], b.shape()[1]);
        if k != k2 {
            return Err(err(
                ParseErrorKind::Type,
                pos,
                format!("matmul inner extents do not match: {m}x{k} times {k2}x{n}"),
            ));
        }
        let out_ok = |d: DType| {
            d == a.dtype()
                || matches!((a.dtype(), d), (DType::Int16, DType::Int32) | (DType::BFloat16, DType::Float32))
        };
        match init.ty.as_tensor() {
            Some(c) if c.shape() == [m, n] && out_ok(c.dtype()) => {}
            _ => {
                return Err(err(
                    ParseErrorKind::Type,
                    outs_pos,
                    format!("matmul output must be a {m}x{n} tensor of {} or its widened type, found {}", a.dtype(), init.ty),
                ))
            }
        }
        Ok(LinalgOp { result, kind: OpKind::Matmul, inputs, init })
    }

    fn transpose(&mut self, result: String, pos: Pos) -> Result<LinalgOp, ParseError> {
        let inputs = self.operand_list("ins")?;
        let input = Self::single("linalg.transpose", inputs, pos, "input")?;
        let outs_pos = self.cur.pos();
        let outs = self.operand_list("outs")?;
        let init = Self::single("linalg.transpose", outs, outs_pos, "init")?;
        self.cur.expect_word("permutation").map_err(syntax)?;
        self.cur.expect_punct('=').map_err(syntax)?;
        let perm_pos = self.cur.pos();
        let perm = self.int_list()?;
        if perm != [1, 0] {
            return Err(err(ParseErrorKind::Type, perm_pos, format!("unsupported permutation {perm:?}")));
        }
        let a = match input.ty.as_tensor() {
            Some(t) if t.rank() == 2 => t,
            _ => return Err(err(ParseErrorKind::Type, pos, "linalg.transpose takes one rank-2 tensor")),
        };
        let want = TensorType::matrix(a.shape()[1], a.shape()[0], a.dtype());
        if init.ty.as_tensor() != Some(&want) {
            return Err(err(
                ParseErrorKind::Type,
                outs_pos,
                format!("transpose output must be {want}, found {}", init.ty),
            ));
        }
        Ok(LinalgOp { result, kind: OpKind::Transpose, inputs: vec![input], init })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const SUM_100K: &str = r#"
module @sum {
  %data = arg : tensor<100000xi32>
  %31 = arith.constant 0 : i32
  %sum = linalg.reduce ins(%data : tensor<100000xi32>) outs(%31 : i32) dimensions = [0] {
  ^bb0(%32 : i32, %33 : i32):
    %34 = arith.addi %32, %33 : i32
    linalg.yield %34 : i32
  }
}
"#;

    #[test]
    fn parses_reduce() {
        let m = parse_module(SUM_100K).unwrap();
        let ops: Vec<_> = m.ops().collect();
        assert_eq!(ops.len(), 1);
        let OpKind::Reduce { body, dimensions } = &ops[0].kind else { panic!() };
        assert_eq!(dimensions, &[0]);
        assert_eq!(body.single_op(), Some(ArithOp::AddI));
        assert_eq!(body.element, "32");
        assert!(ops[0].is_full_reduction());
    }

    #[test]
    fn empty_text_is_empty_module() {
        assert_eq!(parse_module("").unwrap(), IrModule::default());
        assert_eq!(parse_module("  // nothing\n").unwrap(), IrModule::default());
        assert!(parse_module("module {\n}").unwrap().stmts.is_empty());
    }

    #[test]
    fn matmul_output_type() {
        let src = "module {
  %a = arg : tensor<256x256xi16>
  %b = arg : tensor<256x512xi16>
  %c0 = tensor.empty : tensor<256x512xi32>
  %c = linalg.matmul ins(%a, %b : tensor<256x256xi16>, tensor<256x512xi16>) outs(%c0 : tensor<256x512xi32>)
}";
        let m = parse_module(src).unwrap();
        let op = m.ops().next().unwrap();
        assert_eq!(op.kind, OpKind::Matmul);
        assert_eq!(op.result_type(), &ValueType::Tensor(TensorType::matrix(256, 512, DType::Int32)));
    }

    #[test]
    fn rejects_mismatched_inner_extent() {
        let src = "module {
  %a = arg : tensor<4x3xi16>
  %b = arg : tensor<4x2xi16>
  %c0 = tensor.empty : tensor<4x2xi32>
  %c = linalg.matmul ins(%a, %b : tensor<4x3xi16>, tensor<4x2xi16>) outs(%c0 : tensor<4x2xi32>)
}";
        let e = parse_module(src).unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::Type);
        assert_eq!((e.line, e.col), (5, 8));
        assert!(e.message.contains("inner extents"));
    }

    #[test]
    fn rejects_init_dtype_mismatch() {
        let src = SUM_100K.replace("%31 = arith.constant 0 : i32", "%31 = arith.constant 0 : i16")
            .replace("outs(%31 : i32)", "outs(%31 : i16)");
        let e = parse_module(&src).unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::Type);
        assert!(e.message.contains("init"), "{e}");
    }

    #[test]
    fn rejects_use_before_def() {
        let src = "module {\n  %t = linalg.transpose ins(%m : tensor<2x3xi32>) outs(%o : tensor<3x2xi32>) permutation = [1, 0]\n}";
        let e = parse_module(src).unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::UseBeforeDef);
        assert_eq!((e.line, e.col), (2, 29));
    }

    #[test]
    fn rejects_body_use_of_outer_value() {
        let src = SUM_100K.replace("%34 = arith.addi %32, %33", "%34 = arith.addi %32, %data");
        let e = parse_module(&src).unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::UseBeforeDef);
    }

    #[test]
    fn rejects_float_op_on_ints() {
        let src = SUM_100K.replace("arith.addi", "arith.addf");
        assert_eq!(parse_module(&src).unwrap_err().kind, ParseErrorKind::Type);
    }

    #[test]
    fn rejects_redefinition_and_bad_tokens() {
        let src = "module {\n %a = arg : tensor<4xi32>\n %a = arg : tensor<4xi32>\n}";
        assert_eq!(parse_module(src).unwrap_err().kind, ParseErrorKind::Redefinition);
        let e = parse_module("module { %a = arg ; }").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::Syntax);
        assert_eq!((e.line, e.col), (1, 19));
        let e = parse_module("module { %a = frobnicate }").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::Syntax);
    }

    #[test]
    fn rejects_annotation_mismatch() {
        let src = SUM_100K.replace("ins(%data : tensor<100000xi32>)", "ins(%data : tensor<99xi32>)");
        assert_eq!(parse_module(&src).unwrap_err().kind, ParseErrorKind::Type);
    }

    #[test]
    fn dimensional_reduce_needs_tensor_init() {
        let src = "module {
  %m = arg : tensor<4x8xf32>
  %o = tensor.empty : tensor<8xf32>
  %r = linalg.reduce ins(%m : tensor<4x8xf32>) outs(%o : tensor<8xf32>) dimensions = [0] {
  ^bb0(%x : f32, %y : f32):
    %s = arith.addf %x, %y : f32
    linalg.yield %s : f32
  }
}";
        let m = parse_module(src).unwrap();
        assert!(!m.ops().next().unwrap().is_full_reduction());
        let bad = src.replace("tensor<8xf32>) dimensions", "tensor<4xf32>) dimensions")
            .replace("%o = tensor.empty : tensor<8xf32>", "%o = tensor.empty : tensor<4xf32>");
        assert_eq!(parse_module(&bad).unwrap_err().kind, ParseErrorKind::Type);
    }
}
