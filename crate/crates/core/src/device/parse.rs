use std::fmt;

use super::*;
use crate::ir::TensorType;
use crate::text::{tokenize, Cursor, Pos, Tok};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeviceParseError {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

impl fmt::Display for DeviceParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.line, self.col, self.message)
    }
}

impl std::error::Error for DeviceParseError {}

type PResult<T> = Result<T, DeviceParseError>;

fn perr((pos, message): (Pos, String)) -> DeviceParseError {
    DeviceParseError { line: pos.line, col: pos.col, message }
}

fn at(pos: Pos, message: impl Into<String>) -> DeviceParseError {
    DeviceParseError { line: pos.line, col: pos.col, message: message.into() }
}

/// Parse `.dprog` text. Only syntax is checked here; name resolution and
/// hardware limits are the validator's job.
pub fn parse_program(text: &str) -> PResult<DeviceProgram> {
    let toks = tokenize(text).map_err(|e| at(e.pos, e.message))?;
    let mut p = P { c: Cursor::new(toks, text) };
    let prog = p.program()?;
    if !p.c.at_end() {
        return Err(at(p.c.pos(), format!("unexpected {} after device", p.c.describe_next())));
    }
    Ok(prog)
}

struct P {
    c: Cursor,
}

impl P {
    fn program(&mut self) -> PResult<DeviceProgram> {
        self.c.expect_word("aie.device").map_err(perr)?;
        self.c.expect_punct('(').map_err(perr)?;
        let device = self.c.word().map_err(perr)?;
        self.c.expect_punct(')').map_err(perr)?;
        self.c.expect_punct('{').map_err(perr)?;
        let mut prog = DeviceProgram {
            device,
            tiles: Vec::new(),
            fifos: Vec::new(),
            links: Vec::new(),
            buffers: Vec::new(),
            cores: Vec::new(),
            sequence: RuntimeSequence::default(),
        };
        let mut seen_sequence = false;
        loop {
            if self.c.eat_punct('}') {
                break;
            }
            let pos = self.c.pos();
            match self.c.peek().cloned() {
                Some(Tok::Value(name)) => {
                    self.c.next();
                    self.c.expect_punct('=').map_err(perr)?;
                    prog.tiles.push(self.tile(name)?);
                }
                Some(Tok::Word(w)) => {
                    self.c.next();
                    match w.as_str() {
                        "aie.objectfifo" => prog.fifos.push(self.fifo()?),
                        "aie.objectfifo.link" => prog.links.push(self.link()?),
                        "aie.buffer" => prog.buffers.push(self.buffer()?),
                        "aie.core" => prog.cores.push(self.core()?),
                        "aie.runtime_sequence" => {
                            if seen_sequence {
                                return Err(at(pos, "more than one aie.runtime_sequence"));
                            }
                            seen_sequence = true;
                            prog.sequence = self.sequence()?;
                        }
                        _ => return Err(at(pos, format!("unknown device operation `{w}`"))),
                    }
                }
                None => return Err(at(pos, "unterminated aie.device")),
                Some(t) => return Err(at(pos, format!("unexpected {t}"))),
            }
        }
        Ok(prog)
    }

    fn usize_lit(&mut self) -> PResult<usize> {
        self.c.integer::<usize>().map_err(perr)
    }

    fn i64_lit(&mut self) -> PResult<i64> {
        self.c.integer::<i64>().map_err(perr)
    }

    fn tile(&mut self, name: String) -> PResult<Tile> {
        let pos = self.c.pos();
        let w = self.c.word().map_err(perr)?;
        self.c.expect_punct('(').map_err(perr)?;
        let col = self.usize_lit()?;
        let (kind, row) = match w.as_str() {
            "aie.shim_tile" => (TileKind::Interface, 0),
            "aie.mem_tile" => (TileKind::Memory, 0),
            "aie.tile" => {
                self.c.expect_punct(',').map_err(perr)?;
                (TileKind::Compute, self.usize_lit()?)
            }
            _ => return Err(at(pos, format!("expected a tile constructor, found `{w}`"))),
        };
        self.c.expect_punct(')').map_err(perr)?;
        Ok(Tile { name, col, row, kind })
    }

    fn obj_type(&mut self) -> PResult<ObjType> {
        self.c.expect_word("memref").map_err(perr)?;
        self.c.expect_punct('<').map_err(perr)?;
        let pos = self.c.pos();
        let w = self.c.word().map_err(perr)?;
        let t = TensorType::from_shape_word(&w).map_err(|m| at(pos, m))?;
        self.c.expect_punct('>').map_err(perr)?;
        Ok(ObjType::new(t.element_count(), t.dtype()))
    }

    fn dtype(&mut self) -> PResult<DType> {
        let pos = self.c.pos();
        let w = self.c.word().map_err(perr)?;
        w.parse().map_err(|m: String| at(pos, m))
    }

    fn fifo(&mut self) -> PResult<ObjectFifo> {
        let name = self.c.symbol().map_err(perr)?;
        self.c.expect_punct('(').map_err(perr)?;
        let producer = self.c.value().map_err(perr)?;
        self.c.expect_arrow().map_err(perr)?;
        let consumer = self.c.value().map_err(perr)?;
        self.c.expect_punct(',').map_err(perr)?;
        self.c.expect_word("depth").map_err(perr)?;
        self.c.expect_punct('=').map_err(perr)?;
        let depth = self.usize_lit()?;
        self.c.expect_punct(')').map_err(perr)?;
        self.c.expect_punct(':').map_err(perr)?;
        let obj = self.obj_type()?;
        Ok(ObjectFifo { name, producer, consumer, depth, obj })
    }

    fn sym_list(&mut self) -> PResult<Vec<String>> {
        if self.c.eat_punct('[') {
            let mut out = vec![self.c.symbol().map_err(perr)?];
            while self.c.eat_punct(',') {
                out.push(self.c.symbol().map_err(perr)?);
            }
            self.c.expect_punct(']').map_err(perr)?;
            Ok(out)
        } else {
            Ok(vec![self.c.symbol().map_err(perr)?])
        }
    }

    fn dims(&mut self) -> PResult<Vec<Dim>> {
        self.c.expect_word("dims").map_err(perr)?;
        self.c.expect_punct('=').map_err(perr)?;
        self.c.expect_punct('[').map_err(perr)?;
        let mut out = Vec::new();
        if !self.c.is_punct(']') {
            loop {
                self.c.expect_punct('(').map_err(perr)?;
                let size = self.usize_lit()?;
                self.c.expect_punct(',').map_err(perr)?;
                let stride = self.usize_lit()?;
                self.c.expect_punct(')').map_err(perr)?;
                out.push(Dim { size, stride });
                if !self.c.eat_punct(',') {
                    break;
                }
            }
        }
        self.c.expect_punct(']').map_err(perr)?;
        Ok(out)
    }

    fn link(&mut self) -> PResult<Link> {
        let pos = self.c.pos();
        let kind_word = self.c.word().map_err(perr)?;
        let sources = self.sym_list()?;
        self.c.expect_arrow().map_err(perr)?;
        let dests = self.sym_list()?;
        let kind = match kind_word.as_str() {
            "distribute" => LinkKind::Distribute,
            "join" => LinkKind::Join,
            "broadcast" => LinkKind::Broadcast,
            "permute" => LinkKind::Permute(self.dims()?),
            _ => return Err(at(pos, format!("unknown link kind `{kind_word}`"))),
        };
        Ok(Link { kind, sources, dests })
    }

    fn buffer(&mut self) -> PResult<LocalBuffer> {
        let name = self.c.symbol().map_err(perr)?;
        self.c.expect_punct('(').map_err(perr)?;
        let tile = self.c.value().map_err(perr)?;
        self.c.expect_punct(')').map_err(perr)?;
        self.c.expect_punct(':').map_err(perr)?;
        let obj = self.obj_type()?;
        Ok(LocalBuffer { name, tile, obj })
    }

    fn core(&mut self) -> PResult<CoreProgram> {
        self.c.expect_punct('(').map_err(perr)?;
        let tile = self.c.value().map_err(perr)?;
        self.c.expect_punct(')').map_err(perr)?;
        self.c.expect_punct('{').map_err(perr)?;
        let body = self.ops(true)?;
        self.c.expect_punct('}').map_err(perr)?;
        Ok(CoreProgram { tile, body })
    }

    /// Ops up to `aie.end` (core level) or the closing brace (loop level).
    fn ops(&mut self, core_level: bool) -> PResult<Vec<CoreOp>> {
        let mut out = Vec::new();
        loop {
            if core_level && self.c.eat_word("aie.end") {
                return Ok(out);
            }
            if !core_level && self.c.eat_punct('}') {
                return Ok(out);
            }
            if self.c.at_end() {
                return Err(at(self.c.pos(), "unterminated core body"));
            }
            out.push(self.op()?);
        }
    }

    fn port(&mut self) -> PResult<(String, Port, usize)> {
        let fifo = self.c.symbol().map_err(perr)?;
        self.c.expect_punct('(').map_err(perr)?;
        let pos = self.c.pos();
        let port = match self.c.word().map_err(perr)?.as_str() {
            "Consume" => Port::Consume,
            "Produce" => Port::Produce,
            w => return Err(at(pos, format!("expected Consume or Produce, found `{w}`"))),
        };
        self.c.expect_punct(',').map_err(perr)?;
        let n = self.usize_lit()?;
        self.c.expect_punct(')').map_err(perr)?;
        Ok((fifo, port, n))
    }

    fn memref(&mut self) -> PResult<MemRef> {
        match self.c.peek() {
            Some(Tok::Symbol(_)) => Ok(MemRef::Buffer(self.c.symbol().map_err(perr)?)),
            _ => Ok(MemRef::Reg(self.c.value().map_err(perr)?)),
        }
    }

    fn indexed(&mut self) -> PResult<(MemRef, IndexOperand)> {
        let m = self.memref()?;
        self.c.expect_punct('[').map_err(perr)?;
        let idx = match self.c.peek() {
            Some(Tok::Value(_)) => IndexOperand::Reg(self.c.value().map_err(perr)?),
            _ => IndexOperand::Lit(self.i64_lit()?),
        };
        self.c.expect_punct(']').map_err(perr)?;
        Ok((m, idx))
    }

    fn call(&mut self, dst: Option<String>) -> PResult<CoreOp> {
        let kernel = self.c.symbol().map_err(perr)?;
        self.c.expect_punct('(').map_err(perr)?;
        let mut args = Vec::new();
        if !self.c.is_punct(')') {
            loop {
                let arg = match self.c.peek() {
                    Some(Tok::Value(_)) => CallArg::Reg(self.c.value().map_err(perr)?),
                    Some(Tok::Symbol(_)) => CallArg::Buffer(self.c.symbol().map_err(perr)?),
                    _ => CallArg::Int(self.i64_lit()?),
                };
                args.push(arg);
                if !self.c.eat_punct(',') {
                    break;
                }
            }
        }
        self.c.expect_punct(')').map_err(perr)?;
        let ty = if self.c.eat_punct(':') { Some(self.dtype()?) } else { None };
        Ok(CoreOp::Call { dst, kernel, args, ty })
    }

    fn op(&mut self) -> PResult<CoreOp> {
        let pos = self.c.pos();
        if let Some(Tok::Value(dst)) = self.c.peek().cloned() {
            self.c.next();
            self.c.expect_punct('=').map_err(perr)?;
            let wpos = self.c.pos();
            let w = self.c.word().map_err(perr)?;
            return match w.as_str() {
                "arith.constant" => {
                    let lit_pos = self.c.pos();
                    let lit = self.c.word().map_err(perr)?;
                    self.c.expect_punct(':').map_err(perr)?;
                    let value = if self.c.eat_word("index") {
                        ConstValue::Index(lit.parse().map_err(|_| at(lit_pos, format!("bad index literal `{lit}`")))?)
                    } else {
                        let dt = self.dtype()?;
                        ConstValue::Scalar(Scalar::parse_literal(&lit, dt).map_err(|m| at(lit_pos, m))?)
                    };
                    Ok(CoreOp::Const { dst, value })
                }
                "aie.objectfifo.acquire" => {
                    let (fifo, port, n) = self.port()?;
                    Ok(CoreOp::Acquire { dst: Some(dst), fifo, port, n })
                }
                "memref.load" => {
                    let (src, index) = self.indexed()?;
                    self.c.expect_punct(':').map_err(perr)?;
                    let ty = self.dtype()?;
                    Ok(CoreOp::Load { dst, src, index, ty })
                }
                "aievec.reduce" => {
                    let cpos = self.c.pos();
                    let combiner = match self.c.word().map_err(perr)?.as_str() {
                        "add" => Combiner::Add,
                        "mul" => Combiner::Mul,
                        "max" => Combiner::Max,
                        "min" => Combiner::Min,
                        other => return Err(at(cpos, format!("unknown vector combiner `{other}`"))),
                    };
                    let src = self.memref()?;
                    self.c.expect_punct(',').map_err(perr)?;
                    let acc = self.c.value().map_err(perr)?;
                    self.c.expect_word("lanes").map_err(perr)?;
                    self.c.expect_punct('=').map_err(perr)?;
                    let lanes = self.usize_lit()?;
                    self.c.expect_punct(':').map_err(perr)?;
                    let ty = self.dtype()?;
                    Ok(CoreOp::VecReduce { dst, combiner, src, acc, lanes, ty })
                }
                "func.call" => self.call(Some(dst)),
                _ => {
                    let Some(op) = w.strip_prefix("arith.").and_then(ArithOp::from_mnemonic) else {
                        return Err(at(wpos, format!("unknown core operation `{w}`")));
                    };
                    let lhs = self.c.value().map_err(perr)?;
                    self.c.expect_punct(',').map_err(perr)?;
                    let rhs = self.c.value().map_err(perr)?;
                    self.c.expect_punct(':').map_err(perr)?;
                    let ty = if self.c.eat_word("index") { RegType::Index } else { RegType::Scalar(self.dtype()?) };
                    Ok(CoreOp::Arith { dst, op, lhs, rhs, ty })
                }
            };
        }
        let w = self.c.word().map_err(perr)?;
        match w.as_str() {
            "scf.for" => {
                let var = self.c.value().map_err(perr)?;
                self.c.expect_punct('=').map_err(perr)?;
                let lo = self.i64_lit()?;
                self.c.expect_word("to").map_err(perr)?;
                let hi = self.i64_lit()?;
                self.c.expect_word("step").map_err(perr)?;
                let spos = self.c.pos();
                let step = self.i64_lit()?;
                if step <= 0 {
                    return Err(at(spos, "loop step must be positive"));
                }
                self.c.expect_punct('{').map_err(perr)?;
                let body = self.ops(false)?;
                Ok(CoreOp::For { var, lo, hi, step, body })
            }
            "aie.objectfifo.acquire" => {
                let (fifo, port, n) = self.port()?;
                Ok(CoreOp::Acquire { dst: None, fifo, port, n })
            }
            "aie.objectfifo.release" => {
                let (fifo, port, n) = self.port()?;
                Ok(CoreOp::Release { fifo, port, n })
            }
            "memref.store" => {
                let value = self.c.value().map_err(perr)?;
                self.c.expect_punct(',').map_err(perr)?;
                let (dst, index) = self.indexed()?;
                self.c.expect_punct(':').map_err(perr)?;
                let ty = self.dtype()?;
                Ok(CoreOp::Store { value, dst, index, ty })
            }
            "func.call" => self.call(None),
            _ => Err(at(pos, format!("unknown core operation `{w}`"))),
        }
    }

    fn sequence(&mut self) -> PResult<RuntimeSequence> {
        self.c.expect_punct('(').map_err(perr)?;
        let mut params = Vec::new();
        if !self.c.is_punct(')') {
            loop {
                let name = self.c.value().map_err(perr)?;
                self.c.expect_punct(':').map_err(perr)?;
                let obj = self.obj_type()?;
                params.push(HostParam { name, obj });
                if !self.c.eat_punct(',') {
                    break;
                }
            }
        }
        self.c.expect_punct(')').map_err(perr)?;
        self.c.expect_punct('{').map_err(perr)?;
        let mut transfers = Vec::new();
        while !self.c.eat_punct('}') {
            let pos = self.c.pos();
            let w = self.c.word().map_err(perr)?;
            let (direction, param, fifo) = match w.as_str() {
                "aie.dma_in" => {
                    let param = self.c.value().map_err(perr)?;
                    self.c.expect_arrow().map_err(perr)?;
                    (Direction::Input, param, self.c.symbol().map_err(perr)?)
                }
                "aie.dma_out" => {
                    let fifo = self.c.symbol().map_err(perr)?;
                    self.c.expect_arrow().map_err(perr)?;
                    (Direction::Output, self.c.value().map_err(perr)?, fifo)
                }
                _ => return Err(at(pos, format!("unknown runtime sequence operation `{w}`"))),
            };
            self.c.expect_word("offset").map_err(perr)?;
            self.c.expect_punct('=').map_err(perr)?;
            let offset = self.usize_lit()?;
            let dims = self.dims()?;
            transfers.push(DmaTransfer { direction, param, fifo, offset, dims });
        }
        Ok(RuntimeSequence { params, transfers })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::SCALAR_ADD;


    #[test]
    fn parses_scalar_add() {
        let p = parse_program(SCALAR_ADD).unwrap();
        assert_eq!(p.tiles.len(), 2);
        assert_eq!(p.fifos[0].obj, ObjType::new(32, DType::Int32));
        assert_eq!(p.cores[0].body.len(), 2);
        assert_eq!(p.sequence.transfers.len(), 2);
        assert_eq!(p.param_direction("out"), Some(Direction::Output));
    }

    #[test]
    fn print_round_trips() {
        let p = parse_program(SCALAR_ADD).unwrap();
        let text = print_program(&p);
        assert_eq!(parse_program(&text).unwrap(), p);
        assert_eq!(print_program(&parse_program(&text).unwrap()), text);
    }

    #[test]
    fn links_buffers_and_calls() {
        let src = r#"aie.device(npu1_4col) {
  %m0 = aie.mem_tile(0)
  aie.objectfifo.link distribute @a -> [@b, @c]
  aie.objectfifo.link join [@b, @c] -> @d
  aie.objectfifo.link permute @x -> @y dims = [(4, 1), (2, 4)]
  aie.buffer @acc(%t) : memref<16xf32>
  aie.core(%t) {
    %z = func.call @vec_reduce_add_f32(%a, %z) : f32
    func.call @matmul_i16_i32(%a, %b, @acc, 4, 4, 1)
    %r = aievec.reduce max @acc, %z lanes = 16 : f32
    aie.end
  }
}"#;
        let p = parse_program(src).unwrap();
        assert_eq!(p.links[0].dests, vec!["b".to_string(), "c".to_string()]);
        assert_eq!(p.links[2].kind, LinkKind::Permute(vec![Dim::new(4, 1), Dim::new(2, 4)]));
        assert_eq!(parse_program(&print_program(&p)).unwrap(), p);
    }

    #[test]
    fn errors_carry_positions() {
        let e = parse_program("aie.device(npu1) {\n  aie.frob\n}").unwrap_err();
        assert_eq!((e.line, e.col), (2, 3));
        let e = parse_program("aie.device(npu1) {\n  aie.core(%t) {\n    scf.for %i = 0 to 4 step 0 {\n").unwrap_err();
        assert!(e.message.contains("step"));
        assert!(parse_program("aie.device(npu1) {").is_err());
    }
}
