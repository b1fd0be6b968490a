use std::fmt::Write;

use super::*;

fn dims_text(dims: &[Dim]) -> String {
    let parts: Vec<String> = dims.iter().map(|d| format!("({}, {})", d.size, d.stride)).collect();
    format!("[{}]", parts.join(", "))
}

fn sym_list(names: &[String]) -> String {
    if names.len() == 1 {
        format!("@{}", names[0])
    } else {
        let parts: Vec<String> = names.iter().map(|n| format!("@{n}")).collect();
        format!("[{}]", parts.join(", "))
    }
}

fn index_text(i: &IndexOperand) -> String {
    match i {
        IndexOperand::Reg(r) => format!("%{r}"),
        IndexOperand::Lit(v) => v.to_string(),
    }
}

fn memref_text(m: &MemRef) -> String {
    match m {
        MemRef::Reg(r) => format!("%{r}"),
        MemRef::Buffer(b) => format!("@{b}"),
    }
}

fn print_ops(out: &mut String, ops: &[CoreOp], depth: usize) {
    let pad = "  ".repeat(depth);
    for op in ops {
        out.push_str(&pad);
        match op {
            CoreOp::Const { dst, value } => match value {
                ConstValue::Index(v) => {
                    let _ = writeln!(out, "%{dst} = arith.constant {v} : index");
                }
                ConstValue::Scalar(s) => {
                    let _ = writeln!(out, "%{dst} = arith.constant {} : {}", s.literal(), s.dtype());
                }
            },
            CoreOp::Arith { dst, op, lhs, rhs, ty } => {
                let _ = writeln!(out, "%{dst} = arith.{op} %{lhs}, %{rhs} : {ty}");
            }
            CoreOp::For { var, lo, hi, step, body } => {
                let _ = writeln!(out, "scf.for %{var} = {lo} to {hi} step {step} {{");
                print_ops(out, body, depth + 1);
                let _ = writeln!(out, "{pad}}}");
            }
            CoreOp::Acquire { dst, fifo, port, n } => {
                if let Some(d) = dst {
                    let _ = write!(out, "%{d} = ");
                }
                let _ = writeln!(out, "aie.objectfifo.acquire @{fifo}({port}, {n})");
            }
            CoreOp::Release { fifo, port, n } => {
                let _ = writeln!(out, "aie.objectfifo.release @{fifo}({port}, {n})");
            }
            CoreOp::Load { dst, src, index, ty } => {
                let _ = writeln!(out, "%{dst} = memref.load {}[{}] : {ty}", memref_text(src), index_text(index));
            }
            CoreOp::Store { value, dst, index, ty } => {
                let _ = writeln!(out, "memref.store %{value}, {}[{}] : {ty}", memref_text(dst), index_text(index));
            }
            CoreOp::VecReduce { dst, combiner, src, acc, lanes, ty } => {
                let _ = writeln!(
                    out,
                    "%{dst} = aievec.reduce {} {}, %{acc} lanes = {lanes} : {ty}",
                    combiner.name(),
                    memref_text(src)
                );
            }
            CoreOp::Call { dst, kernel, args, ty } => {
                if let Some(d) = dst {
                    let _ = write!(out, "%{d} = ");
                }
                let args: Vec<String> = args
                    .iter()
                    .map(|a| match a {
                        CallArg::Reg(r) => format!("%{r}"),
                        CallArg::Buffer(b) => format!("@{b}"),
                        CallArg::Int(v) => v.to_string(),
                    })
                    .collect();
                let _ = write!(out, "func.call @{kernel}({})", args.join(", "));
                match ty {
                    Some(t) => {
                        let _ = writeln!(out, " : {t}");
                    }
                    None => out.push('\n'),
                }
            }
        }
    }
}

/// Canonical `.dprog` text; [`parse_program`](super::parse_program) reads it
/// back to an equal program.
pub fn print_program(p: &DeviceProgram) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "aie.device({}) {{", p.device);
    for t in &p.tiles {
        let _ = match t.kind {
            TileKind::Interface => writeln!(out, "  %{} = aie.shim_tile({})", t.name, t.col),
            TileKind::Memory => writeln!(out, "  %{} = aie.mem_tile({})", t.name, t.col),
            TileKind::Compute => writeln!(out, "  %{} = aie.tile({}, {})", t.name, t.col, t.row),
        };
    }
    for f in &p.fifos {
        let _ = writeln!(
            out,
            "  aie.objectfifo @{}(%{} -> %{}, depth = {}) : {}",
            f.name, f.producer, f.consumer, f.depth, f.obj
        );
    }
    for l in &p.links {
        let _ = write!(out, "  aie.objectfifo.link {} {} -> {}", l.kind.name(), sym_list(&l.sources), sym_list(&l.dests));
        if let LinkKind::Permute(dims) = &l.kind {
            let _ = write!(out, " dims = {}", dims_text(dims));
        }
        out.push('\n');
    }
    for b in &p.buffers {
        let _ = writeln!(out, "  aie.buffer @{}(%{}) : {}", b.name, b.tile, b.obj);
    }
    for c in &p.cores {
        let _ = writeln!(out, "  aie.core(%{}) {{", c.tile);
        print_ops(&mut out, &c.body, 2);
        out.push_str("    aie.end\n  }\n");
    }
    let params: Vec<String> = p.sequence.params.iter().map(|h| format!("%{} : {}", h.name, h.obj)).collect();
    let _ = writeln!(out, "  aie.runtime_sequence({}) {{", params.join(", "));
    for t in &p.sequence.transfers {
        let _ = match t.direction {
            Direction::Input => write!(out, "    aie.dma_in %{} -> @{}", t.param, t.fifo),
            Direction::Output => write!(out, "    aie.dma_out @{} -> %{}", t.fifo, t.param),
        };
        let _ = writeln!(out, " offset = {} dims = {}", t.offset, dims_text(&t.dims));
    }
    out.push_str("  }\n}\n");
    out
}
