use std::fmt::Write;

use super::*;

fn operands(out: &mut String, kw: &str, ops: &[Operand]) {
    let names: Vec<String> = ops.iter().map(|o| format!("%{}", o.name)).collect();
    let types: Vec<String> = ops.iter().map(|o| o.ty.to_string()).collect();
    let _ = write!(out, "{kw}({} : {})", names.join(", "), types.join(", "));
}

/// Render a module in the canonical `.lair` layout accepted by
/// [`parse_module`](super::parse_module).
pub fn print_module(module: &IrModule) -> String {
    let mut out = String::from("module ");
    if let Some(name) = &module.name {
        let _ = write!(out, "@{name} ");
    }
    out.push_str("{\n");
    for stmt in &module.stmts {
        match stmt {
            Stmt::Arg { name, ty } => {
                let _ = writeln!(out, "  %{name} = arg : {ty}");
            }
            Stmt::Constant { name, value } => {
                let _ = writeln!(out, "  %{name} = arith.constant {} : {}", value.literal(), value.dtype());
            }
            Stmt::Empty { name, ty } => {
                let _ = writeln!(out, "  %{name} = tensor.empty : {ty}");
            }
            Stmt::Linalg(op) => print_op(&mut out, op),
        }
    }
    out.push_str("}\n");
    out
}

fn print_op(out: &mut String, op: &LinalgOp) {
    let _ = write!(out, "  %{} = {} ", op.result, op.kind.mnemonic());
    operands(out, "ins", &op.inputs);
    out.push(' ');
    operands(out, "outs", std::slice::from_ref(&op.init));
    match &op.kind {
        OpKind::Reduce { dimensions, body } => {
            let dims: Vec<String> = dimensions.iter().map(|d| d.to_string()).collect();
            let _ = writeln!(out, " dimensions = [{}] {{", dims.join(", "));
            let dt = body.dtype;
            let _ = writeln!(out, "  ^{}(%{} : {dt}, %{} : {dt}):", body.label, body.element, body.accumulator);
            for b in &body.ops {
                let _ = writeln!(out, "    %{} = arith.{} %{}, %{} : {dt}", b.result, b.op, b.lhs, b.rhs);
            }
            let _ = writeln!(out, "    linalg.yield %{} : {dt}", body.yielded);
            out.push_str("  }\n");
        }
        OpKind::Matmul => out.push('\n'),
        OpKind::Transpose => out.push_str(" permutation = [1, 0]\n"),
    }
}
