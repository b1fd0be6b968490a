//! Template text: `${EXPR}` interpolation and `{% for v in LO..HI [sep "s"] %}
//! … {% end %}` loops. A line holding nothing but a tag is dropped from the
//! output. Expressions use integers, `+ - * / %`, comparisons, `&&`, `||`
//! and parentheses; uppercase names are placeholders, lowercase names loop
//! variables.

use std::collections::{BTreeSet, HashMap};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Value {
    Int(i64),
    Text(String),
}

impl Value {
    fn render(&self) -> String {
        match self {
            Value::Int(v) => v.to_string(),
            Value::Text(t) => t.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expr {
    Int(i64),
    Name(String),
    Bin(Box<Expr>, BinOp, Box<Expr>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EvalError {
    Unbound(String),
    Other(String),
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr, String> {
        let toks = lex(src)?;
        let mut p = ExprParser { toks, i: 0 };
        let e = p.binary(0)?;
        if p.i != p.toks.len() {
            return Err(format!("unexpected `{}` in `{src}`", p.toks[p.i]));
        }
        Ok(e)
    }

    pub fn names(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Int(_) => {}
            Expr::Name(n) => {
                out.insert(n.clone());
            }
            Expr::Bin(a, _, b) => {
                a.names(out);
                b.names(out);
            }
        }
    }

    pub fn eval(&self, env: &HashMap<String, Value>) -> Result<Value, EvalError> {
        match self {
            Expr::Int(v) => Ok(Value::Int(*v)),
            Expr::Name(n) => env.get(n).cloned().ok_or_else(|| EvalError::Unbound(n.clone())),
            Expr::Bin(a, op, b) => {
                let (Value::Int(x), Value::Int(y)) = (a.eval(env)?, b.eval(env)?) else {
                    return Err(EvalError::Other("arithmetic on a non-integer value".into()));
                };
                let r = match op {
                    BinOp::Add => x.checked_add(y),
                    BinOp::Sub => x.checked_sub(y),
                    BinOp::Mul => x.checked_mul(y),
                    BinOp::Div => x.checked_div(y),
                    BinOp::Rem => x.checked_rem(y),
                    BinOp::Eq => Some((x == y) as i64),
                    BinOp::Ne => Some((x != y) as i64),
                    BinOp::Lt => Some((x < y) as i64),
                    BinOp::Le => Some((x <= y) as i64),
                    BinOp::Gt => Some((x > y) as i64),
                    BinOp::Ge => Some((x >= y) as i64),
                    BinOp::And => Some((x != 0 && y != 0) as i64),
                    BinOp::Or => Some((x != 0 || y != 0) as i64),
                };
                r.map(Value::Int).ok_or_else(|| EvalError::Other("overflow or division by zero".into()))
            }
        }
    }
}

fn lex(src: &str) -> Result<Vec<String>, String> {
    let mut out = Vec::new();
    let cs: Vec<char> = src.chars().collect();
    let mut i = 0;
    while i < cs.len() {
        let c = cs[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_alphanumeric() || c == '_' {
            let s = i;
            while i < cs.len() && (cs[i].is_ascii_alphanumeric() || cs[i] == '_') {
                i += 1;
            }
            out.push(cs[s..i].iter().collect());
        } else {
            let two: String = cs[i..(i + 2).min(cs.len())].iter().collect();
            if ["==", "!=", "<=", ">=", "&&", "||"].contains(&two.as_str()) {
                out.push(two);
                i += 2;
            } else if "+-*/%<>()".contains(c) {
                out.push(c.to_string());
                i += 1;
            } else {
                return Err(format!("unexpected character `{c}` in `{src}`"));
            }
        }
    }
    Ok(out)
}

struct ExprParser {
    toks: Vec<String>,
    i: usize,
}

const LEVELS: &[&[(&str, BinOp)]] = &[
    &[("||", BinOp::Or)],
    &[("&&", BinOp::And)],
    &[("==", BinOp::Eq), ("!=", BinOp::Ne), ("<", BinOp::Lt), ("<=", BinOp::Le), (">", BinOp::Gt), (">=", BinOp::Ge)],
    &[("+", BinOp::Add), ("-", BinOp::Sub)],
    &[("*", BinOp::Mul), ("/", BinOp::Div), ("%", BinOp::Rem)],
];

impl ExprParser {
    fn binary(&mut self, level: usize) -> Result<Expr, String> {
        if level == LEVELS.len() {
            return self.atom();
        }
        let mut lhs = self.binary(level + 1)?;
        while let Some(op) = self.toks.get(self.i).and_then(|t| LEVELS[level].iter().find(|(s, _)| s == t)).map(|(_, o)| *o) {
            self.i += 1;
            let rhs = self.binary(level + 1)?;
            lhs = Expr::Bin(Box::new(lhs), op, Box::new(rhs));
        }
        Ok(lhs)
    }

    fn atom(&mut self) -> Result<Expr, String> {
        let t = self.toks.get(self.i).cloned().ok_or("expression ends early")?;
        self.i += 1;
        if t == "(" {
            let e = self.binary(0)?;
            if self.toks.get(self.i).map(String::as_str) != Some(")") {
                return Err("missing `)`".into());
            }
            self.i += 1;
            return Ok(e);
        }
        if let Ok(v) = t.parse::<i64>() {
            return Ok(Expr::Int(v));
        }
        if t.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_') {
            return Ok(Expr::Name(t));
        }
        Err(format!("unexpected `{t}`"))
    }
}

/// Whether a name refers to a placeholder rather than a loop variable.
pub fn is_placeholder(name: &str) -> bool {
    name.chars().next().is_some_and(|c| c.is_ascii_uppercase())
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Node {
    Text(String),
    Interp(Expr),
    For { var: String, lo: Expr, hi: Expr, sep: String, body: Vec<Node> },
}

/// A parsed template body.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    nodes: Vec<Node>,
}

enum Piece {
    Text(String),
    Interp(Expr),
    Open { var: String, lo: Expr, hi: Expr, sep: String },
    End,
}

fn parse_tag(tag: &str, line: usize) -> Result<Piece, String> {
    let t = tag.trim();
    if t == "end" {
        return Ok(Piece::End);
    }
    let err = || format!("line {line}: malformed tag `{{% {t} %}}`");
    let rest = t.strip_prefix("for ").ok_or_else(err)?;
    let (var, rest) = rest.trim().split_once(" in ").ok_or_else(err)?;
    let var = var.trim();
    if is_placeholder(var) || var.is_empty() || !var.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
        return Err(format!("line {line}: loop variable `{var}` must be a lowercase name"));
    }
    let (range, sep) = match rest.split_once(" sep ") {
        Some((r, s)) => {
            let s = s.trim();
            let s = s.strip_prefix('"').and_then(|s| s.strip_suffix('"')).ok_or_else(err)?;
            (r, s.to_string())
        }
        None => (rest, String::new()),
    };
    let (lo, hi) = range.split_once("..").ok_or_else(err)?;
    let lo = Expr::parse(lo).map_err(|m| format!("line {line}: {m}"))?;
    let hi = Expr::parse(hi).map_err(|m| format!("line {line}: {m}"))?;
    Ok(Piece::Open { var: var.to_string(), lo, hi, sep })
}

fn scan_line(line: &str, n: usize, out: &mut Vec<Piece>) -> Result<(), String> {
    let mut rest = line;
    loop {
        let d = rest.find("${");
        let t = rest.find("{%");
        let next = match (d, t) {
            (None, None) => break,
            (Some(a), Some(b)) => a.min(b),
            (Some(a), None) => a,
            (None, Some(b)) => b,
        };
        if next > 0 {
            out.push(Piece::Text(rest[..next].to_string()));
        }
        rest = &rest[next..];
        if let Some(body) = rest.strip_prefix("${") {
            let close = body.find('}').ok_or_else(|| format!("line {n}: unterminated `${{`"))?;
            out.push(Piece::Interp(Expr::parse(&body[..close]).map_err(|m| format!("line {n}: {m}"))?));
            rest = &body[close + 1..];
        } else {
            let body = &rest[2..];
            let close = body.find("%}").ok_or_else(|| format!("line {n}: unterminated `{{%`"))?;
            out.push(parse_tag(&body[..close], n)?);
            rest = &body[close + 2..];
        }
    }
    if !rest.is_empty() {
        out.push(Piece::Text(rest.to_string()));
    }
    Ok(())
}

impl Template {
    pub fn parse(text: &str) -> Result<Template, String> {
        let mut pieces = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let t = line.trim();
            let standalone = t.starts_with("{%") && t.ends_with("%}") && t.matches("{%").count() == 1;
            scan_line(if standalone { t } else { line }, i + 1, &mut pieces)?;
            if !standalone {
                pieces.push(Piece::Text("\n".into()));
            }
        }
        let mut stack: Vec<(Option<Piece>, Vec<Node>)> = vec![(None, Vec::new())];
        for p in pieces {
            match p {
                Piece::Text(t) => push_text(&mut stack.last_mut().expect("root frame").1, t),
                Piece::Interp(e) => stack.last_mut().expect("root frame").1.push(Node::Interp(e)),
                open @ Piece::Open { .. } => stack.push((Some(open), Vec::new())),
                Piece::End => {
                    if stack.len() == 1 {
                        return Err("`{% end %}` without an open loop".into());
                    }
                    let (Some(Piece::Open { var, lo, hi, sep }), body) = stack.pop().expect("checked") else {
                        unreachable!("only loops open frames")
                    };
                    stack.last_mut().expect("root frame").1.push(Node::For { var, lo, hi, sep, body });
                }
            }
        }
        if stack.len() != 1 {
            return Err("unclosed `{% for %}` loop".into());
        }
        Ok(Template { nodes: stack.pop().expect("root frame").1 })
    }

    /// Placeholder names the template refers to.
    pub fn placeholders(&self) -> BTreeSet<String> {
        fn walk(nodes: &[Node], out: &mut BTreeSet<String>) {
            for n in nodes {
                match n {
                    Node::Text(_) => {}
                    Node::Interp(e) => e.names(out),
                    Node::For { lo, hi, body, .. } => {
                        lo.names(out);
                        hi.names(out);
                        walk(body, out);
                    }
                }
            }
        }
        let mut all = BTreeSet::new();
        walk(&self.nodes, &mut all);
        all.retain(|n| is_placeholder(n));
        all
    }

    pub fn render(&self, env: &HashMap<String, Value>) -> Result<String, EvalError> {
        let mut env = env.clone();
        let mut out = String::new();
        render(&self.nodes, &mut env, &mut out)?;
        Ok(out)
    }
}

fn push_text(nodes: &mut Vec<Node>, t: String) {
    if let Some(Node::Text(prev)) = nodes.last_mut() {
        prev.push_str(&t);
    } else {
        nodes.push(Node::Text(t));
    }
}

fn int(e: &Expr, env: &HashMap<String, Value>) -> Result<i64, EvalError> {
    match e.eval(env)? {
        Value::Int(v) => Ok(v),
        Value::Text(t) => Err(EvalError::Other(format!("loop bound `{t}` is not an integer"))),
    }
}

fn render(nodes: &[Node], env: &mut HashMap<String, Value>, out: &mut String) -> Result<(), EvalError> {
    for n in nodes {
        match n {
            Node::Text(t) => out.push_str(t),
            Node::Interp(e) => out.push_str(&e.eval(env)?.render()),
            Node::For { var, lo, hi, sep, body } => {
                let (lo, hi) = (int(lo, env)?, int(hi, env)?);
                let saved = env.get(var).cloned();
                for v in lo..hi {
                    if v > lo {
                        out.push_str(sep);
                    }
                    env.insert(var.clone(), Value::Int(v));
                    render(body, env, out)?;
                }
                match saved {
                    Some(s) => env.insert(var.clone(), s),
                    None => env.remove(var),
                };
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(pairs: &[(&str, Value)]) -> HashMap<String, Value> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
    }

    #[test]
    fn expressions() {
        let e = env(&[("N", Value::Int(262144)), ("C", Value::Int(4))]);
        let v = |s: &str| Expr::parse(s).unwrap().eval(&e).unwrap();
        assert_eq!(v("N / (C * 4)"), Value::Int(16384));
        assert_eq!(v("2 + 3 * 4"), Value::Int(14));
        assert_eq!(v("N % 16 == 0 && C <= 4"), Value::Int(1));
        assert_eq!(v("10 - 2 - 3"), Value::Int(5));
        assert_eq!(Expr::parse("X + 1").unwrap().eval(&e), Err(EvalError::Unbound("X".into())));
        assert!(Expr::parse("1 +").is_err());
        assert!(Expr::parse("1 $ 2").is_err());
    }

    #[test]
    fn loops_and_separators() {
        let t = Template::parse("a\n{% for c in 0..N %}\nx${c}\n{% end %}\n[{% for r in 1..3 sep \", \" %}@f${r}{% end %}]\n").unwrap();
        let out = t.render(&env(&[("N", Value::Int(2))])).unwrap();
        assert_eq!(out, "a\nx0\nx1\n[@f1, @f2]\n");
        assert_eq!(t.placeholders().into_iter().collect::<Vec<_>>(), vec!["N".to_string()]);
    }

    #[test]
    fn text_values_and_errors() {
        let t = Template::parse("%v = arith.constant ${ID} : ${DT}\n").unwrap();
        let out = t.render(&env(&[("ID", Value::Text("0".into())), ("DT", Value::Text("i32".into()))])).unwrap();
        assert_eq!(out, "%v = arith.constant 0 : i32\n");
        assert!(Template::parse("{% for c in 0..2 %}\n").is_err());
        assert!(Template::parse("{% end %}\n").is_err());
        assert!(Template::parse("${N\n").is_err());
        assert!(Template::parse("{% for C in 0..2 %}\n{% end %}\n").is_err());
    }
}
