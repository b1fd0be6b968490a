//! Device-program templates and their specialization.
//!
//! A library directory holds `<family>/<name>.tmpl` with a sibling
//! `<name>.manifest` (TOML):
//!
//! ```toml
//! name = "reduce_tiles"
//! kinds = ["sum", "product", "maxval", "minval"]
//! dtypes = ["i16", "i32", "bf16", "f32"]
//! max_total_bytes = 524288          # optional
//!
//! [placeholders]
//! N = "int"                         # int | dtype | ident | scalar
//!
//! [[require]]
//! expr = "N % 16 == 0"
//! message = "element count not divisible by batching factor"
//! ```
//!
//! Placeholders bound from [`SpecParams`]:
//!
//! | name        | sort   | source                          |
//! |-------------|--------|---------------------------------|
//! | `DT`        | dtype  | `dtype`                         |
//! | `OUT_DT`    | dtype  | `out_dtype`                     |
//! | `N`         | int    | `total_elements`                |
//! | `IN_ROWS`, `IN_COLS` | int | `extents`                 |
//! | `MM`, `KK`, `NN` | int | `matmul` (m, k, n)            |
//! | `COLUMNS`   | int    | `columns_used`                  |
//! | `ROWS`      | int    | `rows_per_column`               |
//! | `BATCH`     | int    | `batch_elements`                |
//! | `DEPTH`     | int    | `fifo_depth_elements`           |
//! | `KERNEL`    | ident  | `kernel`                        |
//! | `IDENTITY`  | scalar | `identity`                      |

pub mod template;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::categorize::IntrinsicKind;
use crate::device::{self, DeviceProgram, COMPUTE_ROWS, COMPUTE_TILE_BYTES, INTERFACE_COLUMNS};
use crate::ir::DType;
use crate::scalar::Scalar;
use template::{EvalError, Expr, Template, Value};

/// Environment variable naming a template library directory.
pub const LIBDIR_ENV: &str = "NPUFLOW_LIBDIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sort {
    Int,
    Dtype,
    Ident,
    Scalar,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum KernelError {
    #[error("no template for {kind} on {dtype}")]
    NotFound { kind: IntrinsicKind, dtype: DType },
    #[error("no template named `{0}`")]
    NoSuchTemplate(String),
    #[error("corrupt template {name}: {message}")]
    CorruptTemplate { name: String, message: String },
    #[error("constraint violated: {0}")]
    ConstraintViolation(String),
    #[error("placeholder {0} is not bound")]
    UnboundPlaceholder(String),
    #[error("{name} specializes to an invalid program: {}", .diagnostics.join("; "))]
    InvalidProgram { name: String, diagnostics: Vec<String> },
    #[error("cannot read template library {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    name: String,
    #[serde(default)]
    kinds: Vec<String>,
    dtypes: Vec<String>,
    max_total_bytes: Option<usize>,
    #[serde(default)]
    placeholders: BTreeMap<String, Sort>,
    #[serde(default)]
    require: Vec<RequireEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RequireEntry {
    expr: String,
    message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Requirement {
    pub expr: Expr,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelTemplate {
    pub name: String,
    pub family: String,
    pub kinds: Vec<IntrinsicKind>,
    pub dtypes: Vec<DType>,
    pub max_total_bytes: Option<usize>,
    pub placeholders: BTreeMap<String, Sort>,
    pub requires: Vec<Requirement>,
    pub text: String,
    body: Template,
}

impl KernelTemplate {
    /// Build a template from manifest and template text, checking that the
    /// text and the schema name the same placeholders.
    pub fn from_parts(family: &str, manifest: &str, text: &str) -> Result<Self, KernelError> {
        let m: Manifest = toml::from_str(manifest).map_err(|e| KernelError::CorruptTemplate {
            name: format!("{family}/?"),
            message: e.to_string(),
        })?;
        let corrupt = |message: String| KernelError::CorruptTemplate { name: m.name.clone(), message };
        let kinds = m
            .kinds
            .iter()
            .map(|k| k.parse::<IntrinsicKind>().map_err(|_| corrupt(format!("unknown kind `{k}`"))))
            .collect::<Result<Vec<_>, _>>()?;
        let dtypes = m
            .dtypes
            .iter()
            .map(|d| d.parse::<DType>().map_err(|_| corrupt(format!("unknown dtype `{d}`"))))
            .collect::<Result<Vec<_>, _>>()?;
        let body = Template::parse(text).map_err(corrupt)?;
        let used = body.placeholders();
        let declared: BTreeSet<String> = m.placeholders.keys().cloned().collect();
        if let Some(n) = used.difference(&declared).next() {
            return Err(corrupt(format!("placeholder {n} is used but not declared")));
        }
        if let Some(n) = declared.difference(&used).next() {
            return Err(corrupt(format!("placeholder {n} is declared but never used")));
        }
        let mut requires = Vec::new();
        for r in &m.require {
            let expr = Expr::parse(&r.expr).map_err(|e| corrupt(format!("requirement `{}`: {e}", r.expr)))?;
            let mut names = BTreeSet::new();
            expr.names(&mut names);
            if let Some(n) = names.iter().find(|n| !declared.contains(*n)) {
                return Err(corrupt(format!("requirement `{}` names undeclared {n}", r.expr)));
            }
            requires.push(Requirement { expr, message: r.message.clone() });
        }
        Ok(KernelTemplate {
            name: m.name,
            family: family.to_string(),
            kinds,
            dtypes,
            max_total_bytes: m.max_total_bytes,
            placeholders: m.placeholders,
            requires,
            text: text.to_string(),
            body,
        })
    }

    pub fn serves(&self, kind: IntrinsicKind, dtype: DType) -> bool {
        self.kinds.contains(&kind) && self.dtypes.contains(&dtype)
    }

    /// Render the template text for `params` without parsing it.
    pub fn render(&self, params: &SpecParams) -> Result<String, KernelError> {
        self.check_params(params)?;
        let env = params.bindings();
        for (name, sort) in &self.placeholders {
            match env.get(name) {
                None => return Err(KernelError::UnboundPlaceholder(name.clone())),
                Some(Value::Int(_)) if *sort != Sort::Int => {
                    return Err(KernelError::ConstraintViolation(format!("{name} must be a {sort:?} value")))
                }
                Some(Value::Text(_)) if *sort == Sort::Int => {
                    return Err(KernelError::ConstraintViolation(format!("{name} must be an integer")))
                }
                _ => {}
            }
        }
        let env: HashMap<String, Value> = env.into_iter().filter(|(k, _)| self.placeholders.contains_key(k)).collect();
        for r in &self.requires {
            match r.expr.eval(&env) {
                Ok(Value::Int(0)) => return Err(KernelError::ConstraintViolation(r.message.clone())),
                Ok(_) => {}
                Err(e) => return Err(eval_error(e)),
            }
        }
        let out = self.body.render(&env).map_err(eval_error)?;
        if out.contains("${") || out.contains("{%") {
            return Err(KernelError::CorruptTemplate { name: self.name.clone(), message: "placeholder text survives rendering".into() });
        }
        Ok(out)
    }

    fn check_params(&self, p: &SpecParams) -> Result<(), KernelError> {
        let bad = |m: String| Err(KernelError::ConstraintViolation(m));
        if !self.dtypes.contains(&p.dtype) {
            return bad(format!("{} does not support {}", self.name, p.dtype));
        }
        if !(1..=INTERFACE_COLUMNS).contains(&p.columns_used) {
            return bad(format!("columns_used must be 1..={INTERFACE_COLUMNS}, got {}", p.columns_used));
        }
        if !(1..=COMPUTE_ROWS).contains(&p.rows_per_column) {
            return bad(format!("rows_per_column must be 1..={COMPUTE_ROWS}, got {}", p.rows_per_column));
        }
        if p.batch_elements * p.dtype.byte_width() > COMPUTE_TILE_BYTES {
            return bad(format!("a batch of {} {} exceeds 64KB compute tile memory", p.batch_elements, p.dtype));
        }
        if let Some(max) = self.max_total_bytes {
            if p.total_elements * p.dtype.byte_width() > max {
                return bad("exceeds memory tile".into());
            }
        }
        Ok(())
    }
}

fn eval_error(e: EvalError) -> KernelError {
    match e {
        EvalError::Unbound(n) => KernelError::UnboundPlaceholder(n),
        EvalError::Other(m) => KernelError::ConstraintViolation(m),
    }
}

/// Values that instantiate a template.
#[derive(Debug, Clone, PartialEq)]
pub struct SpecParams {
    pub dtype: DType,
    pub out_dtype: Option<DType>,
    pub total_elements: usize,
    /// Rows and columns of a rank-2 operand.
    pub extents: Option<(usize, usize)>,
    /// (m, k, n) of a matrix product.
    pub matmul: Option<(usize, usize, usize)>,
    pub columns_used: usize,
    pub rows_per_column: usize,
    pub batch_elements: usize,
    pub fifo_depth_elements: usize,
    /// External kernel called from core programs.
    pub kernel: Option<String>,
    pub identity: Option<Scalar>,
}

impl SpecParams {
    pub fn new(dtype: DType, total_elements: usize) -> Self {
        SpecParams {
            dtype,
            out_dtype: None,
            total_elements,
            extents: None,
            matmul: None,
            columns_used: 1,
            rows_per_column: 1,
            batch_elements: 0,
            fifo_depth_elements: 0,
            kernel: None,
            identity: None,
        }
    }

    pub fn bindings(&self) -> HashMap<String, Value> {
        let int = |v: usize| Value::Int(v as i64);
        let mut m = HashMap::new();
        m.insert("DT".into(), Value::Text(self.dtype.mnemonic().into()));
        m.insert("N".into(), int(self.total_elements));
        m.insert("COLUMNS".into(), int(self.columns_used));
        m.insert("ROWS".into(), int(self.rows_per_column));
        m.insert("BATCH".into(), int(self.batch_elements));
        m.insert("DEPTH".into(), int(self.fifo_depth_elements));
        if let Some(d) = self.out_dtype {
            m.insert("OUT_DT".into(), Value::Text(d.mnemonic().into()));
        }
        if let Some((r, c)) = self.extents {
            m.insert("IN_ROWS".into(), int(r));
            m.insert("IN_COLS".into(), int(c));
        }
        if let Some((a, b, c)) = self.matmul {
            m.insert("MM".into(), int(a));
            m.insert("KK".into(), int(b));
            m.insert("NN".into(), int(c));
        }
        if let Some(k) = &self.kernel {
            m.insert("KERNEL".into(), Value::Text(k.clone()));
        }
        if let Some(s) = self.identity {
            m.insert("IDENTITY".into(), Value::Text(s.literal()));
        }
        m
    }
}

/// Substitute `params` into `template`, parse and validate the result.
pub fn specialize_template(template: &KernelTemplate, params: &SpecParams) -> Result<DeviceProgram, KernelError> {
    let text = template.render(params)?;
    let invalid = |diagnostics: Vec<String>| KernelError::InvalidProgram { name: template.name.clone(), diagnostics };
    let p = device::parse_program(&text).map_err(|e| invalid(vec![e.to_string()]))?;
    let diags = device::validate_program(&p);
    if !diags.is_empty() {
        return Err(invalid(diags.into_iter().map(|d| d.message).collect()));
    }
    Ok(p)
}

const BUILTIN: &[(&str, &str, &str)] = &[
    ("reduce", include_str!("../../kernels/reduce/reduce_tiles.manifest"), include_str!("../../kernels/reduce/reduce_tiles.tmpl")),
    (
        "transpose",
        include_str!("../../kernels/transpose/transpose_memtile.manifest"),
        include_str!("../../kernels/transpose/transpose_memtile.tmpl"),
    ),
    ("matmul", include_str!("../../kernels/matmul/matmul_tiles.manifest"), include_str!("../../kernels/matmul/matmul_tiles.tmpl")),
    ("eltwise", include_str!("../../kernels/eltwise/scalar_add.manifest"), include_str!("../../kernels/eltwise/scalar_add.tmpl")),
];

/// A read-only set of templates.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelLibrary {
    templates: Vec<KernelTemplate>,
}

impl KernelLibrary {
    /// The templates shipped in the crate's `kernels/` directory.
    pub fn builtin() -> Self {
        let templates = BUILTIN
            .iter()
            .map(|(f, m, t)| KernelTemplate::from_parts(f, m, t).expect("built-in templates are well formed"))
            .collect();
        KernelLibrary { templates }
    }

    /// Load every `<family>/<name>.manifest` + `.tmpl` pair under `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self, KernelError> {
        let io = |p: &Path, e: std::io::Error| KernelError::Io { path: p.display().to_string(), message: e.to_string() };
        let mut families: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(|e| io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_dir())
            .collect();
        families.sort();
        let mut templates = Vec::new();
        for fam in families {
            let family = fam.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
            let mut manifests: Vec<PathBuf> = std::fs::read_dir(&fam)
                .map_err(|e| io(&fam, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "manifest"))
                .collect();
            manifests.sort();
            for mpath in manifests {
                let tpath = mpath.with_extension("tmpl");
                let manifest = std::fs::read_to_string(&mpath).map_err(|e| io(&mpath, e))?;
                let text = std::fs::read_to_string(&tpath).map_err(|e| KernelError::CorruptTemplate {
                    name: mpath.display().to_string(),
                    message: format!("missing template text {}: {e}", tpath.display()),
                })?;
                templates.push(KernelTemplate::from_parts(&family, &manifest, &text)?);
            }
        }
        Ok(KernelLibrary { templates })
    }

    /// The library at `flag`, else at `$NPUFLOW_LIBDIR`, else the built-ins.
    pub fn resolve(flag: Option<&Path>) -> Result<Self, KernelError> {
        if let Some(p) = flag {
            return Self::load_dir(p);
        }
        match std::env::var_os(LIBDIR_ENV) {
            Some(p) if !p.is_empty() => Self::load_dir(Path::new(&p)),
            _ => Ok(Self::builtin()),
        }
    }

    pub fn templates(&self) -> &[KernelTemplate] {
        &self.templates
    }

    pub fn lookup_template(&self, kind: IntrinsicKind, dtype: DType) -> Result<&KernelTemplate, KernelError> {
        self.templates.iter().find(|t| t.serves(kind, dtype)).ok_or(KernelError::NotFound { kind, dtype })
    }

    pub fn by_name(&self, name: &str) -> Result<&KernelTemplate, KernelError> {
        self.templates.iter().find(|t| t.name == name).ok_or_else(|| KernelError::NoSuchTemplate(name.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::{print_program, TileKind};
    use crate::scalar::Combiner;
    use crate::sim::builtins;

    fn reduce_params(dtype: DType, n: usize) -> SpecParams {
        SpecParams {
            columns_used: 4,
            rows_per_column: 4,
            batch_elements: 16384,
            kernel: Some(builtins::reduce_kernel_name(Combiner::Add, dtype)),
            identity: Some(Scalar::identity(Combiner::Add, dtype)),
            ..SpecParams::new(dtype, n)
        }
    }

    #[test]
    fn lookup_by_kind_and_dtype() {
        let lib = KernelLibrary::builtin();
        assert_eq!(lib.lookup_template(IntrinsicKind::Sum, DType::Int32).unwrap().name, "reduce_tiles");
        assert_eq!(lib.lookup_template(IntrinsicKind::Minval, DType::Float32).unwrap().name, "reduce_tiles");
        assert_eq!(lib.lookup_template(IntrinsicKind::Transpose, DType::Int32).unwrap().name, "transpose_memtile");
        assert_eq!(lib.lookup_template(IntrinsicKind::Matmul, DType::BFloat16).unwrap().name, "matmul_tiles");
        assert_eq!(
            lib.lookup_template(IntrinsicKind::Matmul, DType::Float32),
            Err(KernelError::NotFound { kind: IntrinsicKind::Matmul, dtype: DType::Float32 })
        );
    }

    #[test]
    fn reduction_uses_sixteen_cores() {
        let lib = KernelLibrary::builtin();
        let t = lib.lookup_template(IntrinsicKind::Sum, DType::Int32).unwrap();
        let p = specialize_template(t, &reduce_params(DType::Int32, 262144)).unwrap();
        assert_eq!(p.cores.len(), 16);
        assert_eq!(p.tiles.iter().filter(|t| t.kind == TileKind::Compute).count(), 16);
        for core in &p.cores {
            let f = p.fifos.iter().find(|f| f.consumer == core.tile).unwrap();
            assert_eq!(f.obj.elems, 16384);
        }
        assert_eq!(p.sequence.params[1].obj.bytes(), 64);
        // same params, same program
        assert_eq!(specialize_template(t, &reduce_params(DType::Int32, 262144)).unwrap(), p);
    }

    #[test]
    fn scalar_add_shape() {
        let lib = KernelLibrary::builtin();
        let t = lib.by_name("scalar_add").unwrap();
        let params = SpecParams { fifo_depth_elements: 32, ..SpecParams::new(DType::Int32, 32) };
        let p = specialize_template(t, &params).unwrap();
        let expect = device::parse_program(device::SCALAR_ADD).unwrap();
        assert_eq!(print_program(&p), print_program(&expect));
    }

    #[test]
    fn constraint_and_binding_errors() {
        let lib = KernelLibrary::builtin();
        let t = lib.lookup_template(IntrinsicKind::Sum, DType::Int32).unwrap();
        assert_eq!(
            specialize_template(t, &reduce_params(DType::Int32, 100000)),
            Err(KernelError::ConstraintViolation("element count not divisible by batching factor".into()))
        );
        let unbound = SpecParams { kernel: None, ..reduce_params(DType::Int32, 262144) };
        assert_eq!(specialize_template(t, &unbound), Err(KernelError::UnboundPlaceholder("KERNEL".into())));
        let big = SpecParams { batch_elements: 32768, ..reduce_params(DType::Int32, 524288) };
        assert!(matches!(specialize_template(t, &big), Err(KernelError::ConstraintViolation(_))));
        let wide = SpecParams { columns_used: 5, ..reduce_params(DType::Int32, 262144) };
        assert!(matches!(specialize_template(t, &wide), Err(KernelError::ConstraintViolation(_))));

        let tr = lib.lookup_template(IntrinsicKind::Transpose, DType::Int32).unwrap();
        let p = |r, c| SpecParams { extents: Some((r, c)), ..SpecParams::new(DType::Int32, r * c) };
        assert!(specialize_template(tr, &p(512, 256)).is_ok());
        assert_eq!(specialize_template(tr, &p(512, 512)), Err(KernelError::ConstraintViolation("exceeds memory tile".into())));
    }

    #[test]
    fn matmul_and_transpose_validate() {
        let lib = KernelLibrary::builtin();
        for (i, o) in [(DType::Int16, DType::Int32), (DType::BFloat16, DType::Float32)] {
            let t = lib.lookup_template(IntrinsicKind::Matmul, i).unwrap();
            let params = SpecParams {
                out_dtype: Some(o),
                matmul: Some((256, 256, 512)),
                columns_used: 4,
                rows_per_column: 4,
                kernel: builtins::matmul_kernel_name(i, o),
                ..SpecParams::new(i, 256 * 256)
            };
            let p = specialize_template(t, &params).unwrap();
            assert_eq!(p.cores.len(), 16);
        }
        let tr = lib.lookup_template(IntrinsicKind::Transpose, DType::Float32).unwrap();
        let p = specialize_template(tr, &SpecParams { extents: Some((3, 5)), ..SpecParams::new(DType::Float32, 15) }).unwrap();
        assert!(p.cores.is_empty());
    }

    #[test]
    fn schema_must_match_text() {
        let m = "name = \"t\"\ndtypes = [\"i32\"]\n[placeholders]\nN = \"int\"\n";
        assert!(KernelTemplate::from_parts("x", m, "${N}\n").is_ok());
        let err = KernelTemplate::from_parts("x", m, "${N} ${M}\n").unwrap_err();
        assert!(err.to_string().contains("M is used but not declared"), "{err}");
        let err = KernelTemplate::from_parts("x", m, "nothing\n").unwrap_err();
        assert!(err.to_string().contains("N is declared but never used"), "{err}");
        assert!(KernelTemplate::from_parts("x", "name = 1", "").is_err());
        let bad_req = format!("{m}[[require]]\nexpr = \"Q > 1\"\nmessage = \"q\"\n");
        assert!(KernelTemplate::from_parts("x", &bad_req, "${N}\n").is_err());
    }

    #[test]
    fn load_dir_matches_builtin() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("kernels");
        let names = |l: &KernelLibrary| {
            let mut v: Vec<(String, String)> = l.templates().iter().map(|t| (t.name.clone(), t.text.clone())).collect();
            v.sort();
            v
        };
        assert_eq!(names(&KernelLibrary::load_dir(&dir).unwrap()), names(&KernelLibrary::builtin()));
        assert!(matches!(KernelLibrary::load_dir(Path::new("/nonexistent/lib")), Err(KernelError::Io { .. })));
    }
}
