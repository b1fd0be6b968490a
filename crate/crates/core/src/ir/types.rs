use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Element types the toolkit understands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    Int16,
    Int32,
    BFloat16,
    Float32,
}

impl DType {
    pub const ALL: [DType; 4] = [DType::Int16, DType::Int32, DType::BFloat16, DType::Float32];

    pub fn byte_width(self) -> usize {
        match self {
            DType::Int16 | DType::BFloat16 => 2,
            DType::Int32 | DType::Float32 => 4,
        }
    }

    pub fn bits(self) -> usize {
        self.byte_width() * 8
    }

    pub fn is_float(self) -> bool {
        matches!(self, DType::BFloat16 | DType::Float32)
    }

    /// Short IR mnemonic (`i16`, `i32`, `bf16`, `f32`).
    pub fn mnemonic(self) -> &'static str {
        match self {
            DType::Int16 => "i16",
            DType::Int32 => "i32",
            DType::BFloat16 => "bf16",
            DType::Float32 => "f32",
        }
    }

    /// Long name used in reports (`int16`, `bfloat16`, ...).
    pub fn long_name(self) -> &'static str {
        match self {
            DType::Int16 => "int16",
            DType::Int32 => "int32",
            DType::BFloat16 => "bfloat16",
            DType::Float32 => "float32",
        }
    }

    /// Stable one-byte tag used by binary data files.
    pub fn tag(self) -> u8 {
        match self {
            DType::Int16 => 1,
            DType::Int32 => 2,
            DType::BFloat16 => 3,
            DType::Float32 => 4,
        }
    }

    pub fn from_tag(tag: u8) -> Option<DType> {
        DType::ALL.into_iter().find(|d| d.tag() == tag)
    }
}

impl fmt::Display for DType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.mnemonic())
    }
}

impl FromStr for DType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "i16" | "int16" => Ok(DType::Int16),
            "i32" | "int32" => Ok(DType::Int32),
            "bf16" | "bfloat16" => Ok(DType::BFloat16),
            "f32" | "float32" => Ok(DType::Float32),
            _ => Err(format!("unknown element type `{s}`")),
        }
    }
}

/// A rank-1 or rank-2 tensor type with positive extents.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TensorType {
    shape: Vec<usize>,
    dtype: DType,
}

impl TensorType {
    pub fn new(shape: Vec<usize>, dtype: DType) -> Result<Self, String> {
        if shape.is_empty() || shape.len() > 2 {
            return Err(format!("tensor rank must be 1 or 2, got {}", shape.len()));
        }
        if shape.contains(&0) {
            return Err("tensor extents must be at least 1".into());
        }
        Ok(TensorType { shape, dtype })
    }

    pub fn vector(len: usize, dtype: DType) -> Self {
        TensorType::new(vec![len], dtype).expect("vector length must be positive")
    }

    pub fn matrix(rows: usize, cols: usize, dtype: DType) -> Self {
        TensorType::new(vec![rows, cols], dtype).expect("matrix extents must be positive")
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn element_count(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn byte_size(&self) -> usize {
        self.element_count() * self.dtype.byte_width()
    }

    pub fn with_dtype(&self, dtype: DType) -> TensorType {
        TensorType { shape: self.shape.clone(), dtype }
    }

    /// `256x512xi16`, the body of a `tensor<...>` type.
    pub fn shape_word(&self) -> String {
        let mut s = String::new();
        for e in &self.shape {
            s.push_str(&e.to_string());
            s.push('x');
        }
        s.push_str(self.dtype.mnemonic());
        s
    }

    /// Inverse of [`TensorType::shape_word`].
    pub fn from_shape_word(word: &str) -> Result<Self, String> {
        let parts: Vec<&str> = word.split('x').collect();
        let (dt, dims) = parts.split_last().ok_or("empty tensor type")?;
        let dtype: DType = dt.parse()?;
        let shape = dims
            .iter()
            .map(|d| d.parse::<usize>().map_err(|_| format!("bad tensor extent `{d}`")))
            .collect::<Result<Vec<_>, _>>()?;
        TensorType::new(shape, dtype)
    }
}

impl fmt::Display for TensorType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "tensor<{}>", self.shape_word())
    }
}
