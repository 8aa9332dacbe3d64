//! The six ordinal context fields and the 3×2 context matrix built from them.

use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Context fields in matrix layout order: entry `(r, c)` of a
/// [`ContextMatrix`] holds field `2 * r + c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextField {
    Location,
    Mood,
    Weather,
    Season,
    Daytype,
    EndEmotion,
}

impl ContextField {
    pub const ALL: [ContextField; 6] = [
        ContextField::Location,
        ContextField::Mood,
        ContextField::Weather,
        ContextField::Season,
        ContextField::Daytype,
        ContextField::EndEmotion,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            ContextField::Location => "location",
            ContextField::Mood => "mood",
            ContextField::Weather => "weather",
            ContextField::Season => "season",
            ContextField::Daytype => "daytype",
            ContextField::EndEmotion => "end_emotion",
        }
    }
}

impl fmt::Display for ContextField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Raw code that marks a missing context value in LDOS-CoMoDa exports.
pub const MISSING_CODE: i64 = -1;

/// One interaction's context. `None` marks a missing field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct ContextVector {
    codes: [Option<u32>; 6],
}

impl ContextVector {
    /// Builds a vector from present codes; every code must be ≥ 1.
    pub fn new(codes: [u32; 6]) -> Result<Self> {
        let mut raw = [0i64; 6];
        for (r, c) in raw.iter_mut().zip(codes) {
            *r = i64::from(c);
        }
        Self::from_raw(raw)
    }

    /// Builds a vector from raw file codes: `-1` is missing, codes ≥ 1 are
    /// present, anything else is rejected.
    pub fn from_raw(raw: [i64; 6]) -> Result<Self> {
        let mut codes = [None; 6];
        for (field, (&code, slot)) in ContextField::ALL.iter().zip(raw.iter().zip(codes.iter_mut())) {
            *slot = match code {
                MISSING_CODE => None,
                c if c >= 1 && c <= i64::from(u32::MAX) => Some(c as u32),
                c => {
                    return Err(Error::InvalidContextCode {
                        field: *field,
                        code: c,
                        row: None,
                    })
                }
            };
        }
        Ok(Self { codes })
    }

    pub fn get(&self, field: ContextField) -> Option<u32> {
        self.codes[field.index()]
    }

    pub fn is_missing(&self, field: ContextField) -> bool {
        self.codes[field.index()].is_none()
    }

    pub fn with_missing(mut self, field: ContextField) -> Self {
        self.codes[field.index()] = None;
        self
    }

    pub fn codes(&self) -> &[Option<u32>; 6] {
        &self.codes
    }
}

/// Per-field maximum observed code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextMaxima([u32; 6]);

impl ContextMaxima {
    pub fn new(maxima: [u32; 6]) -> Result<Self> {
        if let Some(f) = ContextField::ALL.iter().find(|f| maxima[f.index()] == 0) {
            return Err(Error::Config(format!("maximum for context field {f} must be >= 1")));
        }
        Ok(Self(maxima))
    }

    /// Maxima over the present codes of `contexts`. Fields that are never
    /// present get a maximum of 1.
    pub fn observe<'a>(contexts: impl IntoIterator<Item = &'a ContextVector>) -> Self {
        let mut maxima = [1u32; 6];
        for ctx in contexts {
            for (m, code) in maxima.iter_mut().zip(ctx.codes.iter()) {
                if let Some(c) = code {
                    *m = (*m).max(*c);
                }
            }
        }
        Self(maxima)
    }

    pub fn get(&self, field: ContextField) -> u32 {
        self.0[field.index()]
    }

    pub fn as_array(&self) -> [u32; 6] {
        self.0
    }
}

/// How a missing field is filled when the context matrix is built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingPolicy {
    /// Mean of the field's present normalized values over the training split.
    #[default]
    Mean,
    /// Constant 0.5.
    #[serde(rename = "const05")]
    Const05,
}

/// How a present code above its field maximum is treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RangePolicy {
    #[default]
    Error,
    /// Clamp the normalized entry to 1.0.
    Clamp,
}

/// Resolved fill values for missing fields.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MissingFill([f64; 6]);

impl MissingFill {
    pub fn constant(value: f64) -> Self {
        Self([value; 6])
    }

    pub fn field_means(means: [f64; 6]) -> Self {
        Self(means)
    }

    pub fn get(&self, field: ContextField) -> f64 {
        self.0[field.index()]
    }
}

/// Everything needed to turn a [`ContextVector`] into a [`ContextMatrix`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContextEncoder {
    pub maxima: ContextMaxima,
    pub fill: MissingFill,
    pub range: RangePolicy,
}

impl ContextEncoder {
    pub fn encode(&self, ctx: &ContextVector) -> Result<ContextMatrix> {
        build_context_matrix(ctx, &self.maxima, &self.fill, self.range)
    }
}

/// The 3×2 context matrix, row-major
/// `[[location, mood], [weather, season], [daytype, end_emotion]]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ContextMatrix(pub [[f64; 2]; 3]);

impl ContextMatrix {
    pub const ROWS: usize = 3;
    pub const COLS: usize = 2;

    pub fn ones() -> Self {
        Self([[1.0; 2]; 3])
    }

    pub fn zeros() -> Self {
        Self([[0.0; 2]; 3])
    }

    pub fn from_flat(flat: [f64; 6]) -> Self {
        Self([[flat[0], flat[1]], [flat[2], flat[3]], [flat[4], flat[5]]])
    }

    pub fn to_flat(&self) -> [f64; 6] {
        let m = &self.0;
        [m[0][0], m[0][1], m[1][0], m[1][1], m[2][0], m[2][1]]
    }

    /// `C · v`
    pub fn mul_vec(&self, v: &[f64; 2]) -> [f64; 3] {
        let m = &self.0;
        [
            m[0][0] * v[0] + m[0][1] * v[1],
            m[1][0] * v[0] + m[1][1] * v[1],
            m[2][0] * v[0] + m[2][1] * v[1],
        ]
    }

    /// `Cᵀ · u`
    pub fn tmul_vec(&self, u: &[f64; 3]) -> [f64; 2] {
        let m = &self.0;
        [
            m[0][0] * u[0] + m[1][0] * u[1] + m[2][0] * u[2],
            m[0][1] * u[0] + m[1][1] * u[1] + m[2][1] * u[2],
        ]
    }

    /// `uᵀ · C · v`
    pub fn bilinear(&self, u: &[f64; 3], v: &[f64; 2]) -> f64 {
        let cv = self.mul_vec(v);
        u[0] * cv[0] + u[1] * cv[1] + u[2] * cv[2]
    }

    /// Elementwise mean; `None` for an empty input.
    pub fn mean<'a>(matrices: impl IntoIterator<Item = &'a ContextMatrix>) -> Option<Self> {
        let mut sum = [0.0; 6];
        let mut n = 0usize;
        for m in matrices {
            for (s, x) in sum.iter_mut().zip(m.to_flat()) {
                *s += x;
            }
            n += 1;
        }
        (n > 0).then(|| Self::from_flat(sum.map(|s| s / n as f64)))
    }

    pub fn is_finite(&self) -> bool {
        self.to_flat().iter().all(|x| x.is_finite())
    }
}

impl Index<(usize, usize)> for ContextMatrix {
    type Output = f64;

    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.0[r][c]
    }
}

impl IndexMut<(usize, usize)> for ContextMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.0[r][c]
    }
}

/// Normalizes each present code by its field maximum and fills missing
/// fields from `fill`.
pub fn build_context_matrix(
    ctx: &ContextVector,
    maxima: &ContextMaxima,
    fill: &MissingFill,
    range: RangePolicy,
) -> Result<ContextMatrix> {
    let mut flat = [0.0; 6];
    for field in ContextField::ALL {
        let max = maxima.get(field);
        flat[field.index()] = match ctx.get(field) {
            None => fill.get(field),
            Some(code) if code > max => match range {
                RangePolicy::Error => return Err(Error::ContextOutOfRange { field, code, max }),
                RangePolicy::Clamp => 1.0,
            },
            Some(code) => f64::from(code) / f64::from(max),
        };
    }
    Ok(ContextMatrix::from_flat(flat))
}
