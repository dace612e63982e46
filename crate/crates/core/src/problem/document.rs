//! Declarative JSON form of a [`ProblemInstance`].
//!
//! Matrices are stored as arrays of rows. Every metadata field is written
//! explicitly; on load the metadata is recomputed from the data and must agree
//! with the stored values, so a hand-edited document cannot silently carry
//! stale constants.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::constraints::{ConstraintFn, ConstraintSet, JacobianBoundMethod};
use super::instance::{ProblemConstants, ProblemInstance};
use super::operator::{Operator, OperatorKind};
use super::set::SimpleSet;
use crate::error::{FcviError, Result};

/// Relative tolerance when comparing stored and recomputed metadata.
pub const METADATA_RTOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceDocument {
    pub label: String,
    pub set: SimpleSet,
    pub operator: OperatorDocument,
    #[serde(default)]
    pub constraints: Vec<ConstraintDocument>,
    pub metadata: MetadataDocument,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub known_solution: Option<KnownSolutionDocument>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OperatorDocument {
    Affine {
        matrix: Vec<Vec<f64>>,
        offset: Vec<f64>,
    },
    AffinePlusNonsmooth {
        matrix: Vec<Vec<f64>>,
        offset: Vec<f64>,
        nonsmooth_scale: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ConstraintDocument {
    Affine {
        normal: Vec<f64>,
        offset: f64,
    },
    ConvexQuadratic {
        quad: Vec<Vec<f64>>,
        linear: Vec<f64>,
        offset: f64,
    },
    NonsmoothNorm {
        scale: f64,
        center: Vec<f64>,
        offset: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetadataDocument {
    pub l: f64,
    pub h: f64,
    pub l_g: f64,
    pub h_g: f64,
    pub m_g: f64,
    pub d_x: f64,
    pub m_g_method: JacobianBoundMethod,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KnownSolutionDocument {
    pub x: Vec<f64>,
    pub lambda: Vec<f64>,
}

pub(crate) fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

pub(crate) fn matrix_from_rows(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if let Some(i) = rows.iter().position(|r| r.len() != ncols) {
        return Err(FcviError::Input(format!(
            "{what}: row {i} has {} entries, expected {ncols}",
            rows[i].len()
        )));
    }
    Ok(DMatrix::from_row_iterator(nrows, ncols, rows.iter().flatten().copied()))
}

fn close(stored: f64, computed: f64) -> bool {
    (stored - computed).abs() <= METADATA_RTOL * stored.abs().max(computed.abs()).max(1.0)
}

impl ConstraintDocument {
    pub fn from_fn(c: &ConstraintFn) -> Self {
        match c {
            ConstraintFn::Affine { normal, offset } => ConstraintDocument::Affine {
                normal: normal.iter().copied().collect(),
                offset: *offset,
            },
            ConstraintFn::ConvexQuadratic { quad, linear, offset } => ConstraintDocument::ConvexQuadratic {
                quad: rows_of(quad),
                linear: linear.iter().copied().collect(),
                offset: *offset,
            },
            ConstraintFn::NonsmoothNorm { scale, center, offset } => ConstraintDocument::NonsmoothNorm {
                scale: *scale,
                center: center.iter().copied().collect(),
                offset: *offset,
            },
        }
    }

    /// `index` only labels error messages.
    pub fn to_fn(&self, index: usize) -> Result<ConstraintFn> {
        match self {
            ConstraintDocument::Affine { normal, offset } => {
                ConstraintFn::affine(DVector::from_vec(normal.clone()), *offset)
            }
            ConstraintDocument::ConvexQuadratic { quad, linear, offset } => ConstraintFn::quadratic(
                matrix_from_rows(quad, &format!("constraint {index} quad"))?,
                DVector::from_vec(linear.clone()),
                *offset,
            ),
            ConstraintDocument::NonsmoothNorm { scale, center, offset } => {
                ConstraintFn::norm(*scale, DVector::from_vec(center.clone()), *offset)
            }
        }
        .map_err(|e| FcviError::Input(format!("constraint {index}: {e}")))
    }
}

impl InstanceDocument {
    pub fn from_instance(instance: &ProblemInstance) -> Result<Self> {
        let operator = match instance.operator().kind() {
            OperatorKind::Affine { matrix, offset } => OperatorDocument::Affine {
                matrix: rows_of(matrix),
                offset: offset.iter().copied().collect(),
            },
            OperatorKind::AffinePlusNonsmooth {
                matrix,
                offset,
                nonsmooth_scale,
            } => OperatorDocument::AffinePlusNonsmooth {
                matrix: rows_of(matrix),
                offset: offset.iter().copied().collect(),
                nonsmooth_scale: *nonsmooth_scale,
            },
            OperatorKind::Custom { .. } => {
                return Err(FcviError::Unsupported(
                    "instances with a custom operator cannot be serialized".into(),
                ))
            }
        };
        let constraints = instance
            .constraints()
            .items()
            .iter()
            .map(ConstraintDocument::from_fn)
            .collect();
        let c = instance.constants();
        Ok(Self {
            label: instance.label().to_string(),
            set: instance.set().clone(),
            operator,
            constraints,
            metadata: MetadataDocument {
                l: c.l,
                h: c.h,
                l_g: c.l_g,
                h_g: c.h_g,
                m_g: c.m_g,
                d_x: c.d_x,
                m_g_method: instance.constraints().jacobian_bound_method(),
            },
            known_solution: instance.known_solution().map(|k| KnownSolutionDocument {
                x: k.x.iter().copied().collect(),
                lambda: k.lambda.iter().copied().collect(),
            }),
        })
    }

    pub fn to_instance(&self) -> Result<ProblemInstance> {
        self.set.validate()?;
        let n = self.set.dim();
        let operator = match &self.operator {
            OperatorDocument::Affine { matrix, offset } => Operator::affine(
                matrix_from_rows(matrix, "operator matrix")?,
                DVector::from_vec(offset.clone()),
            )?,
            OperatorDocument::AffinePlusNonsmooth {
                matrix,
                offset,
                nonsmooth_scale,
            } => Operator::affine_plus_nonsmooth(
                matrix_from_rows(matrix, "operator matrix")?,
                DVector::from_vec(offset.clone()),
                *nonsmooth_scale,
            )?,
        };
        let mut items = Vec::with_capacity(self.constraints.len());
        for (j, c) in self.constraints.iter().enumerate() {
            items.push(c.to_fn(j)?);
        }
        let constraints = ConstraintSet::new(n, items, &self.set)?;
        let mut instance = ProblemInstance::new(self.label.clone(), self.set.clone(), operator, constraints)?;
        self.check_metadata(&instance.constants(), instance.constraints().jacobian_bound_method())?;
        if let Some(k) = &self.known_solution {
            instance =
                instance.with_known_solution(DVector::from_vec(k.x.clone()), DVector::from_vec(k.lambda.clone()))?;
        }
        Ok(instance)
    }

    fn check_metadata(&self, computed: &ProblemConstants, method: JacobianBoundMethod) -> Result<()> {
        let m = &self.metadata;
        let pairs = [
            ("l", m.l, computed.l),
            ("h", m.h, computed.h),
            ("l_g", m.l_g, computed.l_g),
            ("h_g", m.h_g, computed.h_g),
            ("m_g", m.m_g, computed.m_g),
            ("d_x", m.d_x, computed.d_x),
        ];
        for (name, stored, value) in pairs {
            if !close(stored, value) {
                return Err(FcviError::Input(format!(
                    "metadata field {name} = {stored} disagrees with the value {value} computed from the instance data"
                )));
            }
        }
        if m.m_g_method != method {
            return Err(FcviError::Input(format!(
                "metadata m_g_method {:?} disagrees with computed {:?}",
                m.m_g_method, method
            )));
        }
        Ok(())
    }
}

pub fn instance_to_json(instance: &ProblemInstance) -> Result<String> {
    let doc = InstanceDocument::from_instance(instance)?;
    serde_json::to_string_pretty(&doc).map_err(|source| FcviError::Json { path: None, source })
}

pub fn instance_from_json(text: &str) -> Result<ProblemInstance> {
    let doc: InstanceDocument = serde_json::from_str(text).map_err(|source| FcviError::Json { path: None, source })?;
    doc.to_instance()
}

pub fn load_instance(path: impl AsRef<Path>) -> Result<ProblemInstance> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| FcviError::io(path, e))?;
    let doc: InstanceDocument = serde_json::from_str(&text).map_err(|source| FcviError::Json {
        path: Some(path.display().to_string()),
        source,
    })?;
    doc.to_instance()
}

pub fn save_instance(instance: &ProblemInstance, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = instance_to_json(instance)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| FcviError::io(path, e))
}
