//! Per-layer views used to study an update: virtual targets, the μ-LMS
//! update they induce, the per-sample normalized update, and the N×N
//! interference matrices that predict how a batch update moves each sample.

use super::transform::{Consequentialism, GradientTransform, NaiveNormalized, Plain};
use crate::error::{Error, Result};
use crate::linalg::{gemm, Matrix};

/// T̃ = Z − ΔZ.
pub fn virtual_targets(z: &Matrix, dz: &Matrix) -> Result<Matrix> {
    z.sub(dz)
}

/// μ (T̃ − Z) Xᵀ: the μ-LMS update for a layer trained towards `vt`.
pub fn lms_update_from_virtual_targets(x: &Matrix, z: &Matrix, vt: &Matrix, mu: f64) -> Result<Matrix> {
    let e = vt.sub(z)?;
    Ok(gemm(&e, x, false, true)?.scale(mu))
}

/// μ Ẽ X̂ᵀ with each column of X divided by its squared norm plus ε.
pub fn naive_normalized_update(x: &Matrix, e_tilde: &Matrix, mu: f64, epsilon: f64) -> Result<Matrix> {
    Ok(NaiveNormalized { epsilon }.direction(e_tilde, x)?.scale(mu))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InterferenceMode {
    /// XᵀX
    Plain,
    /// X̂ᵀX, unit diagonal
    NaiveNormalized,
    /// (XᵀX + λI)⁻¹ XᵀX
    Consequentialism(f64),
}

pub fn interference_matrix(x: &Matrix, mode: InterferenceMode) -> Result<Matrix> {
    match mode {
        InterferenceMode::Plain => Plain.interference(x),
        InterferenceMode::NaiveNormalized => NaiveNormalized { epsilon: 0.0 }.interference(x),
        InterferenceMode::Consequentialism(lambda) => Consequentialism { lambda }.interference(x),
    }
}

/// ΔW X: how the layer's outputs on the same batch change after the update.
pub fn predicted_error_change(dw: &Matrix, x: &Matrix) -> Result<Matrix> {
    if dw.cols() != x.rows() {
        return Err(Error::DimensionMismatch {
            op: "predicted_error_change",
            lhs: dw.shape(),
            rhs: x.shape(),
        });
    }
    gemm(dw, x, false, false)
}
