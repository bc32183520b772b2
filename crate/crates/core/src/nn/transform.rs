//! Gradient transforms: how a layer turns ΔZ and its input X into a weight
//! direction. Plain backpropagation uses `ΔZ Xᵀ`; the consequentialism rule
//! replaces `Xᵀ` with the ridge right-pseudoinverse of the batch.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::linalg::{cholesky_solve, gemm, gram, ridge_right_pinv_apply, Matrix};

pub trait GradientTransform: Send + Sync {
    fn name(&self) -> &str;

    /// μ-free direction `D` with ΔW = −μ·D under plain SGD.
    fn direction(&self, dz: &Matrix, x: &Matrix) -> Result<Matrix>;

    /// The N×N matrix `M` with `direction(dz, x) · x = dz · M`: how updating
    /// on one sample moves the outputs of every sample in the batch.
    fn interference(&self, x: &Matrix) -> Result<Matrix>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Plain;

impl GradientTransform for Plain {
    fn name(&self) -> &str {
        "plain"
    }

    fn direction(&self, dz: &Matrix, x: &Matrix) -> Result<Matrix> {
        gemm(dz, x, false, true)
    }

    fn interference(&self, x: &Matrix) -> Result<Matrix> {
        gemm(x, x, true, false)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Consequentialism {
    pub lambda: f64,
}

impl GradientTransform for Consequentialism {
    fn name(&self) -> &str {
        "consequentialism"
    }

    fn direction(&self, dz: &Matrix, x: &Matrix) -> Result<Matrix> {
        ridge_right_pinv_apply(dz, x, self.lambda)
    }

    fn interference(&self, x: &Matrix) -> Result<Matrix> {
        let xtx = gemm(x, x, true, false)?;
        cholesky_solve(&gram(x, self.lambda)?, &xtx)
    }
}

/// Per-sample NLMS normalization `x / (‖x‖² + ε)` applied column by column.
/// Kept as a diagnostic: it leaves the off-diagonal interference in place.
#[derive(Debug, Clone, Copy)]
pub struct NaiveNormalized {
    pub epsilon: f64,
}

impl NaiveNormalized {
    pub fn normalized_columns(&self, x: &Matrix) -> Result<Matrix> {
        let mut out = x.clone();
        for j in 0..x.cols() {
            let denom = (0..x.rows()).map(|i| x[(i, j)] * x[(i, j)]).sum::<f64>() + self.epsilon;
            if denom == 0.0 {
                return Err(Error::DegenerateInput(format!(
                    "column {j} is zero and epsilon = 0"
                )));
            }
            for i in 0..x.rows() {
                out[(i, j)] /= denom;
            }
        }
        Ok(out)
    }
}

impl GradientTransform for NaiveNormalized {
    fn name(&self) -> &str {
        "naive-normalized"
    }

    fn direction(&self, dz: &Matrix, x: &Matrix) -> Result<Matrix> {
        gemm(dz, &self.normalized_columns(x)?, false, true)
    }

    /// Row i of XᵀX divided by `G_ii + ε`, so the diagonal is exactly 1
    /// when ε = 0.
    fn interference(&self, x: &Matrix) -> Result<Matrix> {
        let mut g = gemm(x, x, true, false)?;
        for i in 0..g.rows() {
            let denom = g[(i, i)] + self.epsilon;
            if denom == 0.0 {
                return Err(Error::DegenerateInput(format!("column {i} is zero and epsilon = 0")));
            }
            for j in 0..g.cols() {
                g[(i, j)] /= denom;
            }
        }
        Ok(g)
    }
}

/// Hyperparameters a transform factory may read.
#[derive(Debug, Clone, Copy, Default)]
pub struct TransformParams {
    pub lambda: f64,
    pub epsilon: f64,
}

type TransformFactory = fn(&TransformParams) -> Box<dyn GradientTransform>;

/// Name → constructor table for gradient transforms.
pub struct TransformRegistry {
    factories: BTreeMap<String, TransformFactory>,
}

impl TransformRegistry {
    pub fn empty() -> Self {
        TransformRegistry {
            factories: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, name: &str, factory: TransformFactory) {
        self.factories.insert(name.to_string(), factory);
    }

    pub fn names(&self) -> Vec<&str> {
        self.factories.keys().map(String::as_str).collect()
    }

    pub fn create(&self, name: &str, params: &TransformParams) -> Result<Box<dyn GradientTransform>> {
        let factory = self.factories.get(name).ok_or_else(|| Error::UnknownName {
            kind: "gradient transform",
            name: name.to_string(),
            available: self.names().join(", "),
        })?;
        Ok(factory(params))
    }
}

impl Default for TransformRegistry {
    fn default() -> Self {
        let mut r = TransformRegistry::empty();
        r.register("plain", |_| Box::new(Plain));
        r.register("consequentialism", |p| Box::new(Consequentialism { lambda: p.lambda }));
        r.register("naive-normalized", |p| Box::new(NaiveNormalized { epsilon: p.epsilon }));
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_builds_by_name() {
        let reg = TransformRegistry::default();
        let params = TransformParams { lambda: 0.5, epsilon: 0.0 };
        for name in ["plain", "consequentialism", "naive-normalized"] {
            assert_eq!(reg.create(name, &params).unwrap().name(), name);
        }
        let err = reg.create("svd", &params).err().unwrap();
        assert!(err.to_string().contains("consequentialism"), "{err}");
    }

    #[test]
    fn interference_matches_direction_times_input() {
        let x = Matrix::from_rows(&[[1.0, 0.5, -0.2], [0.3, 2.0, 0.1], [0.0, -1.0, 1.5], [0.7, 0.2, 0.9]]);
        let dz = Matrix::from_rows(&[[0.4, -1.0, 0.25], [1.5, 0.3, -0.6]]);
        let transforms: [Box<dyn GradientTransform>; 3] = [
            Box::new(Plain),
            Box::new(Consequentialism { lambda: 0.1 }),
            Box::new(NaiveNormalized { epsilon: 0.0 }),
        ];
        for t in &transforms {
            let lhs = gemm(&t.direction(&dz, &x).unwrap(), &x, false, false).unwrap();
            let rhs = gemm(&dz, &t.interference(&x).unwrap(), false, false).unwrap();
            assert!(lhs.max_abs_diff(&rhs) < 1e-12, "{}", t.name());
        }
    }
}
