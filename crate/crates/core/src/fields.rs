//! Background data of the space: the (pseudo-)Riemannian metric `a_ij(x)`,
//! the axis 1-form `b_i(x)`, and the charge scalar `g(x)`, each either
//! constant or polynomial so every x-derivative is exact, together with the
//! Riemannian connection objects built from them.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{symmetric_eigenvalues, Tensor3};
use crate::poly::Poly;

pub const CHARGE_RANGE: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Signature {
    /// All eigenvalues of `a_ij` positive.
    PositiveDefinite,
    /// Time-space signature (+,-,...,-).
    TimeSpace,
}

/// Scalar field with precomputed exact gradient.
#[derive(Debug, Clone)]
pub struct ScalarField {
    value: Poly,
    grad: Vec<Poly>,
}

impl ScalarField {
    pub fn new(value: Poly) -> Self {
        let grad = (0..value.nvars()).map(|k| value.partial(k)).collect();
        ScalarField { value, grad }
    }

    pub fn constant(nvars: usize, v: f64) -> Self {
        ScalarField::new(Poly::constant(nvars, v))
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.value.eval(x)
    }

    pub fn grad_eval(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.grad.len(), self.grad.iter().map(|p| p.eval(x)))
    }

    pub fn is_constant(&self) -> bool {
        self.value.is_constant()
    }

    pub fn poly(&self) -> &Poly {
        &self.value
    }
}

/// Covector field b_i(x) with exact partials.
#[derive(Debug, Clone)]
pub struct CovectorField {
    components: Vec<ScalarField>,
}

impl CovectorField {
    pub fn new(components: Vec<Poly>) -> Self {
        CovectorField {
            components: components.into_iter().map(ScalarField::new).collect(),
        }
    }

    pub fn constant(nvars: usize, values: &[f64]) -> Self {
        CovectorField::new(values.iter().map(|&v| Poly::constant(nvars, v)).collect())
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn eval(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.dim(), self.components.iter().map(|c| c.eval(x)))
    }

    /// Partial matrix d[k][j] = ∂_k b_j.
    pub fn partials(&self, x: &[f64]) -> DMatrix<f64> {
        let n = self.dim();
        let grads: Vec<DVector<f64>> = self.components.iter().map(|c| c.grad_eval(x)).collect();
        DMatrix::from_fn(n, n, |k, j| grads[j][k])
    }

    pub fn is_constant(&self) -> bool {
        self.components.iter().all(|c| c.is_constant())
    }

    pub fn component(&self, i: usize) -> &ScalarField {
        &self.components[i]
    }
}

/// Symmetric rank-2 field a_ij(x) with exact partials.
#[derive(Debug, Clone)]
pub struct MetricField {
    n: usize,
    components: Vec<ScalarField>, // row-major n*n, kept symmetric
}

impl MetricField {
    pub fn new(n: usize, components: Vec<Poly>) -> Result<Self> {
        if components.len() != n * n {
            return Err(Error::InvalidScenario(format!(
                "metric field needs {} components, got {}",
                n * n,
                components.len()
            )));
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if components[i * n + j] != components[j * n + i] {
                    return Err(Error::InvalidScenario(format!(
                        "metric field components ({i},{j}) and ({j},{i}) differ"
                    )));
                }
            }
        }
        Ok(MetricField {
            n,
            components: components.into_iter().map(ScalarField::new).collect(),
        })
    }

    pub fn identity(n: usize) -> Self {
        let comps = (0..n * n)
            .map(|idx| Poly::constant(n, if idx / n == idx % n { 1.0 } else { 0.0 }))
            .collect();
        MetricField::new(n, comps).unwrap()
    }

    pub fn diagonal(n: usize, diag: &[f64]) -> Self {
        let comps = (0..n * n)
            .map(|idx| {
                Poly::constant(
                    n,
                    if idx / n == idx % n {
                        diag[idx / n]
                    } else {
                        0.0
                    },
                )
            })
            .collect();
        MetricField::new(n, comps).unwrap()
    }

    pub fn eval(&self, x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| {
            self.components[i * self.n + j].eval(x)
        })
    }

    /// Exact partials t[k][i][j] = ∂_k a_ij.
    pub fn partials(&self, x: &[f64]) -> Tensor3 {
        let mut t = Tensor3::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                let grad = self.components[i * self.n + j].grad_eval(x);
                for k in 0..self.n {
                    t.set(k, i, j, grad[k]);
                }
            }
        }
        t
    }

    pub fn is_constant(&self) -> bool {
        self.components.iter().all(|c| c.is_constant())
    }

    pub fn component(&self, i: usize, j: usize) -> &ScalarField {
        &self.components[i * self.n + j]
    }
}

/// The full background data of a scenario; immutable once constructed, so
/// every evaluation is a pure function of `(fields, x, y)`.
#[derive(Debug, Clone)]
pub struct FieldSet {
    dim: usize,
    signature: Signature,
    a: MetricField,
    b: CovectorField,
    g: ScalarField,
}

/// Everything evaluated at one base point x: field values, exact first
/// derivatives, and the Riemannian connection objects.
#[derive(Debug, Clone)]
pub struct PointFields {
    pub x: Vec<f64>,
    pub signature: Signature,
    pub a: DMatrix<f64>,
    pub a_inv: DMatrix<f64>,
    pub det_a: f64,
    /// ∂_k a_ij, slot order (k, i, j).
    pub da: Tensor3,
    pub b_cov: DVector<f64>,
    pub b_con: DVector<f64>,
    /// ∂_k b_j, entry (k, j).
    pub db: DMatrix<f64>,
    pub c_sq: f64,
    pub c: f64,
    /// True when the SR-case norm check 0 < c < 1 failed (warning, not error).
    pub c_warning: bool,
    pub charge: f64,
    pub charge_grad: DVector<f64>,
    /// Christoffel symbols a^k_ij, slot order (k, i, j); symmetric in (i, j).
    pub christoffel: Tensor3,
    /// ∇_i b_j.
    pub nabla_b: DMatrix<f64>,
}

/// Antisymmetrized derivative of the 1-form and its contractions with y.
#[derive(Debug, Clone)]
pub struct FTensors {
    /// f_mn = ∂_m b_n − ∂_n b_m.
    pub antisym: DMatrix<f64>,
    /// f_j = f_jn y^n.
    pub lowered: DVector<f64>,
    /// f^i = a^ik f_kn y^n.
    pub raised: DVector<f64>,
}

impl FieldSet {
    pub fn new(
        dim: usize,
        signature: Signature,
        a: MetricField,
        b: CovectorField,
        g: ScalarField,
    ) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidScenario(format!(
                "dimension must be at least 2, got {dim}"
            )));
        }
        if b.dim() != dim {
            return Err(Error::InvalidScenario(format!(
                "1-form has {} components, dimension is {dim}",
                b.dim()
            )));
        }
        Ok(FieldSet {
            dim,
            signature,
            a,
            b,
            g,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn signature(&self) -> Signature {
        self.signature
    }

    pub fn charge_is_constant(&self) -> bool {
        self.g.is_constant()
    }

    pub fn metric_field(&self) -> &MetricField {
        &self.a
    }

    pub fn covector_field(&self) -> &CovectorField {
        &self.b
    }

    pub fn charge_field(&self) -> &ScalarField {
        &self.g
    }

    /// Evaluate all background data at x, validating the admissibility
    /// constraints before any geometry is computed.
    pub fn at(&self, x: &[f64]) -> Result<PointFields> {
        if x.len() != self.dim {
            return Err(Error::InvalidScenario(format!(
                "point has {} coordinates, dimension is {}",
                x.len(),
                self.dim
            )));
        }
        let a = self.a.eval(x);
        let eigs = symmetric_eigenvalues(&a);
        let scale = eigs.iter().fold(0.0f64, |m, e| m.max(e.abs()));
        match self.signature {
            Signature::PositiveDefinite => {
                if eigs[0] <= 1e-12 * scale.max(1.0) {
                    return Err(Error::NotPositiveDefinite {
                        x: x.to_vec(),
                        min_eig: eigs[0],
                    });
                }
            }
            Signature::TimeSpace => {
                let positive = eigs.iter().filter(|&&e| e > 0.0).count();
                if positive != 1 {
                    return Err(Error::WrongSignature {
                        x: x.to_vec(),
                        positive,
                    });
                }
            }
        }
        let a_inv = a
            .clone()
            .try_inverse()
            .ok_or(Error::SingularMetric { x: x.to_vec() })?;
        let det_a = a.determinant();
        let b_cov = self.b.eval(x);
        let b_con = &a_inv * &b_cov;
        let c_sq = b_con.dot(&b_cov);
        let c = if c_sq > 0.0 { c_sq.sqrt() } else { f64::NAN };
        let mut c_warning = false;
        if !(c_sq > 0.0 && c < 1.0) {
            match self.signature {
                Signature::PositiveDefinite => {
                    return Err(Error::NormOutOfRange {
                        c: if c_sq > 0.0 { c } else { 0.0 },
                        x: x.to_vec(),
                    });
                }
                Signature::TimeSpace => c_warning = true,
            }
        }
        let charge = self.g.eval(x);
        if self.signature == Signature::PositiveDefinite && charge.abs() >= CHARGE_RANGE {
            return Err(Error::ConstraintViolation(format!(
                "charge g = {charge} at x = {x:?} outside the open range (-2, 2)"
            )));
        }

        let da = self.a.partials(x);
        let db = self.b.partials(x);
        let charge_grad = self.g.grad_eval(x);

        let n = self.dim;
        let mut christoffel = Tensor3::zeros(n);
        for k in 0..n {
            for i in 0..n {
                for j in i..n {
                    let mut s = 0.0;
                    for m in 0..n {
                        s += a_inv[(k, m)] * (da.get(j, m, i) + da.get(i, m, j) - da.get(m, j, i));
                    }
                    s *= 0.5;
                    christoffel.set(k, i, j, s);
                    christoffel.set(k, j, i, s);
                }
            }
        }
        let nabla_b = DMatrix::from_fn(n, n, |i, j| {
            db[(i, j)]
                - (0..n)
                    .map(|k| b_cov[k] * christoffel.get(k, i, j))
                    .sum::<f64>()
        });

        Ok(PointFields {
            x: x.to_vec(),
            signature: self.signature,
            a,
            a_inv,
            det_a,
            da,
            b_cov,
            b_con,
            db,
            c_sq,
            c,
            c_warning,
            charge,
            charge_grad,
            christoffel,
            nabla_b,
        })
    }

    /// Riemannian norm c(x) of the 1-form.
    pub fn norm_c(&self, x: &[f64]) -> Result<f64> {
        Ok(self.at(x)?.c)
    }

    /// Pull the fields back through the quadratic chart map
    /// `x̃^k = x^k + eps * Σ_j (x^j)^2 δ^k_axis`, producing polynomial fields
    /// in the new chart with nonzero Christoffel symbols and ∇b unchanged.
    /// The base fields must be constant so the composition stays polynomial.
    pub fn pullback_quadratic(&self, axis: usize, eps: f64) -> Result<FieldSet> {
        if !(self.a.is_constant() && self.b.is_constant() && self.g.is_constant()) {
            return Err(Error::InvalidScenario(
                "quadratic pullback requires constant base fields".into(),
            ));
        }
        let n = self.dim;
        let origin = vec![0.0; n];
        let a0 = self.a.eval(&origin);
        let b0 = self.b.eval(&origin);
        // Jacobian J^k_m = δ^k_m + 2 eps x^m δ^k_axis as polynomials.
        let jac = |k: usize, m: usize| -> Poly {
            let mut p = Poly::constant(n, if k == m { 1.0 } else { 0.0 });
            if k == axis {
                p = p.add(&Poly::linear(n, m, 2.0 * eps));
            }
            p
        };
        let mut a_comps = Vec::with_capacity(n * n);
        for m in 0..n {
            for nn in 0..n {
                let mut acc = Poly::zero(n);
                for k in 0..n {
                    for l in 0..n {
                        if a0[(k, l)] != 0.0 {
                            acc = acc.add(&jac(k, m).mul(&jac(l, nn)).scale(a0[(k, l)]));
                        }
                    }
                }
                a_comps.push(acc);
            }
        }
        let b_comps = (0..n)
            .map(|m| {
                let mut acc = Poly::zero(n);
                for k in 0..n {
                    if b0[k] != 0.0 {
                        acc = acc.add(&jac(k, m).scale(b0[k]));
                    }
                }
                acc
            })
            .collect();
        FieldSet::new(
            n,
            self.signature,
            MetricField::new(n, a_comps)?,
            CovectorField::new(b_comps),
            self.g.clone(),
        )
    }
}

impl PointFields {
    pub fn dim(&self) -> usize {
        self.x.len()
    }

    /// f_mn with its lowered and raised y-contractions.
    pub fn f_tensors(&self, y: &DVector<f64>) -> FTensors {
        let n = self.dim();
        let antisym = DMatrix::from_fn(n, n, |m, k| self.db[(m, k)] - self.db[(k, m)]);
        let lowered = &antisym * y;
        let raised = &self.a_inv * &lowered;
        FTensors {
            antisym,
            lowered,
            raised,
        }
    }

    /// Charge gradient pairing (yg) = g_h y^h.
    pub fn charge_pairing(&self, y: &DVector<f64>) -> f64 {
        self.charge_grad.dot(y)
    }

    /// Contraction a^i_nm y^n y^m of the Riemannian Christoffel symbols.
    pub fn christoffel_quadratic(&self, y: &DVector<f64>) -> DVector<f64> {
        let n = self.dim();
        DVector::from_fn(n, |i, _| {
            let mut s = 0.0;
            for nn in 0..n {
                for m in 0..n {
                    s += self.christoffel.get(i, nn, m) * y[nn] * y[m];
                }
            }
            s
        })
    }
}
