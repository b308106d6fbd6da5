//! Closed-form tensors at (x, y): covariant vector, metric tensor and its
//! inverse, angular metric, determinant, auxiliary vectors and eta-tensors,
//! and the Cartan tensor family. The v-form expressions (built from v_i,
//! which carry no 1/b factors) are the production representations; the z- and
//! u-forms exist as cross-checks.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fields::{FieldSet, PointFields};
use crate::kernel::{self, ScalarKernel};
use crate::linalg::Tensor3;
use crate::oracle::{self, DiffOptions};

/// Vectors reused by every tensor formula.
#[derive(Debug, Clone)]
pub struct AuxiliaryVectors {
    /// u_i = a_ij y^j.
    pub u: DVector<f64>,
    /// v^i = y^i - b b^i.
    pub v_up: DVector<f64>,
    /// v_i = u_i - b b_i = r_ij y^j.
    pub v_low: DVector<f64>,
    /// z_i = b u_i - S^2 b_i; orthogonal to y.
    pub z: DVector<f64>,
    /// e_i = -b_i + b v_i / q^2; orthogonal to y.
    pub e: DVector<f64>,
    /// r_ij = a_ij - b_i b_j.
    pub r: DMatrix<f64>,
}

/// eta_ij = r_ij - v_i v_j / q^2 with its mixed and raised companions.
#[derive(Debug, Clone)]
pub struct EtaTensors {
    pub low: DMatrix<f64>,
    pub mixed: DMatrix<f64>,
    pub up: DMatrix<f64>,
}

/// The metric family at one (x, y), in the production v-form.
#[derive(Debug, Clone)]
pub struct TensorBundle {
    /// y_i = (v_i + (b + gq) b_i) K^2 / B.
    pub y_low: DVector<f64>,
    pub metric: DMatrix<f64>,
    pub inverse: DMatrix<f64>,
    /// h_ij = g_ij - y_i y_j / K^2.
    pub angular: DMatrix<f64>,
    /// det(g) by the closed form (nu/q) (K^2/B)^N det(a).
    pub det: f64,
}

/// Cartan tensor data. `zero_charge` flags |g| below machine scale, where the
/// tensor vanishes identically and the trace-based representation divides by
/// a vanishing norm.
#[derive(Debug, Clone)]
pub struct CartanData {
    /// A_i = (K g / (2 q B)) (1/X) (q^2 b_i - b v_i).
    pub trace_low: DVector<f64>,
    /// A^i = g^ij A_j.
    pub trace_up: DVector<f64>,
    /// A_ijk in the e-vector representation (regular for all admissible y).
    pub tensor: Tensor3,
    /// A^i A_i.
    pub norm_sq: f64,
    pub zero_charge: bool,
}

pub const ZERO_CHARGE_EPS: f64 = 1e-14;

pub fn auxiliary_vectors(
    pf: &PointFields,
    kern: &ScalarKernel,
    y: &DVector<f64>,
) -> AuxiliaryVectors {
    let n = pf.dim();
    let u = &pf.a * y;
    let b = kern.b;
    let v_up = y - &pf.b_con * b;
    let v_low = &u - &pf.b_cov * b;
    let z = &u * b - &pf.b_cov * kern.s_sq;
    let q_sq = kern.q * kern.q;
    let e = &v_low * (b / q_sq) - &pf.b_cov;
    let r = DMatrix::from_fn(n, n, |i, j| pf.a[(i, j)] - pf.b_cov[i] * pf.b_cov[j]);
    AuxiliaryVectors {
        u,
        v_up,
        v_low,
        z,
        e,
        r,
    }
}

pub fn eta_tensors(pf: &PointFields, kern: &ScalarKernel, aux: &AuxiliaryVectors) -> EtaTensors {
    let n = pf.dim();
    let q_sq = kern.q * kern.q;
    let low = DMatrix::from_fn(n, n, |i, j| {
        aux.r[(i, j)] - aux.v_low[i] * aux.v_low[j] / q_sq
    });
    let mixed = &pf.a_inv * &low;
    let up = &mixed * &pf.a_inv;
    EtaTensors { low, mixed, up }
}

/// Covariant tangent vector, v-form.
pub fn covariant_y(pf: &PointFields, kern: &ScalarKernel, aux: &AuxiliaryVectors) -> DVector<f64> {
    let scale = kern.k * kern.k / kern.b_form;
    (&aux.v_low + &pf.b_cov * (kern.b + kern.charge * kern.q)) * scale
}

/// z-form of y_i; carries 1/b and is a cross-check off the axis plane.
pub fn covariant_y_zform(
    pf: &PointFields,
    kern: &ScalarKernel,
    aux: &AuxiliaryVectors,
) -> Result<DVector<f64>> {
    if kern.b == 0.0 {
        return Err(Error::AxisPlane);
    }
    let scale = kern.k * kern.k / (kern.b * kern.b_form);
    Ok((&pf.b_cov * kern.b_form + &aux.z) * scale)
}

/// u-form of y_i.
pub fn covariant_y_uform(
    pf: &PointFields,
    kern: &ScalarKernel,
    aux: &AuxiliaryVectors,
) -> DVector<f64> {
    let scale = kern.k * kern.k / kern.b_form;
    (&aux.u + &pf.b_cov * (kern.charge * kern.q)) * scale
}

/// Metric tensor, v-form (production).
pub fn metric_tensor(
    pf: &PointFields,
    kern: &ScalarKernel,
    aux: &AuxiliaryVectors,
) -> DMatrix<f64> {
    let n = pf.dim();
    let (g, q, b_form) = (kern.charge, kern.q, kern.b_form);
    let b = kern.b;
    let scale = kern.k * kern.k / b_form;
    DMatrix::from_fn(n, n, |i, j| {
        let bb = pf.b_cov[i] * pf.b_cov[j];
        let bv = pf.b_cov[i] * aux.v_low[j] + pf.b_cov[j] * aux.v_low[i];
        let vv = aux.v_low[i] * aux.v_low[j];
        (pf.a[(i, j)] + (g / b_form) * (q * (b + g * q) * bb + q * bv - b * vv / q)) * scale
    })
}

/// Metric tensor, u-form cross-check.
pub fn metric_uform(pf: &PointFields, kern: &ScalarKernel, aux: &AuxiliaryVectors) -> DMatrix<f64> {
    let n = pf.dim();
    let (g, q, b_form, b, s_sq) = (kern.charge, kern.q, kern.b_form, kern.b, kern.s_sq);
    let scale = kern.k * kern.k / b_form;
    DMatrix::from_fn(n, n, |i, j| {
        let bb = pf.b_cov[i] * pf.b_cov[j];
        let uu = aux.u[i] * aux.u[j];
        let bu = pf.b_cov[i] * aux.u[j] + pf.b_cov[j] * aux.u[i];
        (pf.a[(i, j)]
            + (g / b_form) * ((g * q * q - b * s_sq / q) * bb - (b / q) * uu + (s_sq / q) * bu))
            * scale
    })
}

/// Metric tensor, z-form cross-check (1/b factors; off-axis only).
pub fn metric_zform(
    pf: &PointFields,
    kern: &ScalarKernel,
    aux: &AuxiliaryVectors,
    eta: &EtaTensors,
) -> Result<DMatrix<f64>> {
    if kern.b == 0.0 {
        return Err(Error::AxisPlane);
    }
    let n = pf.dim();
    let (g, q, b_form, b) = (kern.charge, kern.q, kern.b_form, kern.b);
    let k_sq = kern.k * kern.k;
    Ok(DMatrix::from_fn(n, n, |i, j| {
        k_sq / b_form * eta.low[(i, j)]
            + k_sq / (b * b) * pf.b_cov[i] * pf.b_cov[j]
            + k_sq / (b * b * b_form) * (pf.b_cov[i] * aux.z[j] + pf.b_cov[j] * aux.z[i])
            + (b_form - g * b * q) / (b * b * q * q)
                * (k_sq / (b_form * b_form))
                * aux.z[i]
                * aux.z[j]
    }))
}

/// Inverse metric, v-form (production).
pub fn inverse_metric(
    pf: &PointFields,
    kern: &ScalarKernel,
    aux: &AuxiliaryVectors,
) -> DMatrix<f64> {
    let n = pf.dim();
    let (g, q, b_form, b, nu) = (kern.charge, kern.q, kern.b_form, kern.b, kern.nu);
    let c_sq = pf.c_sq;
    let scale = b_form / (kern.k * kern.k);
    DMatrix::from_fn(n, n, |i, j| {
        let bb = pf.b_con[i] * pf.b_con[j];
        let bv = pf.b_con[i] * aux.v_up[j] + pf.b_con[j] * aux.v_up[i];
        let vv = aux.v_up[i] * aux.v_up[j];
        (pf.a_inv[(i, j)] + (g / b_form) * (-b * q * bb - q * bv + (b + g * c_sq * q) * vv / nu))
            * scale
    })
}

/// Inverse metric, u-form cross-check (built from y^i).
pub fn inverse_uform(pf: &PointFields, kern: &ScalarKernel, y: &DVector<f64>) -> DMatrix<f64> {
    let n = pf.dim();
    let (g, q, b_form, b, nu) = (kern.charge, kern.q, kern.b_form, kern.b, kern.nu);
    let c_sq = pf.c_sq;
    let scale = b_form / (kern.k * kern.k);
    DMatrix::from_fn(n, n, |i, j| {
        (pf.a_inv[(i, j)]
            + (g / nu) * (b * pf.b_con[i] * pf.b_con[j] - pf.b_con[i] * y[j] - pf.b_con[j] * y[i])
            + (g / (b_form * nu)) * (b + g * c_sq * q) * y[i] * y[j])
            * scale
    })
}

/// Angular metric from the defining decomposition h_ij = g_ij - y_i y_j / K^2.
pub fn angular_metric(
    kern: &ScalarKernel,
    metric: &DMatrix<f64>,
    y_low: &DVector<f64>,
) -> DMatrix<f64> {
    let k_sq = kern.k * kern.k;
    metric - (y_low * y_low.transpose()) / k_sq
}

/// Angular metric, z-form cross-check (regular everywhere).
pub fn angular_zform(
    kern: &ScalarKernel,
    aux: &AuxiliaryVectors,
    eta: &EtaTensors,
) -> DMatrix<f64> {
    let n = aux.z.len();
    let scale = kern.k * kern.k / kern.b_form;
    let q_sq = kern.q * kern.q;
    DMatrix::from_fn(n, n, |i, j| {
        scale * (eta.low[(i, j)] + aux.z[i] * aux.z[j] / (kern.b_form * q_sq))
    })
}

/// Angular metric, u-form cross-check.
pub fn angular_uform(
    pf: &PointFields,
    kern: &ScalarKernel,
    aux: &AuxiliaryVectors,
) -> DMatrix<f64> {
    let n = pf.dim();
    let (g, q, b_form, b, s_sq) = (kern.charge, kern.q, kern.b_form, kern.b, kern.s_sq);
    let scale = kern.k * kern.k / b_form;
    DMatrix::from_fn(n, n, |i, j| {
        let bb = pf.b_cov[i] * pf.b_cov[j];
        let uu = aux.u[i] * aux.u[j];
        let bu = pf.b_cov[i] * aux.u[j] + pf.b_cov[j] * aux.u[i];
        (pf.a[(i, j)] + (-g * b * s_sq * bb - (q + g * b) * uu + g * b * b * bu) / (q * b_form))
            * scale
    })
}

/// Closed-form determinant (nu/q)(K^2/B)^N det(a).
pub fn metric_determinant(pf: &PointFields, kern: &ScalarKernel) -> f64 {
    let n = pf.dim() as i32;
    (kern.nu / kern.q) * (kern.k * kern.k / kern.b_form).powi(n) * pf.det_a
}

/// Assemble the production bundle.
pub fn bundle(pf: &PointFields, kern: &ScalarKernel, aux: &AuxiliaryVectors) -> TensorBundle {
    let y_low = covariant_y(pf, kern, aux);
    let metric = metric_tensor(pf, kern, aux);
    let inverse = inverse_metric(pf, kern, aux);
    let angular = angular_metric(kern, &metric, &y_low);
    let det = metric_determinant(pf, kern);
    TensorBundle {
        y_low,
        metric,
        inverse,
        angular,
        det,
    }
}

/// Cartan trace A_i.
pub fn cartan_trace(pf: &PointFields, kern: &ScalarKernel, aux: &AuxiliaryVectors) -> DVector<f64> {
    let coeff = kern.k * kern.charge / (2.0 * kern.q * kern.b_form) * kern.x_inv;
    (&pf.b_cov * (kern.q * kern.q) - &aux.v_low * kern.b) * coeff
}

/// Cartan tensor in the e-vector representation:
/// (B^2/K^3) A_ijk = -(gq/2)(e_k eta_ij + e_i eta_kj + e_j eta_ik) - (g q^3/B) e_i e_j e_k.
pub fn cartan_tensor(kern: &ScalarKernel, aux: &AuxiliaryVectors, eta: &EtaTensors) -> Tensor3 {
    let n = aux.z.len();
    let mut t = Tensor3::zeros(n);
    let g = kern.charge;
    let q = kern.q;
    let front = kern.k.powi(3) / (kern.b_form * kern.b_form);
    let cubic = g * q.powi(3) / kern.b_form;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let sym = aux.e[k] * eta.low[(i, j)]
                    + aux.e[i] * eta.low[(k, j)]
                    + aux.e[j] * eta.low[(i, k)];
                t.set(
                    i,
                    j,
                    k,
                    front * (-0.5 * g * q * sym - cubic * aux.e[i] * aux.e[j] * aux.e[k]),
                );
            }
        }
    }
    t
}

/// Cartan tensor through the trace and angular metric:
/// A_ijk = X [A_i h_jk + A_j h_ik + A_k h_ij - (N+1-1/X)/(A_h A^h) A_i A_j A_k].
/// Returns None at zero charge, where the norm in the denominator vanishes.
pub fn cartan_trace_form(
    kern: &ScalarKernel,
    bundle: &TensorBundle,
    trace_low: &DVector<f64>,
    norm_sq: f64,
) -> Option<Tensor3> {
    if kern.charge.abs() <= ZERO_CHARGE_EPS {
        return None;
    }
    let n = trace_low.len();
    let x = kern.x();
    let coeff = (n as f64 + 1.0 - kern.x_inv) / norm_sq;
    let h = &bundle.angular;
    let mut t = Tensor3::zeros(n);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let sym =
                    trace_low[i] * h[(j, k)] + trace_low[j] * h[(i, k)] + trace_low[k] * h[(i, j)];
                t.set(
                    i,
                    j,
                    k,
                    x * (sym - coeff * trace_low[i] * trace_low[j] * trace_low[k]),
                );
            }
        }
    }
    Some(t)
}

pub fn cartan(
    pf: &PointFields,
    kern: &ScalarKernel,
    aux: &AuxiliaryVectors,
    bundle: &TensorBundle,
) -> CartanData {
    let zero_charge = kern.charge.abs() <= ZERO_CHARGE_EPS;
    if zero_charge {
        let n = pf.dim();
        return CartanData {
            trace_low: DVector::zeros(n),
            trace_up: DVector::zeros(n),
            tensor: Tensor3::zeros(n),
            norm_sq: 0.0,
            zero_charge,
        };
    }
    let eta = eta_tensors(pf, kern, aux);
    let trace_low = cartan_trace(pf, kern, aux);
    let trace_up = &bundle.inverse * &trace_low;
    let norm_sq = trace_up.dot(&trace_low);
    let tensor = cartan_tensor(kern, aux, &eta);
    CartanData {
        trace_low,
        trace_up,
        tensor,
        norm_sq,
        zero_charge,
    }
}

/// Closed-form norm (g^2/4)(1/X^2)(N + 1 - 1/X).
pub fn cartan_norm_closed(kern: &ScalarKernel) -> f64 {
    let n = kern.dim as f64;
    kern.charge * kern.charge / 4.0 * kern.x_inv * kern.x_inv * (n + 1.0 - kern.x_inv)
}

/// Contravariant trace by its own closed form,
/// A^i = (g/(2 K nu)) (1/X) [B b^i - (b + g q c^2) y^i].
pub fn cartan_trace_up_closed(
    pf: &PointFields,
    kern: &ScalarKernel,
    y: &DVector<f64>,
) -> DVector<f64> {
    let coeff = kern.charge / (2.0 * kern.k * kern.nu) * kern.x_inv;
    (&pf.b_con * kern.b_form - y * (kern.b + kern.charge * kern.q * pf.c_sq)) * coeff
}

/// Max residual of the e-form Cartan tensor against the numeric
/// (K/2) ∂g_ij/∂y^k, differentiating the closed-form metric.
pub fn cartan_oracle_residual(fields: &FieldSet, x: &[f64], y: &DVector<f64>) -> Result<f64> {
    let pf = fields.at(x)?;
    let kern = kernel::eval(&pf, y)?;
    let aux = auxiliary_vectors(&pf, &kern, y);
    let eta = eta_tensors(&pf, &kern, &aux);
    let closed = cartan_tensor(&kern, &aux, &eta);
    let numeric = cartan_numeric(fields, &pf, &kern, y)?;
    Ok(closed.max_abs_diff(&numeric))
}

/// (K/2) ∂g_ij/∂y^k by certified central differences of the closed-form metric.
pub fn cartan_numeric(
    fields: &FieldSet,
    pf: &PointFields,
    kern: &ScalarKernel,
    y: &DVector<f64>,
) -> Result<Tensor3> {
    let n = fields.dim();
    let opts = DiffOptions {
        base_step: 1e-4,
        levels: 2,
        tolerance: 1e-4,
    };
    let metric_at = |yy: &[f64]| -> Result<DMatrix<f64>> {
        let yv = DVector::from_column_slice(yy);
        let k = kernel::eval(pf, &yv)?;
        let aux = auxiliary_vectors(pf, &k, &yv);
        Ok(metric_tensor(pf, &k, &aux))
    };
    let mut t = Tensor3::zeros(n);
    for k in 0..n {
        for i in 0..n {
            for j in i..n {
                let f = |t: f64| -> Result<f64> {
                    let mut yy = y.as_slice().to_vec();
                    yy[k] = t;
                    Ok(metric_at(&yy)?[(i, j)])
                };
                let d = oracle::central_derivative(&f, y[k], &opts)?.value;
                let v = 0.5 * kern.k * d;
                t.set(i, j, k, v);
                t.set(j, i, k, v);
            }
        }
    }
    Ok(t)
}

/// Everything the identity battery needs at one (x, y).
pub struct EvalContext {
    pub y: DVector<f64>,
    pub pf: PointFields,
    pub kern: ScalarKernel,
    pub aux: AuxiliaryVectors,
    pub eta: EtaTensors,
    pub bundle: TensorBundle,
    pub cartan: CartanData,
}

pub fn eval_context(fields: &FieldSet, x: &[f64], y: &DVector<f64>) -> Result<EvalContext> {
    let pf = fields.at(x)?;
    let kern = kernel::eval(&pf, y)?;
    let aux = auxiliary_vectors(&pf, &kern, y);
    let eta = eta_tensors(&pf, &kern, &aux);
    let bundle = bundle(&pf, &kern, &aux);
    let cartan = cartan(&pf, &kern, &aux, &bundle);
    Ok(EvalContext {
        y: y.clone(),
        pf,
        kern,
        aux,
        eta,
        bundle,
        cartan,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{CovectorField, FieldSet, MetricField, ScalarField, Signature};
    use crate::linalg::{max_abs_diff_mat, max_abs_diff_vec, rel_err, symmetric_eigenvalues};

    fn s1() -> FieldSet {
        FieldSet::new(
            3,
            Signature::PositiveDefinite,
            MetricField::identity(3),
            CovectorField::constant(3, &[0.8, 0.0, 0.0]),
            ScalarField::constant(3, 0.5),
        )
        .unwrap()
    }

    fn s1_zero_charge() -> FieldSet {
        FieldSet::new(
            3,
            Signature::PositiveDefinite,
            MetricField::identity(3),
            CovectorField::constant(3, &[0.8, 0.0, 0.0]),
            ScalarField::constant(3, 0.0),
        )
        .unwrap()
    }

    fn ctx_at(f: &FieldSet, x: &[f64], y: &[f64]) -> EvalContext {
        eval_context(f, x, &DVector::from_column_slice(y)).unwrap()
    }

    #[test]
    fn auxiliary_hand_values() {
        let c = ctx_at(&s1(), &[0.0; 3], &[1.0, 1.0, 1.0]);
        assert!(max_abs_diff_vec(&c.aux.v_up, &DVector::from_vec(vec![0.36, 1.0, 1.0])) < 1e-15);
        assert!((c.aux.v_low.dot(&c.y) - c.kern.q * c.kern.q).abs() < 1e-14);
        assert!(max_abs_diff_vec(&c.aux.z, &DVector::from_vec(vec![-1.6, 0.8, 0.8])) < 1e-14);
        assert!((c.aux.z.dot(&c.y)).abs() < 1e-14);
        let bz = c.pf.b_con.dot(&c.aux.z);
        assert!((bz - (-1.28)).abs() < 1e-14, "b^i z_i = {bz}");
        // z vanishes on the axis ray y = b^i
        let on_axis = ctx_at(&s1(), &[0.0; 3], &[0.8, 0.0, 0.0]);
        assert!(on_axis.aux.z.abs().max() < 1e-15);
    }

    #[test]
    fn riemannian_reduction_of_tensors() {
        let c = ctx_at(&s1_zero_charge(), &[0.0; 3], &[0.7, -0.4, 1.1]);
        assert!(max_abs_diff_mat(&c.bundle.metric, &c.pf.a) < 1e-15);
        assert!(max_abs_diff_mat(&c.bundle.inverse, &c.pf.a_inv) < 1e-15);
        assert!(max_abs_diff_vec(&c.bundle.y_low, &c.aux.u) < 1e-15);
        assert!(rel_err(c.bundle.det, c.pf.det_a, 1.0) < 1e-14);
        assert_eq!(c.cartan.tensor.max_abs(), 0.0);
        assert!(c.cartan.zero_charge);
    }

    #[test]
    fn euler_identities() {
        let c = ctx_at(&s1(), &[0.0; 3], &[1.0, 1.0, 1.0]);
        let k_sq = c.kern.k * c.kern.k;
        assert!(rel_err(c.bundle.y_low.dot(&c.y), k_sq, 1.0) < 1e-14);
        let y_up = &c.bundle.inverse * &c.bundle.y_low;
        assert!(max_abs_diff_vec(&y_up, &c.y) < 1e-13);
        let quad = (&c.bundle.metric * &c.y).dot(&c.y);
        assert!(rel_err(quad, k_sq, 1.0) < 1e-13);
    }

    #[test]
    fn metric_matches_numeric_hessian() {
        let f = s1();
        let pf = f.at(&[0.0; 3]).unwrap();
        let y = DVector::from_vec(vec![1.0, 1.0, 1.0]);
        let half_k2 = |yy: &[f64]| -> Result<f64> {
            let k = kernel::eval(&pf, &DVector::from_column_slice(yy))?;
            Ok(0.5 * k.k * k.k)
        };
        let hess = oracle::hessian(&half_k2, y.as_slice(), &DiffOptions::for_hessian()).unwrap();
        let c = ctx_at(&f, &[0.0; 3], &[1.0, 1.0, 1.0]);
        let scale = c.bundle.metric.abs().max();
        let diff = max_abs_diff_mat(&c.bundle.metric, &hess.value);
        assert!(diff <= 1e-6 * scale, "hessian residual {diff}");
        let eigs = symmetric_eigenvalues(&c.bundle.metric);
        assert!(eigs[0] > 0.0, "min eigenvalue {}", eigs[0]);
    }

    #[test]
    fn representation_families_agree() {
        let f = s1();
        let c = ctx_at(&f, &[0.0; 3], &[1.0, 1.0, 1.0]);
        let scale = c.bundle.metric.abs().max();
        let yz = covariant_y_zform(&c.pf, &c.kern, &c.aux).unwrap();
        let yu = covariant_y_uform(&c.pf, &c.kern, &c.aux);
        assert!(max_abs_diff_vec(&c.bundle.y_low, &yz) < 1e-12 * c.kern.k);
        assert!(max_abs_diff_vec(&c.bundle.y_low, &yu) < 1e-12 * c.kern.k);
        let gz = metric_zform(&c.pf, &c.kern, &c.aux, &c.eta).unwrap();
        let gu = metric_uform(&c.pf, &c.kern, &c.aux);
        assert!(max_abs_diff_mat(&c.bundle.metric, &gz) < 1e-12 * scale);
        assert!(max_abs_diff_mat(&c.bundle.metric, &gu) < 1e-12 * scale);
        let iu = inverse_uform(&c.pf, &c.kern, &c.y);
        assert!(max_abs_diff_mat(&c.bundle.inverse, &iu) < 1e-12);
        let hz = angular_zform(&c.kern, &c.aux, &c.eta);
        let hu = angular_uform(&c.pf, &c.kern, &c.aux);
        assert!(max_abs_diff_mat(&c.bundle.angular, &hz) < 1e-12 * scale);
        assert!(max_abs_diff_mat(&c.bundle.angular, &hu) < 1e-12 * scale);
    }

    #[test]
    fn reciprocity_and_determinant() {
        let c = ctx_at(&s1(), &[0.0; 3], &[1.0, 1.0, 1.0]);
        let prod = &c.bundle.inverse * &c.bundle.metric;
        let resid = (&prod - DMatrix::<f64>::identity(3, 3)).abs().max();
        assert!(resid <= 1e-10, "reciprocity {resid}");
        let lu_det = c.bundle.metric.determinant();
        assert!(rel_err(c.bundle.det, lu_det, 1.0) <= 1e-10);
        // frozen ratio det(g)/det(a) at the reference point
        assert!(rel_err(c.bundle.det / c.pf.det_a, 0.2719007253676714, 1.0) < 1e-12);
    }

    #[test]
    fn angular_annihilates_y() {
        let c = ctx_at(&s1(), &[0.0; 3], &[1.0, 1.0, 1.0]);
        let hy = &c.bundle.angular * &c.y;
        assert!(hy.abs().max() <= 1e-10 * c.kern.k);
    }

    #[test]
    fn cartan_reference_values() {
        let c = ctx_at(&s1(), &[0.0; 3], &[1.0, 1.0, 1.0]);
        let expected = DVector::from_vec(vec![
            0.38054650257253285,
            -0.19027325128626643,
            -0.19027325128626643,
        ]);
        assert!(max_abs_diff_vec(&c.cartan.trace_low, &expected) < 1e-13);
        assert!((c.cartan.trace_low.dot(&c.y)).abs() < 1e-14);
        assert!(rel_err(c.cartan.norm_sq, 0.38055804160262384, 1.0) < 1e-12);
        assert!(rel_err(c.cartan.norm_sq, cartan_norm_closed(&c.kern), 1.0) < 1e-12);
        let up = cartan_trace_up_closed(&c.pf, &c.kern, &c.y);
        assert!(max_abs_diff_vec(&c.cartan.trace_up, &up) < 1e-13);
    }

    #[test]
    fn cartan_representations_agree() {
        let c = ctx_at(&s1(), &[0.0; 3], &[1.0, 1.0, 1.0]);
        let trace_form =
            cartan_trace_form(&c.kern, &c.bundle, &c.cartan.trace_low, c.cartan.norm_sq).unwrap();
        let diff = c.cartan.tensor.max_abs_diff(&trace_form);
        assert!(
            diff <= 1e-10 * c.cartan.tensor.max_abs().max(1.0),
            "forms differ by {diff}"
        );
        // trace consistency g^jk A_ijk = A_i
        let n = 3;
        for i in 0..n {
            let mut s = 0.0;
            for j in 0..n {
                for k in 0..n {
                    s += c.bundle.inverse[(j, k)] * c.cartan.tensor.get(i, j, k);
                }
            }
            assert!((s - c.cartan.trace_low[i]).abs() <= 1e-8, "trace slot {i}");
        }
        // total symmetry and y-transversality
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let v = c.cartan.tensor.get(i, j, k);
                    assert!((v - c.cartan.tensor.get(j, i, k)).abs() < 1e-14);
                    assert!((v - c.cartan.tensor.get(i, k, j)).abs() < 1e-14);
                }
                let contracted: f64 = (0..n).map(|k| c.cartan.tensor.get(i, j, k) * c.y[k]).sum();
                assert!(contracted.abs() < 1e-13);
            }
        }
    }

    #[test]
    fn cartan_matches_numeric_derivative() {
        let f = s1();
        let y = DVector::from_vec(vec![1.0, 1.0, 1.0]);
        let resid = cartan_oracle_residual(&f, &[0.0; 3], &y).unwrap();
        let c = ctx_at(&f, &[0.0; 3], &[1.0, 1.0, 1.0]);
        assert!(
            resid <= 1e-6 * c.cartan.tensor.max_abs(),
            "residual {resid}"
        );
        // zero charge: residual is numeric noise only
        let f0 = s1_zero_charge();
        let resid0 = cartan_oracle_residual(&f0, &[0.0; 3], &y).unwrap();
        assert!(resid0 <= 1e-9, "zero-charge residual {resid0}");
    }

    #[test]
    fn evaluation_is_shareable_across_threads() {
        let f = s1();
        let reference = ctx_at(&f, &[0.0; 3], &[1.0, 1.0, 1.0]).bundle.det;
        std::thread::scope(|scope| {
            for _ in 0..4 {
                scope.spawn(|| {
                    for i in 0..50 {
                        let t = 0.3 + 0.01 * i as f64;
                        let c = ctx_at(&f, &[0.0; 3], &[1.0, t, 1.0 - t]);
                        assert!(c.bundle.det > 0.0);
                    }
                    let c = ctx_at(&f, &[0.0; 3], &[1.0, 1.0, 1.0]);
                    assert_eq!(c.bundle.det, reference);
                });
            }
        });
    }

    #[test]
    fn metric_zero_homogeneity() {
        let f = s1();
        let c1 = ctx_at(&f, &[0.0; 3], &[1.0, 1.0, 1.0]);
        for lambda in [0.5f64, 3.0] {
            let c2 = ctx_at(&f, &[0.0; 3], &[lambda, lambda, lambda]);
            let diff = max_abs_diff_mat(&c1.bundle.metric, &c2.bundle.metric);
            assert!(
                diff <= 1e-12 * c1.bundle.metric.abs().max(),
                "lambda {lambda}"
            );
        }
    }
}
