//! The indefinite counterpart: metric function F over a time-space-signature
//! background, its kernel scalars, the admissible-cone guard, and the
//! duality substitution g -> ig, q -> iq that transports the
//! positive-definite closed forms into the indefinite space.
//!
//! The substitution is carried out literally over complex numbers: every
//! surviving monomial must have even total degree in (g, q), so a real
//! result is the certificate that the substitution is sound, and any
//! imaginary residue is surfaced as an error.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fields::{PointFields, Signature};
use crate::linalg::Tensor3;
use crate::oracle::{self, DiffOptions};

/// Pointwise scalars of the indefinite metric function at (x, y).
#[derive(Debug, Clone)]
pub struct PseudoKernel {
    pub dim: usize,
    pub charge: f64,
    pub c_sq: f64,
    pub b: f64,
    /// S^2 = a_ij y^i y^j, positive inside the admissible cone.
    pub s_sq: f64,
    pub s: f64,
    /// q = sqrt(b^2 - S^2) > 0 on the admissible cone.
    pub q: f64,
    /// h = sqrt(1 + g^2/4); the charge is unrestricted here.
    pub h: f64,
    pub big_g: f64,
    /// g_+ = -g/2 + h, g_- = -g/2 - h.
    pub g_plus: f64,
    pub g_minus: f64,
    /// G_+ = -G/2 + 1, G_- = -G/2 - 1.
    pub big_g_plus: f64,
    pub big_g_minus: f64,
    /// Characteristic form B = b^2 - g q b - q^2 = (b + g_+ q)(b + g_- q).
    pub b_form: f64,
    /// Discriminant 4h^2 > 0.
    pub discriminant: f64,
    /// L = q + (g/2) b, satisfying h^2 b^2 - L^2 = B.
    pub l: f64,
    pub j: f64,
    /// The metric function F.
    pub f: f64,
}

/// Both published expressions of F: sqrt|B| J and the product of powers.
pub fn pseudo_norm_forms(kern: &PseudoKernel) -> (f64, f64) {
    let sqrt_form = kern.b_form.abs().sqrt() * kern.j;
    let u = (kern.b + kern.g_minus * kern.q).abs();
    let v = (kern.b + kern.g_plus * kern.q).abs();
    // evaluated through logarithms so large |G| cannot overflow
    let product_form = (0.5 * kern.big_g_plus * u.ln() - 0.5 * kern.big_g_minus * v.ln()).exp();
    (sqrt_form, product_form)
}

/// Evaluate the indefinite kernel; y must lie in the admissible cone
/// b > 0, S^2 > 0, b^2 - S^2 > 0.
pub fn eval_pseudo_kernel(pf: &PointFields, y: &DVector<f64>) -> Result<PseudoKernel> {
    if pf.signature != Signature::TimeSpace {
        return Err(Error::WrongSignature {
            x: pf.x.clone(),
            positive: usize::MAX,
        });
    }
    if y.iter().all(|&v| v == 0.0) {
        return Err(Error::ZeroVector);
    }
    let s_sq = (&pf.a * y).dot(y);
    let b = pf.b_cov.dot(y);
    if b <= 0.0 {
        return Err(Error::InadmissibleVector(format!(
            "b = {b} must be positive"
        )));
    }
    if s_sq <= 0.0 {
        return Err(Error::InadmissibleVector(format!(
            "S^2 = {s_sq} must be positive"
        )));
    }
    let q_sq = b * b - s_sq;
    if q_sq <= 0.0 {
        return Err(Error::InadmissibleVector(format!(
            "b^2 - S^2 = {q_sq} must be positive"
        )));
    }
    let q = q_sq.sqrt();
    let charge = pf.charge;
    let h = (1.0 + charge * charge / 4.0).sqrt();
    let big_g = charge / h;
    let g_plus = -0.5 * charge + h;
    let g_minus = -0.5 * charge - h;
    let big_g_plus = -0.5 * big_g + 1.0;
    let big_g_minus = -0.5 * big_g - 1.0;
    let b_form = b * b - charge * q * b - q * q;
    let u = b + g_minus * q;
    let v = b + g_plus * q;
    let j = (u / v).abs().powf(-big_g / 4.0);
    let f = b_form.abs().sqrt() * j;
    let l = q + 0.5 * charge * b;
    Ok(PseudoKernel {
        dim: pf.dim(),
        charge,
        c_sq: pf.c_sq,
        b,
        s_sq,
        s: s_sq.sqrt(),
        q,
        h,
        big_g,
        g_plus,
        g_minus,
        big_g_plus,
        big_g_minus,
        b_form,
        discriminant: 4.0 * h * h,
        l,
        j,
        f,
    })
}

/// F(x, y) alone.
pub fn pseudo_norm(pf: &PointFields, y: &DVector<f64>) -> Result<f64> {
    Ok(eval_pseudo_kernel(pf, y)?.f)
}

/// y_i and g_ij by certified central differences of F^2/2; the entailed
/// metric has signature (+,-,...,-) on the admissible cone.
pub fn pseudo_metric_numeric(
    pf: &PointFields,
    y: &DVector<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let half_f2 = |yy: &[f64]| -> Result<f64> {
        let k = eval_pseudo_kernel(pf, &DVector::from_column_slice(yy))?;
        Ok(0.5 * k.f * k.f)
    };
    let grad = oracle::gradient(&half_f2, y.as_slice(), &DiffOptions::default())?;
    let hess = oracle::hessian(&half_f2, y.as_slice(), &DiffOptions::for_hessian())?;
    Ok((grad.value, hess.value))
}

/// Positive-definite closed forms transportable by the substitution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PdExpression {
    CovariantY,
    MetricTensor,
    InverseMetric,
    CartanTrace,
    CartanTensor,
}

#[derive(Debug, Clone)]
pub enum SubstitutedValue {
    Vector(DVector<f64>),
    Matrix(DMatrix<f64>),
    Tensor(Tensor3),
}

/// Relative imaginary residue above which the substitution is declared
/// broken (an odd-degree monomial must have survived).
const IMAG_TOL: f64 = 1e-8;

struct ComplexKernel {
    g: Complex64,
    q: Complex64,
    s_sq: Complex64,
    b_form: Complex64,
    nu: Complex64,
    x_inv: Complex64,
    b: f64,
    c_sq: f64,
    f: f64,
}

fn complex_kernel(pf: &PointFields, kern: &PseudoKernel) -> ComplexKernel {
    let i = Complex64::new(0.0, 1.0);
    let g = i * kern.charge;
    let q = i * kern.q;
    let b = kern.b;
    let s_sq = Complex64::from(b * b) + q * q;
    let b_form = Complex64::from(b * b) + g * q * b + q * q;
    let nu = q + (1.0 - pf.c_sq) * g * b;
    let x_inv = Complex64::from(pf.dim() as f64) + (1.0 - pf.c_sq) * b_form / (q * nu);
    ComplexKernel {
        g,
        q,
        s_sq,
        b_form,
        nu,
        x_inv,
        b,
        c_sq: pf.c_sq,
        f: kern.f,
    }
}

fn realize(v: Complex64, scale: f64) -> Result<f64> {
    if v.im.abs() > IMAG_TOL * scale.max(v.re.abs()).max(1e-300) {
        return Err(Error::OddDegreeMonomial { residue: v.im });
    }
    Ok(v.re)
}

/// Evaluate a positive-definite closed form under g -> ig, q -> iq with the
/// indefinite kernel data, asserting the result is real.
pub fn duality_substitution(
    expr: PdExpression,
    pf: &PointFields,
    y: &DVector<f64>,
    kern: &PseudoKernel,
) -> Result<SubstitutedValue> {
    let n = pf.dim();
    let ck = complex_kernel(pf, kern);
    let u: DVector<f64> = &pf.a * y;
    let b = ck.b;
    let v_low: DVector<f64> = &u - &pf.b_cov * b;
    let f_sq = ck.f * ck.f;
    let scale_m = f_sq / kern.b_form.abs();
    match expr {
        PdExpression::CovariantY => {
            // y_i = (u_i + g q b_i) K^2 / B
            let gq = ck.g * ck.q;
            let mut out = DVector::zeros(n);
            for idx in 0..n {
                let val = (Complex64::from(u[idx]) + gq * pf.b_cov[idx]) * f_sq / ck.b_form;
                out[idx] = realize(val, scale_m * (1.0 + u.abs().max()))?;
            }
            Ok(SubstitutedValue::Vector(out))
        }
        PdExpression::MetricTensor => {
            let mut out = DMatrix::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    let bb = pf.b_cov[i] * pf.b_cov[j];
                    let uu = u[i] * u[j];
                    let bu = pf.b_cov[i] * u[j] + pf.b_cov[j] * u[i];
                    let bracket = Complex64::from(pf.a[(i, j)])
                        + ck.g / ck.b_form
                            * ((ck.g * ck.q * ck.q - b * ck.s_sq / ck.q) * bb - (b / ck.q) * uu
                                + (ck.s_sq / ck.q) * bu);
                    out[(i, j)] = realize(bracket * f_sq / ck.b_form, scale_m)?;
                }
            }
            Ok(SubstitutedValue::Matrix(out))
        }
        PdExpression::InverseMetric => {
            let mut out = DMatrix::zeros(n, n);
            let shift = Complex64::from(b) + ck.g * ck.q * ck.c_sq;
            for i in 0..n {
                for j in 0..n {
                    let bracket = Complex64::from(pf.a_inv[(i, j)])
                        + ck.g / ck.nu
                            * (b * pf.b_con[i] * pf.b_con[j]
                                - pf.b_con[i] * y[j]
                                - pf.b_con[j] * y[i])
                        + ck.g / (ck.b_form * ck.nu) * shift * (y[i] * y[j]);
                    out[(i, j)] = realize(bracket * ck.b_form / f_sq, 1.0 / scale_m)?;
                }
            }
            Ok(SubstitutedValue::Matrix(out))
        }
        PdExpression::CartanTrace => {
            // A_i = (K g / (2 q B)) (1/X) (q^2 b_i - b v_i)
            let coeff = ck.g / (2.0 * ck.q * ck.b_form) * ck.x_inv * ck.f;
            let mut out = DVector::zeros(n);
            for idx in 0..n {
                let val = coeff * (ck.q * ck.q * pf.b_cov[idx] - b * v_low[idx]);
                out[idx] = realize(val, ck.f)?;
            }
            Ok(SubstitutedValue::Vector(out))
        }
        PdExpression::CartanTensor => {
            // (B^2/K^3) A_ijk = -(gq/2)(e_k eta_ij + ...) - (g q^3/B) e e e
            let q_sq = ck.q * ck.q;
            let e: Vec<Complex64> = (0..n)
                .map(|i| -Complex64::from(pf.b_cov[i]) + b * v_low[i] / q_sq)
                .collect();
            let eta = |i: usize, j: usize| -> Complex64 {
                Complex64::from(pf.a[(i, j)] - pf.b_cov[i] * pf.b_cov[j])
                    - v_low[i] * v_low[j] / q_sq
            };
            let front = Complex64::from(ck.f).powu(3) / (ck.b_form * ck.b_form);
            let gq = ck.g * ck.q;
            let cubic = ck.g * ck.q.powu(3) / ck.b_form;
            let mut out = Tensor3::zeros(n);
            let scale = ck.f;
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        let sym = e[k] * eta(i, j) + e[i] * eta(k, j) + e[j] * eta(i, k);
                        let val = front * (-0.5 * gq * sym - cubic * e[i] * e[j] * e[k]);
                        out.set(i, j, k, realize(val, scale)?);
                    }
                }
            }
            Ok(SubstitutedValue::Tensor(out))
        }
    }
}

/// The two published scalar substitution rules: g/q maps to itself and g q
/// flips sign. Returns (substituted g/q, substituted g*q) for checking.
pub fn substitution_rules(charge: f64, q: f64) -> (f64, f64) {
    let i = Complex64::new(0.0, 1.0);
    let gc = i * charge;
    let qc = i * q;
    ((gc / qc).re, (gc * qc).re)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{CovectorField, FieldSet, MetricField, ScalarField};
    use crate::linalg::{max_abs_diff_mat, rel_err, symmetric_eigenvalues};

    pub(crate) fn s5() -> FieldSet {
        FieldSet::new(
            4,
            Signature::TimeSpace,
            MetricField::diagonal(4, &[1.0, -1.0, -1.0, -1.0]),
            CovectorField::constant(4, &[0.8, 0.0, 0.0, 0.0]),
            ScalarField::constant(4, 0.5),
        )
        .unwrap()
    }

    fn p5() -> DVector<f64> {
        DVector::from_vec(vec![1.0, 0.8, 0.0, 0.0])
    }

    #[test]
    fn reference_values() {
        let pf = s5().at(&[0.0; 4]).unwrap();
        let k = eval_pseudo_kernel(&pf, &p5()).unwrap();
        assert!(rel_err(k.s_sq, 0.36, 1.0) < 1e-15);
        assert!(rel_err(k.b, 0.8, 1.0) < 1e-15);
        assert!(rel_err(k.q * k.q, 0.28, 1.0) < 1e-14);
        assert!(rel_err(k.q, 0.5291502622129181, 1.0) < 1e-14);
        assert!(rel_err(k.b_form, 0.14833989511483275, 1.0) < 1e-13);
        assert!(rel_err(k.h, 1.0307764064044151, 1.0) < 1e-14);
        assert!(rel_err(k.g_plus, 0.7807764064044151, 1.0) < 1e-14);
        assert!(rel_err(k.g_minus, -1.2807764064044151, 1.0) < 1e-14);
        assert!(rel_err(k.f, 0.5087223326750709, 1.0) < 1e-13);
        // factorization (b + g_+ q)(b + g_- q) = B
        let prod = (k.b + k.g_plus * k.q) * (k.b + k.g_minus * k.q);
        assert!(rel_err(prod, k.b_form, 1.0) < 1e-14);
    }

    #[test]
    fn both_norm_forms_agree() {
        let pf = s5().at(&[0.0; 4]).unwrap();
        let k = eval_pseudo_kernel(&pf, &p5()).unwrap();
        let (a, b) = pseudo_norm_forms(&k);
        assert!(rel_err(a, b, 1.0) < 1e-12);
        assert!(rel_err(a, k.f, 1.0) < 1e-14);
    }

    #[test]
    fn zero_charge_reduces_to_pseudo_riemannian_norm() {
        let f = FieldSet::new(
            4,
            Signature::TimeSpace,
            MetricField::diagonal(4, &[1.0, -1.0, -1.0, -1.0]),
            CovectorField::constant(4, &[0.8, 0.0, 0.0, 0.0]),
            ScalarField::constant(4, 0.0),
        )
        .unwrap();
        let pf = f.at(&[0.0; 4]).unwrap();
        let k = eval_pseudo_kernel(&pf, &p5()).unwrap();
        assert!(rel_err(k.f, k.s, 1.0) < 1e-14);
    }

    #[test]
    fn positive_homogeneity() {
        let pf = s5().at(&[0.0; 4]).unwrap();
        let f1 = pseudo_norm(&pf, &p5()).unwrap();
        for lambda in [0.5, 2.0, 3.7] {
            let f2 = pseudo_norm(&pf, &(p5() * lambda)).unwrap();
            assert!(rel_err(f2, lambda * f1, 1.0) < 1e-12, "lambda {lambda}");
        }
    }

    #[test]
    fn characteristic_form_identity() {
        // h^2 b^2 - L^2 = B with L = q + (g/2) b
        let pf = s5().at(&[0.0; 4]).unwrap();
        for y in [
            p5(),
            DVector::from_vec(vec![1.0, 0.7, 0.2, 0.1]),
            DVector::from_vec(vec![2.0, 1.3, -0.8, 0.5]),
        ] {
            let k = eval_pseudo_kernel(&pf, &y).unwrap();
            let lhs = k.h * k.h * k.b * k.b - k.l * k.l;
            assert!(rel_err(lhs, k.b_form, 1.0) < 1e-12, "y {y:?}");
        }
    }

    #[test]
    fn bookkeeping_of_split_charges() {
        let pf = s5().at(&[0.0; 4]).unwrap();
        let k = eval_pseudo_kernel(&pf, &p5()).unwrap();
        assert!((0.5 * k.big_g_plus - 0.5 * k.big_g_minus - 1.0).abs() < 1e-15);
        assert!((k.big_g_plus + k.big_g_minus + k.big_g).abs() < 1e-15);
        assert!(rel_err(k.big_g_plus, k.g_plus / k.h, 1.0) < 1e-15);
        assert!(rel_err(k.big_g_minus, k.g_minus / k.h, 1.0) < 1e-15);
    }

    #[test]
    fn admissible_cone_guard() {
        let pf = s5().at(&[0.0; 4]).unwrap();
        // b < 0
        assert!(matches!(
            eval_pseudo_kernel(&pf, &DVector::from_vec(vec![-1.0, 0.8, 0.0, 0.0])),
            Err(Error::InadmissibleVector(_))
        ));
        // spacelike: S^2 < 0
        assert!(matches!(
            eval_pseudo_kernel(&pf, &DVector::from_vec(vec![0.5, 1.0, 0.0, 0.0])),
            Err(Error::InadmissibleVector(_))
        ));
        // q^2 < 0 (too close to the axis)
        assert!(matches!(
            eval_pseudo_kernel(&pf, &DVector::from_vec(vec![1.0, 0.1, 0.0, 0.0])),
            Err(Error::InadmissibleVector(_))
        ));
        // wrong signature
        let pd = crate::fields::FieldSet::new(
            3,
            Signature::PositiveDefinite,
            MetricField::identity(3),
            CovectorField::constant(3, &[0.8, 0.0, 0.0]),
            ScalarField::constant(3, 0.5),
        )
        .unwrap();
        let pfd = pd.at(&[0.0; 3]).unwrap();
        assert!(matches!(
            eval_pseudo_kernel(&pfd, &DVector::from_vec(vec![1.0, 0.0, 0.0])),
            Err(Error::WrongSignature { .. })
        ));
    }

    #[test]
    fn substitution_scalar_rules() {
        let (ratio, product) = substitution_rules(0.5, 0.7);
        assert!(rel_err(ratio, 0.5 / 0.7, 1.0) < 1e-15);
        assert!(rel_err(product, -0.35, 1.0) < 1e-15);
    }

    #[test]
    fn substituted_metric_matches_numeric_hessian() {
        let pf = s5().at(&[0.0; 4]).unwrap();
        let y = p5();
        let k = eval_pseudo_kernel(&pf, &y).unwrap();
        let sub = duality_substitution(PdExpression::MetricTensor, &pf, &y, &k).unwrap();
        let SubstitutedValue::Matrix(gsub) = sub else {
            panic!("expected matrix")
        };
        let (grad, hess) = pseudo_metric_numeric(&pf, &y).unwrap();
        let scale = gsub.abs().max();
        assert!(
            max_abs_diff_mat(&gsub, &hess) <= 1e-5 * scale,
            "hessian mismatch"
        );
        let euler = ((&hess * &y).dot(&y) - k.f * k.f).abs() / (k.f * k.f);
        assert!(euler <= 1e-8, "quadratic Euler residual {euler}");
        // signature: exactly one positive eigenvalue
        let eigs = symmetric_eigenvalues(&gsub);
        assert_eq!(eigs.iter().filter(|&&e| e > 0.0).count(), 1);
        // Euler identity on the numeric gradient
        let sub_y = duality_substitution(PdExpression::CovariantY, &pf, &y, &k).unwrap();
        let SubstitutedValue::Vector(ysub) = sub_y else {
            panic!("expected vector")
        };
        assert!((&ysub - &grad).abs().max() <= 1e-6 * (1.0 + grad.abs().max()));
        assert!(rel_err(ysub.dot(&y), k.f * k.f, 1.0) < 1e-12);
    }

    #[test]
    fn substituted_inverse_reciprocal_to_substituted_metric() {
        let pf = s5().at(&[0.0; 4]).unwrap();
        let y = DVector::from_vec(vec![1.2, 0.9, 0.3, -0.2]);
        let k = eval_pseudo_kernel(&pf, &y).unwrap();
        let SubstitutedValue::Matrix(g) =
            duality_substitution(PdExpression::MetricTensor, &pf, &y, &k).unwrap()
        else {
            panic!()
        };
        let SubstitutedValue::Matrix(gi) =
            duality_substitution(PdExpression::InverseMetric, &pf, &y, &k).unwrap()
        else {
            panic!()
        };
        let resid = (&gi * &g - DMatrix::<f64>::identity(4, 4)).abs().max();
        assert!(resid <= 1e-10, "reciprocity {resid}");
    }

    #[test]
    fn substituted_cartan_consistency() {
        let pf = s5().at(&[0.0; 4]).unwrap();
        let y = DVector::from_vec(vec![1.2, 0.9, 0.3, -0.2]);
        let k = eval_pseudo_kernel(&pf, &y).unwrap();
        let SubstitutedValue::Vector(trace) =
            duality_substitution(PdExpression::CartanTrace, &pf, &y, &k).unwrap()
        else {
            panic!()
        };
        let SubstitutedValue::Tensor(tensor) =
            duality_substitution(PdExpression::CartanTensor, &pf, &y, &k).unwrap()
        else {
            panic!()
        };
        let SubstitutedValue::Matrix(gi) =
            duality_substitution(PdExpression::InverseMetric, &pf, &y, &k).unwrap()
        else {
            panic!()
        };
        // transversality and trace consistency survive the substitution
        assert!((trace.dot(&y)).abs() < 1e-12 * (1.0 + trace.abs().max()));
        let n = 4;
        for i in 0..n {
            let mut s = 0.0;
            for j in 0..n {
                for kk in 0..n {
                    s += gi[(j, kk)] * tensor.get(i, j, kk);
                }
            }
            assert!(
                (s - trace[i]).abs() <= 1e-8 * (1.0 + trace.abs().max()),
                "trace slot {i}: contracted {s} vs {}",
                trace[i]
            );
        }
        for i in 0..n {
            for j in 0..n {
                let contracted: f64 = (0..n).map(|kk| tensor.get(i, j, kk) * y[kk]).sum();
                assert!(contracted.abs() < 1e-12 * (1.0 + tensor.max_abs()));
            }
        }
    }
}
