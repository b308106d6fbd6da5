//! Pointwise scalars of the positive-definite metric function at (x, y):
//! the characteristic quadratic form, the angle scalar with its two branches,
//! and the norm K itself. Everything is computed once per (x, y) and cached
//! in [`ScalarKernel`] so downstream tensor formulas reuse identical values.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::fields::PointFields;
use crate::oracle::{self, DiffOptions};

/// All pointwise scalars at one (x, y).
#[derive(Debug, Clone)]
pub struct ScalarKernel {
    pub dim: usize,
    pub charge: f64,
    pub c: f64,
    /// b = b_i y^i (any sign).
    pub b: f64,
    pub s_sq: f64,
    pub s: f64,
    /// q = sqrt(S^2 - b^2) > 0.
    pub q: f64,
    /// h = sqrt(1 - g^2/4).
    pub h: f64,
    /// G = g/h.
    pub big_g: f64,
    pub g_plus: f64,
    pub g_minus: f64,
    /// Characteristic quadratic form B = b^2 + g q b + q^2.
    pub b_form: f64,
    /// Discriminant of B: -4h^2.
    pub discriminant: f64,
    /// L = q + (g/2) b.
    pub l: f64,
    /// Angle scalar f (two branches meeting at b = 0).
    pub angle: f64,
    /// J = exp(-G f / 2).
    pub j: f64,
    /// The metric function K = sqrt(B) J.
    pub k: f64,
    /// eta = 1 / (1 + g c sqrt(1 - c^2)).
    pub eta: f64,
    /// nu = q + (1 - c^2) g b.
    pub nu: f64,
    /// 1/X = N + (1 - c^2) B / (q nu).
    pub x_inv: f64,
}

impl ScalarKernel {
    pub fn x(&self) -> f64 {
        1.0 / self.x_inv
    }

    /// w = q/b, defined off the axis plane only.
    pub fn w(&self) -> Result<f64> {
        if self.b == 0.0 {
            Err(Error::AxisPlane)
        } else {
            Ok(self.q / self.b)
        }
    }
}

/// K from the scalar pair (b, q) at charge g. The angle branch follows the
/// sign of b; both branches meet continuously at b = 0.
pub(crate) fn k_from_bq(charge: f64, b: f64, q: f64) -> f64 {
    let h = (1.0 - charge * charge / 4.0).sqrt();
    let big_g = charge / h;
    let b_form = b * b + charge * q * b + q * q;
    let l = q + 0.5 * charge * b;
    let angle = angle_branch(big_g, l, h, b);
    (b_form).sqrt() * (-0.5 * big_g * angle).exp()
}

fn angle_branch(big_g: f64, l: f64, h: f64, b: f64) -> f64 {
    if b == 0.0 {
        // L = q > 0 there, the arctan limit is pi/2 from either side
        -(0.5 * big_g).atan() + std::f64::consts::FRAC_PI_2
    } else if b > 0.0 {
        -(0.5 * big_g).atan() + (l / (h * b)).atan()
    } else {
        std::f64::consts::PI - (0.5 * big_g).atan() + (l / (h * b)).atan()
    }
}

/// Evaluate every kernel scalar at (x, y).
pub fn eval(pf: &PointFields, y: &DVector<f64>) -> Result<ScalarKernel> {
    eval_with_charge(pf, y, pf.charge)
}

/// Same, with the charge value overridden at fixed (b_i, a_ij); used by the
/// numerical ∂/∂g oracle.
pub fn eval_with_charge(pf: &PointFields, y: &DVector<f64>, charge: f64) -> Result<ScalarKernel> {
    let n = pf.dim();
    if y.iter().all(|&v| v == 0.0) {
        return Err(Error::ZeroVector);
    }
    if charge.abs() >= 2.0 {
        return Err(Error::ConstraintViolation(format!(
            "charge g = {charge} outside the open range (-2, 2)"
        )));
    }
    let s_sq = (&pf.a * y).dot(y);
    let b = pf.b_cov.dot(y);
    let q_sq = s_sq - b * b;
    if !(q_sq > 0.0) {
        return Err(Error::ConstraintViolation(format!(
            "S^2 - b^2 = {q_sq} not positive; the norm constraint c < 1 is violated"
        )));
    }
    let q = q_sq.sqrt();
    let h = (1.0 - charge * charge / 4.0).sqrt();
    let big_g = charge / h;
    let g_plus = 0.5 * charge + h;
    let g_minus = 0.5 * charge - h;
    let b_form = b * b + charge * q * b + q * q;
    let l = q + 0.5 * charge * b;
    let angle = angle_branch(big_g, l, h, b);
    let j = (-0.5 * big_g * angle).exp();
    let k = b_form.sqrt() * j;
    let c = pf.c;
    let eta = 1.0 / (1.0 + charge * c * (1.0 - pf.c_sq).sqrt());
    let nu = q + (1.0 - pf.c_sq) * charge * b;
    let x_inv = n as f64 + (1.0 - pf.c_sq) * b_form / (q * nu);
    Ok(ScalarKernel {
        dim: n,
        charge,
        c,
        b,
        s_sq,
        s: s_sq.sqrt(),
        q,
        h,
        big_g,
        g_plus,
        g_minus,
        b_form,
        discriminant: -4.0 * h * h,
        l,
        angle,
        j,
        k,
        eta,
        nu,
        x_inv,
    })
}

/// The metric function K(x, y).
pub fn finsler_norm(pf: &PointFields, y: &DVector<f64>) -> Result<f64> {
    Ok(eval(pf, y)?.k)
}

/// Generating function V with numerically certified w-derivatives, where
/// K = b V(x, w) and w = q/b. Undefined on the axis plane b = 0.
#[derive(Debug, Clone)]
pub struct GeneratingV {
    pub v: f64,
    pub v1: f64,
    pub v2: f64,
}

pub fn generating_v(kern: &ScalarKernel) -> Result<GeneratingV> {
    let w = kern.w()?;
    let sign = kern.b.signum();
    let charge = kern.charge;
    // V(w) = K(b0, w b0) / b0 along the ray b0 = sign(b); q stays positive.
    let v_of = |t: f64| -> Result<f64> {
        if t * sign <= 0.0 {
            return Err(Error::AxisPlane);
        }
        Ok(k_from_bq(charge, sign, t * sign) / sign)
    };
    let v = v_of(w)?;
    let opts = DiffOptions {
        base_step: 1e-3,
        levels: 2,
        tolerance: 1e-8,
    };
    let v1 = oracle::central_derivative(&|t| v_of(t), w, &opts)?.value;
    // direct second difference, two Richardson passes over a wide base step;
    // nesting two first differences would amplify roundoff past 1e-9
    let second = |h: f64| -> Result<f64> { Ok((v_of(w + h)? - 2.0 * v + v_of(w - h)?) / (h * h)) };
    let h0 = 1.6e-2 * (1.0 + w.abs());
    let d0 = second(h0)?;
    let d1 = second(h0 / 2.0)?;
    let d2 = second(h0 / 4.0)?;
    let r0 = (4.0 * d1 - d0) / 3.0;
    let r1 = (4.0 * d2 - d1) / 3.0;
    let v2 = (16.0 * r1 - r0) / 15.0;
    Ok(GeneratingV { v, v1, v2 })
}
