//! Spray coefficients G^i in closed form, the charge-response scalar M, the
//! drift/torsion/charge-gradient/Riemannian decomposition, a brute-force
//! Finslerian-Christoffel oracle, and the Berwald-condition checker.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::fields::{FieldSet, PointFields};
use crate::kernel::{self, ScalarKernel};
use crate::oracle::{self, DiffOptions};
use crate::tensors::{self, TensorBundle};

/// Closed-form spray coefficients with their term decomposition:
/// G^i = drift + torsion + charge-gradient term + Riemannian term.
#[derive(Debug, Clone)]
pub struct SprayData {
    pub g_spray: DVector<f64>,
    /// (g/nu)(y^j y^h ∇_j b_h + g q b^j f_j) v^i.
    pub drift: DVector<f64>,
    /// -g q f^i.
    pub torsion: DVector<f64>,
    /// E^i, carrying the charge gradients.
    pub e_term: DVector<f64>,
    /// a^i_nm y^n y^m.
    pub riemann: DVector<f64>,
    /// M with ∂K/∂g = (1/2) M K.
    pub m: f64,
}

/// Outcome of the Berwald test over a sample batch.
#[derive(Debug, Clone)]
pub struct BerwaldVerdict {
    pub pass: bool,
    pub charge_constant: bool,
    pub parallel_b: bool,
    pub worst_residual: f64,
    /// Index of the worst sample (the witness when the verdict fails).
    pub worst_sample: usize,
    pub tolerance: f64,
}

/// M = 2 ∂(ln K)/∂g at fixed (x, y, b, a), by certified central differences.
pub fn charge_response_m(pf: &PointFields, y: &DVector<f64>) -> Result<f64> {
    let f = |g: f64| -> Result<f64> { Ok(kernel::eval_with_charge(pf, y, g)?.k.ln()) };
    let c = oracle::param_derivative(&f, pf.charge, Some((-2.0, 2.0)), &DiffOptions::for_param())?;
    Ok(2.0 * c.value)
}

/// Closed-form M, kept as a cross-check of the numeric route:
/// M = 2 q (2b + g q) / ((4 - g^2) B) - f / h^3.
pub fn charge_response_m_closed(kern: &ScalarKernel) -> f64 {
    let g = kern.charge;
    2.0 * kern.q * (2.0 * kern.b + g * kern.q) / ((4.0 - g * g) * kern.b_form)
        - kern.angle / kern.h.powi(3)
}

/// E^i with the cancellation-safe middle term
/// (q^2/(B nu)) (yg) [B b^i - (b + g q c^2) y^i], which stays finite for all
/// |g| < 2 including g = 0.
pub fn e_coefficients(
    pf: &PointFields,
    kern: &ScalarKernel,
    bundle: &TensorBundle,
    y: &DVector<f64>,
    m: f64,
) -> DVector<f64> {
    let yg = pf.charge_pairing(y);
    let n = pf.dim();
    if pf.charge_grad.iter().all(|&v| v == 0.0) {
        return DVector::zeros(n);
    }
    let k_sq = kern.k * kern.k;
    let middle_coeff = kern.q * kern.q / (kern.b_form * kern.nu) * yg;
    let middle =
        (&pf.b_con * kern.b_form - y * (kern.b + kern.charge * kern.q * pf.c_sq)) * middle_coeff;
    let raised_grad = &bundle.inverse * &pf.charge_grad;
    y * (m * yg) + middle - raised_grad * (0.5 * m * k_sq)
}

/// Literal form of the middle E-term, K (2 b^2 w^2 / (g B)) (yg) X A^i with
/// A^i taken from the assembled Cartan trace; used as a cross-check away from
/// g = 0 where the 1/g factor is removable.
pub fn e_middle_literal(
    pf: &PointFields,
    kern: &ScalarKernel,
    trace_up: &DVector<f64>,
    y: &DVector<f64>,
) -> Result<DVector<f64>> {
    if kern.charge.abs() < 0.1 {
        return Err(Error::ConstraintViolation(
            "literal middle-term form is used only for |g| >= 0.1".into(),
        ));
    }
    let yg = pf.charge_pairing(y);
    let w_sq_b_sq = kern.q * kern.q; // b^2 w^2 = q^2
    let coeff = kern.k * 2.0 * w_sq_b_sq / (kern.charge * kern.b_form) * yg * kern.x();
    Ok(trace_up * coeff)
}

/// Closed form of the spray coefficients with their term decomposition.
pub fn spray_closed_form(fields: &FieldSet, x: &[f64], y: &DVector<f64>) -> Result<SprayData> {
    let pf = fields.at(x)?;
    spray_closed_form_at(&pf, y)
}

pub fn spray_closed_form_at(pf: &PointFields, y: &DVector<f64>) -> Result<SprayData> {
    let kern = kernel::eval(pf, y)?;
    let aux = tensors::auxiliary_vectors(pf, &kern, y);
    let bundle = tensors::bundle(pf, &kern, &aux);
    let ft = pf.f_tensors(y);
    let n = pf.dim();

    // y^j y^h ∇_j b_h
    let mut y_nabla_y = 0.0;
    for j in 0..n {
        for h in 0..n {
            y_nabla_y += y[j] * y[h] * pf.nabla_b[(j, h)];
        }
    }
    let b_dot_f = pf.b_con.dot(&ft.lowered);
    let drift = &aux.v_up * (kern.charge / kern.nu * (y_nabla_y + kern.charge * kern.q * b_dot_f));
    let torsion = &ft.raised * (-kern.charge * kern.q);
    let m = charge_response_m(pf, y)?;
    let e_term = e_coefficients(pf, &kern, &bundle, y, m);
    let riemann = pf.christoffel_quadratic(y);
    let g_spray = &drift + &torsion + &e_term + &riemann;
    Ok(SprayData {
        g_spray,
        drift,
        torsion,
        e_term,
        riemann,
        m,
    })
}

/// Brute-force spray oracle: G^i = γ^i_nm y^n y^m with the Finslerian
/// Christoffel symbols built from central x-differences of the closed-form
/// metric at fixed y, raised with the inverse Finsler metric. One Richardson
/// level; convergence is certified by comparing the h and h/2 results.
pub fn spray_oracle(fields: &FieldSet, x: &[f64], y: &DVector<f64>) -> Result<DVector<f64>> {
    let n = fields.dim();
    let metric_at = |xx: &[f64]| -> Result<nalgebra::DMatrix<f64>> {
        let pf = fields.at(xx)?;
        let kern = kernel::eval(&pf, y)?;
        let aux = tensors::auxiliary_vectors(&pf, &kern, y);
        Ok(tensors::metric_tensor(&pf, &kern, &aux))
    };
    // dg[k][i][j] = ∂g_ij/∂x^k, one Richardson level over the base step
    let dg_at = |h_scale: f64| -> Result<Vec<nalgebra::DMatrix<f64>>> {
        let mut out = Vec::with_capacity(n);
        for k in 0..n {
            let h = 1e-5 * h_scale * (1.0 + x[k].abs());
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[k] += h;
            xm[k] -= h;
            let d1 = (metric_at(&xp)? - metric_at(&xm)?) / (2.0 * h);
            let mut xp2 = x.to_vec();
            let mut xm2 = x.to_vec();
            xp2[k] += 0.5 * h;
            xm2[k] -= 0.5 * h;
            let d2 = (metric_at(&xp2)? - metric_at(&xm2)?) / h;
            out.push((d2 * 4.0 - d1) / 3.0);
        }
        Ok(out)
    };
    let coarse = dg_at(1.0)?;
    let fine = dg_at(0.5)?;
    let mut certificate = 0.0f64;
    let mut scale = 0.0f64;
    for k in 0..n {
        certificate = certificate.max((&fine[k] - &coarse[k]).abs().max());
        scale = scale.max(fine[k].abs().max());
    }
    if certificate > 1e-6 * (1.0 + scale) {
        return Err(Error::StepUnderflow {
            certificate,
            tolerance: 1e-6 * (1.0 + scale),
        });
    }
    let dg = fine;
    let pf = fields.at(x)?;
    let kern = kernel::eval(&pf, y)?;
    let aux = tensors::auxiliary_vectors(&pf, &kern, y);
    let inverse = tensors::inverse_metric(&pf, &kern, &aux);
    let mut lowered = DVector::zeros(n);
    for k in 0..n {
        let mut s = 0.0;
        for nn in 0..n {
            for m in 0..n {
                let gamma = 0.5 * (dg[m][(k, nn)] + dg[nn][(k, m)] - dg[k][(nn, m)]);
                s += gamma * y[nn] * y[m];
            }
        }
        lowered[k] = s;
    }
    Ok(&inverse * lowered)
}

/// Berwald test: PASS when the spray equals the Riemannian quadratic term on
/// every sample and the fields report a constant charge with parallel b.
pub fn berwald_check(
    fields: &FieldSet,
    samples: &[(Vec<f64>, DVector<f64>)],
    tolerance: f64,
) -> Result<BerwaldVerdict> {
    if samples.len() < 10 {
        return Err(Error::InvalidScenario(format!(
            "Berwald test needs at least 10 samples, got {}",
            samples.len()
        )));
    }
    let mut charge_constant = fields.charge_is_constant();
    let mut parallel_b = true;
    let mut worst_residual = 0.0f64;
    let mut worst_sample = 0usize;
    for (idx, (x, y)) in samples.iter().enumerate() {
        let pf = fields.at(x)?;
        if pf.charge_grad.abs().max() > 1e-14 {
            charge_constant = false;
        }
        if pf.nabla_b.abs().max() > 1e-12 {
            parallel_b = false;
        }
        let spray = spray_closed_form_at(&pf, y)?;
        let riemann_scale = 1.0 + spray.riemann.abs().max();
        let residual = (&spray.g_spray - &spray.riemann).abs().max() / riemann_scale;
        if residual > worst_residual {
            worst_residual = residual;
            worst_sample = idx;
        }
    }
    let pass = charge_constant && parallel_b && worst_residual <= tolerance;
    Ok(BerwaldVerdict {
        pass,
        charge_constant,
        parallel_b,
        worst_residual,
        worst_sample,
        tolerance,
    })
}
