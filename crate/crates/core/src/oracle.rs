//! Certified numerical differentiation: central differences with Richardson
//! extrapolation, returning an error certificate (the gap between the last
//! two extrapolation levels) alongside every estimate. All cross-checks in
//! the crate run through this module so their tolerances are meaningful.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// A value together with the certificate of its differentiation error.
#[derive(Debug, Clone)]
pub struct Certified<T> {
    pub value: T,
    pub certificate: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct DiffOptions {
    /// Base step; the actual step is `base_step * (1 + |coordinate|)`.
    pub base_step: f64,
    /// Richardson extrapolation levels.
    pub levels: usize,
    /// Accepted certificate, relative to `1 + |value|`.
    pub tolerance: f64,
}

impl Default for DiffOptions {
    fn default() -> Self {
        // With two Richardson levels the truncation term is O(h^6), so the
        // roundoff/truncation balance sits near h ~ eps^(1/7), not the
        // single-difference eps^(1/3) choice.
        DiffOptions {
            base_step: 1e-3,
            levels: 2,
            tolerance: 1e-6,
        }
    }
}

impl DiffOptions {
    /// Second derivatives lose half the mantissa to cancellation; keep the
    /// base step large enough that roundoff stays below the tolerance.
    pub fn for_hessian() -> Self {
        DiffOptions {
            base_step: 1e-3,
            levels: 2,
            tolerance: 1e-6,
        }
    }

    /// Derivatives in the charge parameter g.
    pub fn for_param() -> Self {
        DiffOptions {
            base_step: 1e-5,
            levels: 2,
            tolerance: 1e-6,
        }
    }
}

fn stencil_eval(f: &dyn Fn(f64) -> Result<f64>, t: f64) -> Result<f64> {
    f(t).map_err(|e| Error::InadmissibleStencil(e.to_string()))
}

/// Central first derivative of a scalar function of one variable, Richardson
/// extrapolated `opts.levels` times.
pub fn central_derivative(
    f: &dyn Fn(f64) -> Result<f64>,
    at: f64,
    opts: &DiffOptions,
) -> Result<Certified<f64>> {
    let h0 = opts.base_step * (1.0 + at.abs());
    let levels = opts.levels.max(1);
    // D_k = central difference at step h0 / 2^k
    let mut table: Vec<f64> = (0..=levels)
        .map(|k| {
            let h = h0 / (1 << k) as f64;
            Ok((stencil_eval(f, at + h)? - stencil_eval(f, at - h)?) / (2.0 * h))
        })
        .collect::<Result<_>>()?;
    let mut gap = f64::INFINITY;
    let mut factor = 4.0;
    while table.len() > 1 {
        let next: Vec<f64> = table
            .windows(2)
            .map(|w| (factor * w[1] - w[0]) / (factor - 1.0))
            .collect();
        // the certificate of each pass is the gap to the previous level; a
        // gap that stops shrinking means the step has hit roundoff
        gap = (next[next.len() - 1] - table[table.len() - 1]).abs();
        table = next;
        factor *= 4.0;
    }
    let value = table[0];
    let scale = 1.0 + value.abs();
    if gap > opts.tolerance * scale {
        return Err(Error::StepUnderflow {
            certificate: gap,
            tolerance: opts.tolerance * scale,
        });
    }
    Ok(Certified {
        value,
        certificate: gap,
    })
}

/// Gradient of a scalar function of a coordinate vector.
pub fn gradient(
    f: &dyn Fn(&[f64]) -> Result<f64>,
    at: &[f64],
    opts: &DiffOptions,
) -> Result<Certified<DVector<f64>>> {
    let n = at.len();
    let mut value = DVector::zeros(n);
    let mut certificate = 0.0f64;
    for i in 0..n {
        let fi = |t: f64| -> Result<f64> {
            let mut x = at.to_vec();
            x[i] = t;
            f(&x)
        };
        let c = central_derivative(&fi, at[i], opts)?;
        value[i] = c.value;
        certificate = certificate.max(c.certificate);
    }
    Ok(Certified { value, certificate })
}

/// Symmetrized Hessian of a scalar function, with per-level Richardson
/// extrapolation of the full second-difference stencil.
pub fn hessian(
    f: &dyn Fn(&[f64]) -> Result<f64>,
    at: &[f64],
    opts: &DiffOptions,
) -> Result<Certified<DMatrix<f64>>> {
    let n = at.len();
    let eval =
        |x: &[f64]| -> Result<f64> { f(x).map_err(|e| Error::InadmissibleStencil(e.to_string())) };
    let f0 = eval(at)?;
    let hess_at = |scale: f64| -> Result<DMatrix<f64>> {
        let mut m = DMatrix::zeros(n, n);
        let step = |i: usize| opts.base_step * scale * (1.0 + at[i].abs());
        for i in 0..n {
            let hi = step(i);
            let mut xp = at.to_vec();
            let mut xm = at.to_vec();
            xp[i] += hi;
            xm[i] -= hi;
            m[(i, i)] = (eval(&xp)? - 2.0 * f0 + eval(&xm)?) / (hi * hi);
            for j in (i + 1)..n {
                let hj = step(j);
                let mut xpp = at.to_vec();
                let mut xpm = at.to_vec();
                let mut xmp = at.to_vec();
                let mut xmm = at.to_vec();
                xpp[i] += hi;
                xpp[j] += hj;
                xpm[i] += hi;
                xpm[j] -= hj;
                xmp[i] -= hi;
                xmp[j] += hj;
                xmm[i] -= hi;
                xmm[j] -= hj;
                let v = (eval(&xpp)? - eval(&xpm)? - eval(&xmp)? + eval(&xmm)?) / (4.0 * hi * hj);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        Ok(m)
    };
    let levels = opts.levels.max(1);
    let mut table: Vec<DMatrix<f64>> = (0..=levels)
        .map(|k| hess_at(1.0 / (1 << k) as f64))
        .collect::<Result<_>>()?;
    let mut gap = f64::INFINITY;
    let mut factor = 4.0;
    while table.len() > 1 {
        let next: Vec<DMatrix<f64>> = table
            .windows(2)
            .map(|w| (&w[1] * factor - &w[0]) / (factor - 1.0))
            .collect();
        gap = (&next[next.len() - 1] - &table[table.len() - 1])
            .abs()
            .max();
        table = next;
        factor *= 4.0;
    }
    let value = table.swap_remove(0);
    let scale = 1.0 + value.abs().max();
    if gap > opts.tolerance * scale {
        return Err(Error::StepUnderflow {
            certificate: gap,
            tolerance: opts.tolerance * scale,
        });
    }
    Ok(Certified {
        value,
        certificate: gap,
    })
}

/// Two-sided derivative in a scalar parameter restricted to an open range
/// (used for the charge derivative ∂/∂g on (-2, 2)).
pub fn param_derivative(
    f: &dyn Fn(f64) -> Result<f64>,
    at: f64,
    range: Option<(f64, f64)>,
    opts: &DiffOptions,
) -> Result<Certified<f64>> {
    if let Some((lo, hi)) = range {
        let h0 = opts.base_step * (1.0 + at.abs());
        if at - h0 <= lo || at + h0 >= hi {
            return Err(Error::RangeClamp { g: at, step: h0 });
        }
    }
    central_derivative(f, at, opts)
}
