//! Geodesic flow of the spray: fixed-step classical Runge-Kutta integration
//! of ẍ^i + G^i(x, ẋ) = 0, with the norm K as the conserved quantity that
//! certifies each trajectory.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::fields::FieldSet;
use crate::kernel;
use crate::spray;

#[derive(Debug, Clone)]
pub struct TrajectoryRow {
    pub t: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub k: f64,
    /// Relative conservation residual |K(t) - K(0)| / K(0).
    pub residual: f64,
    pub max_g: f64,
}

#[derive(Debug)]
pub struct Trajectory {
    pub rows: Vec<TrajectoryRow>,
    pub k0: f64,
    /// Set when the integration stopped early; rows up to the fault are kept.
    pub fault: Option<Error>,
}

impl Trajectory {
    pub fn max_residual(&self) -> f64 {
        self.rows.iter().fold(0.0, |m, r| m.max(r.residual))
    }
}

struct State {
    x: DVector<f64>,
    y: DVector<f64>,
}

fn derivative(
    fields: &FieldSet,
    x: &DVector<f64>,
    y: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let s = spray::spray_closed_form(fields, x.as_slice(), y)?;
    Ok((y.clone(), -s.g_spray))
}

/// Integrate the geodesic flow from (x0, y0) over [0, t_end] at a fixed step.
pub fn integrate(
    fields: &FieldSet,
    x0: &[f64],
    y0: &[f64],
    t_end: f64,
    step: f64,
) -> Result<Trajectory> {
    if !(step > 0.0 && t_end > 0.0) {
        return Err(Error::InvalidScenario(
            "geodesic integration needs positive step and t_end".into(),
        ));
    }
    let mut state = State {
        x: DVector::from_column_slice(x0),
        y: DVector::from_column_slice(y0),
    };
    let pf0 = fields.at(x0)?;
    let k0 = kernel::eval(&pf0, &state.y)?.k;
    let steps = (t_end / step).round().max(1.0) as usize;
    let dt = t_end / steps as f64;
    let mut rows = Vec::with_capacity(steps + 1);
    let record = |rows: &mut Vec<TrajectoryRow>, t: f64, st: &State| -> Result<()> {
        let pf = fields
            .at(st.x.as_slice())
            .map_err(|e| Error::LeftAdmissibleDomain {
                t,
                reason: e.to_string(),
            })?;
        let k = kernel::eval(&pf, &st.y)
            .map_err(|e| Error::LeftAdmissibleDomain {
                t,
                reason: e.to_string(),
            })?
            .k;
        if !k.is_finite() {
            return Err(Error::StepRejected {
                t,
                reason: "norm became non-finite".into(),
            });
        }
        let g = spray::spray_closed_form(fields, st.x.as_slice(), &st.y)?.g_spray;
        rows.push(TrajectoryRow {
            t,
            x: st.x.as_slice().to_vec(),
            y: st.y.as_slice().to_vec(),
            k,
            residual: (k - k0).abs() / k0,
            max_g: g.abs().max(),
        });
        Ok(())
    };
    if let Err(e) = record(&mut rows, 0.0, &state) {
        return Ok(Trajectory {
            rows,
            k0,
            fault: Some(e),
        });
    }
    for i in 0..steps {
        let t = i as f64 * dt;
        let stepped = (|| -> Result<State> {
            let (k1x, k1y) = derivative(fields, &state.x, &state.y)?;
            let (k2x, k2y) = derivative(
                fields,
                &(&state.x + &k1x * (dt / 2.0)),
                &(&state.y + &k1y * (dt / 2.0)),
            )?;
            let (k3x, k3y) = derivative(
                fields,
                &(&state.x + &k2x * (dt / 2.0)),
                &(&state.y + &k2y * (dt / 2.0)),
            )?;
            let (k4x, k4y) = derivative(fields, &(&state.x + &k3x * dt), &(&state.y + &k3y * dt))?;
            Ok(State {
                x: &state.x + (k1x + k2x * 2.0 + k3x * 2.0 + k4x) * (dt / 6.0),
                y: &state.y + (k1y + k2y * 2.0 + k3y * 2.0 + k4y) * (dt / 6.0),
            })
        })();
        match stepped {
            Ok(next) => state = next,
            Err(e) => {
                return Ok(Trajectory {
                    rows,
                    k0,
                    fault: Some(Error::LeftAdmissibleDomain {
                        t,
                        reason: e.to_string(),
                    }),
                })
            }
        }
        if let Err(e) = record(&mut rows, (i + 1) as f64 * dt, &state) {
            return Ok(Trajectory {
                rows,
                k0,
                fault: Some(e),
            });
        }
    }
    Ok(Trajectory {
        rows,
        k0,
        fault: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{CovectorField, MetricField, ScalarField, Signature};
    use crate::poly::{Poly, Term};

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

    fn s2() -> FieldSet {
        let b0 = Poly::new(
            3,
            vec![
                Term {
                    coeff: 0.7,
                    powers: vec![0, 0, 0],
                },
                Term {
                    coeff: 0.05,
                    powers: vec![0, 2, 0],
                },
            ],
        );
        FieldSet::new(
            3,
            Signature::PositiveDefinite,
            MetricField::identity(3),
            CovectorField::new(vec![b0, Poly::zero(3), Poly::zero(3)]),
            ScalarField::constant(3, 0.5),
        )
        .unwrap()
    }

    #[test]
    fn straight_line_for_constant_fields() {
        let traj = integrate(&s1(), &[0.0; 3], &[1.0, 0.5, -0.2], 1.0, 1e-2).unwrap();
        assert!(traj.fault.is_none());
        let last = traj.rows.last().unwrap();
        for i in 0..3 {
            let expected = [1.0, 0.5, -0.2][i];
            assert!((last.x[i] - expected).abs() < 1e-12, "slot {i}");
        }
        assert!(traj.max_residual() < 1e-13);
        assert!(last.max_g < 1e-12);
    }

    #[test]
    fn curved_path_conserves_norm() {
        let traj = integrate(&s2(), &[0.0, 0.5, 0.0], &[0.6, 0.8, 0.3], 1.0, 1e-3).unwrap();
        assert!(traj.fault.is_none());
        assert!(traj.max_residual() <= 1e-6, "drift {}", traj.max_residual());
        // path actually curves
        let last = traj.rows.last().unwrap();
        let straight: Vec<f64> = (0..3)
            .map(|i| [0.0, 0.5, 0.0][i] + [0.6, 0.8, 0.3][i])
            .collect();
        let dev: f64 = (0..3)
            .map(|i| (last.x[i] - straight[i]).abs())
            .fold(0.0, f64::max);
        assert!(dev > 1e-4, "deviation {dev}");
    }

    #[test]
    fn fourth_order_drift_ratio_under_step_halving() {
        let f = s2();
        let x0 = [0.0, 0.5, 0.0];
        let y0 = [0.6, 0.8, 0.3];
        let coarse = integrate(&f, &x0, &y0, 1.0, 0.05).unwrap().max_residual();
        let fine = integrate(&f, &x0, &y0, 1.0, 0.025).unwrap().max_residual();
        let ratio = coarse / fine;
        assert!(
            (12.0..=20.0).contains(&ratio),
            "expected ~16x reduction, got {ratio} (coarse {coarse}, fine {fine})"
        );
    }

    #[test]
    fn leaving_the_domain_flushes_partial_rows() {
        // b_0 = 0.7 + 0.19 x0 crosses c = 1 near x0 = 1.58 along a straight ray
        let b0 = Poly::new(
            3,
            vec![
                Term {
                    coeff: 0.7,
                    powers: vec![0, 0, 0],
                },
                Term {
                    coeff: 0.19,
                    powers: vec![1, 0, 0],
                },
            ],
        );
        let f = FieldSet::new(
            3,
            Signature::PositiveDefinite,
            MetricField::identity(3),
            CovectorField::new(vec![b0, Poly::zero(3), Poly::zero(3)]),
            ScalarField::constant(3, 0.5),
        )
        .unwrap();
        let traj = integrate(&f, &[0.0; 3], &[2.0, 0.0, 0.0], 1.0, 1e-2).unwrap();
        assert!(matches!(
            traj.fault,
            Some(Error::LeftAdmissibleDomain { .. })
        ));
        assert!(!traj.rows.is_empty());
        assert!(traj.rows.len() < 101);
    }
}
