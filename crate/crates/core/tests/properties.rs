//! Property tests over randomly drawn admissible configurations: the scalar
//! invariants of the kernel, homogeneity, positive-definiteness, and the
//! indefinite-case counterparts.

use nalgebra::DVector;
use proptest::prelude::*;

use finsleroid::fields::{CovectorField, FieldSet, MetricField, ScalarField, Signature};
use finsleroid::kernel;
use finsleroid::linalg::symmetric_eigenvalues;
use finsleroid::pseudo;
use finsleroid::tensors;

fn pd_fields(c: f64, g: f64) -> FieldSet {
    FieldSet::new(
        3,
        Signature::PositiveDefinite,
        MetricField::identity(3),
        CovectorField::constant(3, &[c, 0.0, 0.0]),
        ScalarField::constant(3, g),
    )
    .unwrap()
}

fn admissible_config() -> impl Strategy<Value = (f64, f64, [f64; 3])> {
    (
        0.05f64..0.95,
        -1.95f64..1.95,
        [-2.0f64..2.0, -2.0f64..2.0, -2.0f64..2.0],
    )
        .prop_filter("y must stay away from zero", |(_, _, y)| {
            y.iter().map(|v| v * v).sum::<f64>() > 1e-4
        })
}

proptest! {
    #[test]
    fn kernel_scalar_invariants((c, g, y) in admissible_config()) {
        let fields = pd_fields(c, g);
        let pf = fields.at(&[0.0; 3]).unwrap();
        let yv = DVector::from_column_slice(&y);
        let k = kernel::eval(&pf, &yv).unwrap();
        prop_assert!(k.k > 0.0);
        prop_assert!(k.b_form > 0.0);
        prop_assert!(k.nu > 0.0);
        prop_assert!(k.eta > 0.0);
        prop_assert!(k.q * k.q >= (1.0 - c * c) / (c * c) * k.b * k.b - 1e-12 * k.s_sq);
        let l_identity = (k.l * k.l + k.h * k.h * k.b * k.b - k.b_form).abs();
        prop_assert!(l_identity <= 1e-10 * k.b_form);
    }

    #[test]
    fn norm_is_positively_homogeneous((c, g, y) in admissible_config(), lambda in 0.1f64..5.0) {
        let fields = pd_fields(c, g);
        let pf = fields.at(&[0.0; 3]).unwrap();
        let yv = DVector::from_column_slice(&y);
        let k1 = kernel::eval(&pf, &yv).unwrap().k;
        let k2 = kernel::eval(&pf, &(&yv * lambda)).unwrap().k;
        prop_assert!((k2 - lambda * k1).abs() <= 1e-12 * lambda * k1);
    }

    #[test]
    fn metric_is_positive_definite_with_positive_determinant((c, g, y) in admissible_config()) {
        let fields = pd_fields(c, g);
        let pf = fields.at(&[0.0; 3]).unwrap();
        let yv = DVector::from_column_slice(&y);
        let k = kernel::eval(&pf, &yv).unwrap();
        let aux = tensors::auxiliary_vectors(&pf, &k, &yv);
        let metric = tensors::metric_tensor(&pf, &k, &aux);
        let eigs = symmetric_eigenvalues(&metric);
        prop_assert!(eigs[0] > 0.0, "min eigenvalue {}", eigs[0]);
        let det = tensors::metric_determinant(&pf, &k);
        prop_assert!(det > 0.0);
        prop_assert!((det - metric.determinant()).abs() <= 1e-10 * det.max(1.0));
    }

    #[test]
    fn angle_branches_meet_at_the_axis_plane(
        c in 0.05f64..0.95,
        g in -1.95f64..1.95,
        planar in [-2.0f64..2.0, -2.0f64..2.0],
    ) {
        prop_assume!(planar.iter().map(|v| v * v).sum::<f64>() > 1e-2);
        let fields = pd_fields(c, g);
        let pf = fields.at(&[0.0; 3]).unwrap();
        let eps = 1e-8;
        let plus = kernel::eval(&pf, &DVector::from_vec(vec![eps, planar[0], planar[1]])).unwrap();
        let minus = kernel::eval(&pf, &DVector::from_vec(vec![-eps, planar[0], planar[1]])).unwrap();
        prop_assert!((plus.angle - minus.angle).abs() <= 1e-6);
        prop_assert!((plus.k - minus.k).abs() <= 1e-6 * plus.k);
    }

    #[test]
    fn indefinite_norm_forms_and_homogeneity(
        g in -3.0f64..3.0,
        y0 in 0.5f64..1.5,
        spatial in [-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0],
        lambda in 0.2f64..4.0,
    ) {
        let fields = FieldSet::new(
            4,
            Signature::TimeSpace,
            MetricField::diagonal(4, &[1.0, -1.0, -1.0, -1.0]),
            CovectorField::constant(4, &[0.8, 0.0, 0.0, 0.0]),
            ScalarField::constant(4, g),
        )
        .unwrap();
        let pf = fields.at(&[0.0; 4]).unwrap();
        let yv = DVector::from_vec(vec![y0, spatial[0], spatial[1], spatial[2]]);
        let Ok(kern) = pseudo::eval_pseudo_kernel(&pf, &yv) else {
            // outside the admissible cone; nothing to assert
            return Ok(());
        };
        prop_assume!(kern.b_form.abs() > 1e-6 * kern.s_sq);
        let (a, b) = pseudo::pseudo_norm_forms(&kern);
        prop_assert!((a - b).abs() <= 1e-11 * a.max(b));
        let scaled = pseudo::eval_pseudo_kernel(&pf, &(&yv * lambda)).unwrap();
        prop_assert!((scaled.f - lambda * kern.f).abs() <= 1e-11 * lambda * kern.f);
        let identity = kern.h * kern.h * kern.b * kern.b - kern.l * kern.l - kern.b_form;
        prop_assert!(identity.abs() <= 1e-11 * (1.0 + kern.b_form.abs()));
    }
}
