//! Scenario files: JSON descriptions of the background fields, the sample
//! points to test at, and tolerance overrides. Deterministic given the seed.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DVector;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{CovectorField, FieldSet, MetricField, ScalarField, Signature};
use crate::poly::{Poly, Term};
use crate::pseudo;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub dimension: usize,
    pub signature: SignatureTag,
    pub fields: FieldsSpec,
    pub samples: SamplesSpec,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub tolerances: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SignatureTag {
    #[serde(rename = "pd")]
    PositiveDefinite,
    #[serde(rename = "sr")]
    TimeSpace,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FieldsSpec {
    pub a: FieldSpec,
    pub b: FieldSpec,
    pub g: FieldSpec,
}

/// One field: a constant (scalar, vector, or matrix, depending on the slot)
/// or a polynomial given as a flat term list. Polynomial terms carry an
/// `index` selecting the component: absent for the scalar g, `[i]` for b,
/// `[i, j]` for a (symmetric slots must both be listed or both omitted).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FieldSpec {
    Constant { value: serde_json::Value },
    Polynomial { terms: Vec<TermSpec> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TermSpec {
    pub coeff: f64,
    pub powers: Vec<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SamplesSpec {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub explicit: Vec<SampleSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random: Option<RandomSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleSpec {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

/// Axis boxes: either one [lo, hi] pair for every axis or one pair per axis.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BoxSpec {
    Uniform([f64; 2]),
    PerAxis(Vec<[f64; 2]>),
}

impl BoxSpec {
    fn bounds(&self, axis: usize, dim: usize) -> Result<(f64, f64)> {
        match self {
            BoxSpec::Uniform([lo, hi]) => Ok((*lo, *hi)),
            BoxSpec::PerAxis(v) => {
                if v.len() != dim {
                    return Err(Error::InvalidScenario(format!(
                        "box lists {} axes, dimension is {dim}",
                        v.len()
                    )));
                }
                Ok((v[axis][0], v[axis][1]))
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RandomSpec {
    pub count: usize,
    pub seed: u64,
    pub x_box: BoxSpec,
    pub y_box: BoxSpec,
}

/// One resolved sample point.
#[derive(Debug, Clone)]
pub struct Sample {
    pub x: Vec<f64>,
    pub y: DVector<f64>,
}

const MAX_DRAW_FACTOR: usize = 10_000;

impl Scenario {
    pub fn from_path(path: &Path) -> Result<Scenario> {
        let text = std::fs::read_to_string(path)?;
        let sc: Scenario = serde_json::from_str(&text)
            .map_err(|e| Error::InvalidScenario(format!("{}: {e}", path.display())))?;
        sc.validate_shape()?;
        Ok(sc)
    }

    pub fn from_json(text: &str) -> Result<Scenario> {
        let sc: Scenario =
            serde_json::from_str(text).map_err(|e| Error::InvalidScenario(e.to_string()))?;
        sc.validate_shape()?;
        Ok(sc)
    }

    pub fn signature(&self) -> Signature {
        match self.signature {
            SignatureTag::PositiveDefinite => Signature::PositiveDefinite,
            SignatureTag::TimeSpace => Signature::TimeSpace,
        }
    }

    fn validate_shape(&self) -> Result<()> {
        if self.dimension < 2 {
            return Err(Error::InvalidScenario(
                "dimension must be at least 2".into(),
            ));
        }
        if self.samples.explicit.is_empty() && self.samples.random.is_none() {
            return Err(Error::InvalidScenario("scenario has no samples".into()));
        }
        for (i, s) in self.samples.explicit.iter().enumerate() {
            if s.x.len() != self.dimension || s.y.len() != self.dimension {
                return Err(Error::InvalidScenario(format!(
                    "explicit sample {i} has wrong arity"
                )));
            }
        }
        Ok(())
    }

    /// Build the immutable field set.
    pub fn field_set(&self) -> Result<FieldSet> {
        let n = self.dimension;
        let g = match &self.fields.g {
            FieldSpec::Constant { value } => {
                let v = value
                    .as_f64()
                    .ok_or_else(|| Error::InvalidScenario("g constant must be a number".into()))?;
                ScalarField::constant(n, v)
            }
            FieldSpec::Polynomial { terms } => ScalarField::new(poly_from_terms(n, terms, 0, &[])?),
        };
        let b = match &self.fields.b {
            FieldSpec::Constant { value } => {
                let v: Vec<f64> = serde_json::from_value(value.clone())
                    .map_err(|_| Error::InvalidScenario("b constant must be a vector".into()))?;
                if v.len() != n {
                    return Err(Error::InvalidScenario(format!(
                        "b constant has {} components, dimension is {n}",
                        v.len()
                    )));
                }
                CovectorField::constant(n, &v)
            }
            FieldSpec::Polynomial { terms } => {
                let comps: Vec<Poly> = (0..n)
                    .map(|i| poly_from_terms(n, terms, 1, &[i]))
                    .collect::<Result<_>>()?;
                CovectorField::new(comps)
            }
        };
        let a = match &self.fields.a {
            FieldSpec::Constant { value } => {
                let rows: Vec<Vec<f64>> = serde_json::from_value(value.clone())
                    .map_err(|_| Error::InvalidScenario("a constant must be a matrix".into()))?;
                if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                    return Err(Error::InvalidScenario("a constant has wrong shape".into()));
                }
                let comps = rows
                    .iter()
                    .flat_map(|r| r.iter().map(|&v| Poly::constant(n, v)))
                    .collect();
                MetricField::new(n, comps)?
            }
            FieldSpec::Polynomial { terms } => {
                let mut comps = Vec::with_capacity(n * n);
                for i in 0..n {
                    for j in 0..n {
                        comps.push(poly_from_terms(n, terms, 2, &[i, j])?);
                    }
                }
                MetricField::new(n, comps)?
            }
        };
        FieldSet::new(n, self.signature(), a, b, g)
    }

    /// Resolve samples: explicit points first (validated strictly), then the
    /// seeded random batch with rejection of inadmissible draws. Sample order
    /// is deterministic given (scenario, seed).
    pub fn resolve_samples(&self, seed_override: Option<u64>) -> Result<Vec<Sample>> {
        let fields = self.field_set()?;
        let mut out = Vec::new();
        for s in &self.samples.explicit {
            let y = DVector::from_column_slice(&s.y);
            self.validate_sample(&fields, &s.x, &y)?;
            out.push(Sample { x: s.x.clone(), y });
        }
        if let Some(spec) = &self.samples.random {
            let seed = seed_override.unwrap_or(spec.seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = self.dimension;
            let mut drawn = 0usize;
            let mut last_reject = String::from("no draws attempted");
            let budget = spec.count.saturating_mul(MAX_DRAW_FACTOR);
            let mut attempts = 0usize;
            while drawn < spec.count {
                if attempts >= budget.max(MAX_DRAW_FACTOR) {
                    return Err(Error::InvalidScenario(format!(
                        "random sampling exhausted {attempts} draws; last rejection: {last_reject}"
                    )));
                }
                attempts += 1;
                let mut x = vec![0.0; n];
                for (axis, slot) in x.iter_mut().enumerate() {
                    let (lo, hi) = spec.x_box.bounds(axis, n)?;
                    *slot = rng.gen_range(lo..=hi);
                }
                let mut yv = vec![0.0; n];
                for (axis, slot) in yv.iter_mut().enumerate() {
                    let (lo, hi) = spec.y_box.bounds(axis, n)?;
                    *slot = rng.gen_range(lo..=hi);
                }
                let y = DVector::from_column_slice(&yv);
                match self.validate_sample(&fields, &x, &y) {
                    Ok(()) => {
                        out.push(Sample { x, y });
                        drawn += 1;
                    }
                    Err(e) => last_reject = e.to_string(),
                }
            }
        }
        Ok(out)
    }

    fn validate_sample(&self, fields: &FieldSet, x: &[f64], y: &DVector<f64>) -> Result<()> {
        let pf = fields.at(x)?;
        if y.iter().all(|&v| v == 0.0) {
            return Err(Error::ZeroVector);
        }
        match self.signature() {
            Signature::PositiveDefinite => {
                // keep random vectors meaningfully sized for relative checks
                if y.amax() < 1e-3 {
                    return Err(Error::InadmissibleVector("vector too small".into()));
                }
            }
            Signature::TimeSpace => {
                let kern = pseudo::eval_pseudo_kernel(&pf, y)?;
                // keep a margin to every cone boundary so difference stencils
                // stay admissible, and stay clear of the degenerate surface
                // where the characteristic form changes sign
                let b_sq = kern.b * kern.b;
                if kern.s_sq <= 0.05 * b_sq || kern.q * kern.q <= 0.05 * b_sq {
                    return Err(Error::InadmissibleVector(
                        "too close to the admissible-cone boundary".into(),
                    ));
                }
                if kern.b_form <= 0.2 * kern.s_sq {
                    return Err(Error::InadmissibleVector(
                        "too close to the degenerate surface of the characteristic form".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Tolerance by name, falling back to the built-in default.
    pub fn tolerance(&self, name: &str) -> (f64, &'static str) {
        if let Some(&v) = self.tolerances.get(name) {
            (v, "scenario")
        } else {
            (default_tolerance(name), "default")
        }
    }
}

fn poly_from_terms(nvars: usize, terms: &[TermSpec], arity: usize, want: &[usize]) -> Result<Poly> {
    let mut selected = Vec::new();
    for t in terms {
        if t.powers.len() != nvars {
            return Err(Error::InvalidScenario(format!(
                "term has {} powers, dimension is {nvars}",
                t.powers.len()
            )));
        }
        let idx = t.index.as_deref().unwrap_or(&[]);
        if idx.len() != arity {
            return Err(Error::InvalidScenario(format!(
                "term index {idx:?} has arity {}, expected {arity}",
                idx.len()
            )));
        }
        let matches = match arity {
            0 => true,
            1 => idx[0] == want[0],
            2 => {
                (idx[0] == want[0] && idx[1] == want[1])
                    || (idx[0] == want[1] && idx[1] == want[0] && want[0] != want[1])
            }
            _ => false,
        };
        if matches {
            selected.push(Term {
                coeff: t.coeff,
                powers: t.powers.clone(),
            });
        }
    }
    Ok(Poly::new(nvars, selected))
}

pub fn default_tolerance(name: &str) -> f64 {
    match name {
        "algebraic" => 1e-9,
        "reciprocity" => 1e-10,
        "determinant" => 1e-10,
        "forms" => 1e-12,
        "derivative" => 1e-6,
        "hessian" => 1e-6,
        "gradient" => 1e-7,
        "cartan_forms" => 1e-10,
        "cartan_numeric" => 1e-6,
        "homogeneity" => 1e-10,
        "spray_oracle" => 1e-5,
        "berwald" => 1e-6,
        "berwald_witness" => 1e-3,
        "pseudo_exact" => 1e-12,
        "pseudo_reduction" => 1e-7,
        "duality_metric" => 1e-5,
        "duality_y" => 1e-6,
        "geodesic_drift" => 1e-6,
        "riemann_reduction" => 1e-12,
        "riemann_reduction_metric" => 1e-10,
        "charge_response" => 1e-7,
        "branch_continuity" => 1e-6,
        "pseudo_euler" => 1e-8,
        "pseudo_euler_hessian" => 1e-6,
        "pseudo_norm_warning" => 0.5,
        _ => 1e-9,
    }
}

/// Built-in scenario constructors mirroring the shipped JSON files.
pub mod builtin {
    use super::*;

    fn term(coeff: f64, powers: &[u32], index: Option<&[usize]>) -> TermSpec {
        TermSpec {
            coeff,
            powers: powers.to_vec(),
            index: index.map(|s| s.to_vec()),
        }
    }

    fn constant_a(n: usize, diag: &[f64]) -> FieldSpec {
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| if i == j { diag[i] } else { 0.0 }).collect())
            .collect();
        FieldSpec::Constant {
            value: serde_json::to_value(rows).unwrap(),
        }
    }

    fn samples_3d(explicit: &[([f64; 3], [f64; 3])], count: usize, seed: u64) -> SamplesSpec {
        SamplesSpec {
            explicit: explicit
                .iter()
                .map(|(x, y)| SampleSpec {
                    x: x.to_vec(),
                    y: y.to_vec(),
                })
                .collect(),
            random: Some(RandomSpec {
                count,
                seed,
                x_box: BoxSpec::Uniform([-1.0, 1.0]),
                y_box: BoxSpec::Uniform([-1.5, 1.5]),
            }),
        }
    }

    /// Constant fields on a flat background; the Berwald base case.
    pub fn s1() -> Scenario {
        Scenario {
            name: "s1".into(),
            dimension: 3,
            signature: SignatureTag::PositiveDefinite,
            fields: FieldsSpec {
                a: constant_a(3, &[1.0, 1.0, 1.0]),
                b: FieldSpec::Constant {
                    value: serde_json::json!([0.8, 0.0, 0.0]),
                },
                g: FieldSpec::Constant {
                    value: serde_json::json!(0.5),
                },
            },
            samples: samples_3d(&[([0.0, 0.0, 0.0], [1.0, 1.0, 1.0])], 60, 101),
            tolerances: BTreeMap::new(),
        }
    }

    /// Varying 1-form (b_0 = 0.7 + 0.05 x1^2) on a flat background.
    pub fn s2() -> Scenario {
        Scenario {
            name: "s2".into(),
            dimension: 3,
            signature: SignatureTag::PositiveDefinite,
            fields: FieldsSpec {
                a: constant_a(3, &[1.0, 1.0, 1.0]),
                b: FieldSpec::Polynomial {
                    terms: vec![
                        term(0.7, &[0, 0, 0], Some(&[0])),
                        term(0.05, &[0, 2, 0], Some(&[0])),
                    ],
                },
                g: FieldSpec::Constant {
                    value: serde_json::json!(0.5),
                },
            },
            samples: samples_3d(&[([0.0, 1.0, 0.0], [1.0, 1.0, 1.0])], 60, 102),
            tolerances: BTreeMap::new(),
        }
    }

    /// Varying charge (g = 0.5 + 0.1 x0), constant 1-form, flat background.
    pub fn s3() -> Scenario {
        Scenario {
            name: "s3".into(),
            dimension: 3,
            signature: SignatureTag::PositiveDefinite,
            fields: FieldsSpec {
                a: constant_a(3, &[1.0, 1.0, 1.0]),
                b: FieldSpec::Constant {
                    value: serde_json::json!([0.8, 0.0, 0.0]),
                },
                g: FieldSpec::Polynomial {
                    terms: vec![term(0.5, &[0, 0, 0], None), term(0.1, &[1, 0, 0], None)],
                },
            },
            samples: samples_3d(&[([0.0, 0.0, 0.0], [1.0, 1.0, 1.0])], 60, 103),
            tolerances: BTreeMap::new(),
        }
    }

    /// The curvilinear Berwald chart: s1 pulled back through the quadratic
    /// chart map x̃^0 = x^0 + 0.05 Σ (x^j)^2. Christoffels are nonzero while
    /// ∇b stays zero and c stays 0.8.
    pub fn s4() -> Scenario {
        let n = 3;
        let eps = 0.05;
        // a_mn = J^0_m J^0_n + (δ_mn - δ^0_m δ^0_n), J^0_m = δ^0_m + 2 eps x^m
        let mut a_terms = Vec::new();
        for m in 0..n {
            for nn in m..n {
                let idx = [m, nn];
                let mut push = |coeff: f64, powers: Vec<u32>| {
                    a_terms.push(TermSpec {
                        coeff,
                        powers,
                        index: Some(idx.to_vec()),
                    });
                };
                let delta = |i: usize, j: usize| if i == j { 1.0 } else { 0.0 };
                // constant part
                let c0 = delta(0, m) * delta(0, nn) + (delta(m, nn) - delta(0, m) * delta(0, nn));
                if c0 != 0.0 {
                    push(c0, vec![0; n]);
                }
                // linear parts 2 eps (x^n δ^0_m + x^m δ^0_n)
                if m == 0 {
                    let mut p = vec![0u32; n];
                    p[nn] += 1;
                    push(2.0 * eps, p);
                }
                if nn == 0 {
                    let mut p = vec![0u32; n];
                    p[m] += 1;
                    push(2.0 * eps, p);
                }
                // quadratic part 4 eps^2 x^m x^n
                let mut p = vec![0u32; n];
                p[m] += 1;
                p[nn] += 1;
                push(4.0 * eps * eps, p);
            }
        }
        let mut b_terms = Vec::new();
        for m in 0..n {
            if m == 0 {
                b_terms.push(TermSpec {
                    coeff: 0.8,
                    powers: vec![0; n],
                    index: Some(vec![0]),
                });
            }
            let mut p = vec![0u32; n];
            p[m] = 1;
            b_terms.push(TermSpec {
                coeff: 0.8 * 2.0 * eps,
                powers: p,
                index: Some(vec![m]),
            });
        }
        Scenario {
            name: "s4".into(),
            dimension: 3,
            signature: SignatureTag::PositiveDefinite,
            fields: FieldsSpec {
                a: FieldSpec::Polynomial { terms: a_terms },
                b: FieldSpec::Polynomial { terms: b_terms },
                g: FieldSpec::Constant {
                    value: serde_json::json!(0.5),
                },
            },
            samples: samples_3d(&[([0.4, -0.3, 0.6], [0.7, 1.1, -0.5])], 60, 104),
            tolerances: BTreeMap::new(),
        }
    }

    /// Indefinite scenario on a flat time-space background.
    pub fn s5() -> Scenario {
        Scenario {
            name: "s5".into(),
            dimension: 4,
            signature: SignatureTag::TimeSpace,
            fields: FieldsSpec {
                a: constant_a(4, &[1.0, -1.0, -1.0, -1.0]),
                b: FieldSpec::Constant {
                    value: serde_json::json!([0.8, 0.0, 0.0, 0.0]),
                },
                g: FieldSpec::Constant {
                    value: serde_json::json!(0.5),
                },
            },
            samples: SamplesSpec {
                explicit: vec![SampleSpec {
                    x: vec![0.0; 4],
                    y: vec![1.0, 0.8, 0.0, 0.0],
                }],
                random: Some(RandomSpec {
                    count: 60,
                    seed: 105,
                    x_box: BoxSpec::Uniform([-1.0, 1.0]),
                    y_box: BoxSpec::PerAxis(vec![
                        [0.5, 1.5],
                        [-1.0, 1.0],
                        [-1.0, 1.0],
                        [-1.0, 1.0],
                    ]),
                }),
            },
            tolerances: BTreeMap::new(),
        }
    }

    /// Varying 1-form and varying charge together.
    pub fn s2_s3_combined() -> Scenario {
        Scenario {
            name: "s2-s3-combined".into(),
            dimension: 3,
            signature: SignatureTag::PositiveDefinite,
            fields: FieldsSpec {
                a: constant_a(3, &[1.0, 1.0, 1.0]),
                b: FieldSpec::Polynomial {
                    terms: vec![
                        term(0.7, &[0, 0, 0], Some(&[0])),
                        term(0.05, &[0, 2, 0], Some(&[0])),
                    ],
                },
                g: FieldSpec::Polynomial {
                    terms: vec![term(0.5, &[0, 0, 0], None), term(0.1, &[1, 0, 0], None)],
                },
            },
            samples: samples_3d(&[([0.2, 0.5, -0.3], [1.1, 0.4, -0.8])], 60, 106),
            tolerances: BTreeMap::new(),
        }
    }

    /// g = 0 variants used by the Riemannian-reduction battery.
    pub fn s1_zero_charge() -> Scenario {
        let mut sc = s1();
        sc.name = "s1-zero-charge".into();
        sc.fields.g = FieldSpec::Constant {
            value: serde_json::json!(0.0),
        };
        sc
    }

    pub fn s2_zero_charge() -> Scenario {
        let mut sc = s2();
        sc.name = "s2-zero-charge".into();
        sc.fields.g = FieldSpec::Constant {
            value: serde_json::json!(0.0),
        };
        sc
    }

    pub fn all() -> Vec<Scenario> {
        vec![
            s1(),
            s2(),
            s3(),
            s4(),
            s5(),
            s2_s3_combined(),
            s1_zero_charge(),
            s2_zero_charge(),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Regenerates the shipped scenario files from the builtins:
    /// `cargo test -p finsleroid write_scenario_files -- --ignored`
    #[test]
    #[ignore]
    fn write_scenario_files() {
        let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
        std::fs::create_dir_all(&dir).unwrap();
        for sc in builtin::all() {
            let path = dir.join(format!("{}.json", sc.name));
            let text = serde_json::to_string_pretty(&sc).unwrap();
            std::fs::write(&path, text + "\n").unwrap();
        }
    }

    #[test]
    fn shipped_files_match_builtins() {
        let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
        for sc in builtin::all() {
            let path = dir.join(format!("{}.json", sc.name));
            let shipped = Scenario::from_path(&path).unwrap();
            let a = shipped.field_set().unwrap();
            let b = sc.field_set().unwrap();
            let x: Vec<f64> = (0..sc.dimension).map(|i| 0.1 + 0.2 * i as f64).collect();
            let pa = a.at(&x).unwrap();
            let pb = b.at(&x).unwrap();
            assert!((&pa.a - &pb.a).abs().max() < 1e-15, "{}", sc.name);
            assert!((&pa.b_cov - &pb.b_cov).abs().max() < 1e-15, "{}", sc.name);
            assert!((pa.charge - pb.charge).abs() < 1e-15, "{}", sc.name);
            assert_eq!(shipped.samples.explicit.len(), sc.samples.explicit.len());
        }
    }

    #[test]
    fn builtin_scenarios_resolve() {
        for sc in builtin::all() {
            let samples = sc.resolve_samples(None).unwrap();
            let want = sc.samples.explicit.len()
                + sc.samples.random.as_ref().map(|r| r.count).unwrap_or(0);
            assert_eq!(samples.len(), want, "{}", sc.name);
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let sc = builtin::s2();
        let a = sc.resolve_samples(None).unwrap();
        let b = sc.resolve_samples(None).unwrap();
        for (s, t) in a.iter().zip(&b) {
            assert_eq!(s.x, t.x);
            assert_eq!(s.y.as_slice(), t.y.as_slice());
        }
        let c = sc.resolve_samples(Some(999)).unwrap();
        assert_ne!(a[1].x, c[1].x);
    }

    #[test]
    fn s4_matches_pullback_construction() {
        let sc = builtin::s4();
        let from_json = sc.field_set().unwrap();
        let base = builtin::s1().field_set().unwrap();
        let pulled = base.pullback_quadratic(0, 0.05).unwrap();
        for x in [[0.0, 0.0, 0.0], [0.4, -0.3, 0.6], [-0.9, 0.2, 0.8]] {
            let p1 = from_json.at(&x).unwrap();
            let p2 = pulled.at(&x).unwrap();
            assert!((&p1.a - &p2.a).abs().max() < 1e-15, "a at {x:?}");
            assert!((&p1.b_cov - &p2.b_cov).abs().max() < 1e-15, "b at {x:?}");
            assert!((p1.c_sq - 0.64).abs() < 1e-14);
        }
    }

    #[test]
    fn out_of_range_constant_norm_is_diagnosed() {
        let mut sc = builtin::s1();
        sc.fields.b = FieldSpec::Constant {
            value: serde_json::json!([1.2, 0.0, 0.0]),
        };
        let err = sc.resolve_samples(None).unwrap_err();
        let msg = err.to_string();
        assert!(
            msg.contains("0 < c < 1"),
            "diagnostic must name the constraint: {msg}"
        );
    }

    #[test]
    fn json_round_trip() {
        for sc in builtin::all() {
            let text = serde_json::to_string_pretty(&sc).unwrap();
            let back: Scenario = serde_json::from_str(&text).unwrap();
            assert_eq!(back.name, sc.name);
            let a = sc.resolve_samples(None).unwrap();
            let b = back.resolve_samples(None).unwrap();
            assert_eq!(a.len(), b.len());
            for (s, t) in a.iter().zip(&b) {
                assert_eq!(s.x, t.x);
            }
        }
    }

    #[test]
    fn sr_samples_live_in_the_admissible_cone() {
        let sc = builtin::s5();
        let fields = sc.field_set().unwrap();
        for s in sc.resolve_samples(None).unwrap() {
            let pf = fields.at(&s.x).unwrap();
            let k = pseudo::eval_pseudo_kernel(&pf, &s.y).unwrap();
            assert!(k.b > 0.0 && k.s_sq > 0.0 && k.q > 0.0);
            assert!(k.b_form > 0.0);
        }
    }
}
