//! Objective functions with analytic gradients, plus their known optimal
//! sets over the L-shaped feasible region.

use crate::error::{Error, Result};
use crate::numdiff::{central_diff_gradient, max_relative_error};
use crate::regions::{AxisBox, Region, ToyDoseSpec};
use crate::rng::RandomStream;
use crate::scalar::Real;

#[derive(Debug, Clone)]
pub enum OptimalSetKind<F> {
    Points(Vec<Vec<F>>),
    Segment { a: Vec<F>, b: Vec<F> },
}

/// Ground-truth argmin description, verified against the objective at
/// construction time.
#[derive(Debug, Clone)]
pub struct OptimalSet<F> {
    pub kind: OptimalSetKind<F>,
    pub optimal_value: F,
}

impl<F: Real> OptimalSet<F> {
    /// Checks that each represented point is feasible and attains
    /// `optimal_value` under `eval` (to 1e-9).
    fn checked(
        kind: OptimalSetKind<F>,
        optimal_value: F,
        region: &Region<F>,
        eval: impl Fn(&[F]) -> F,
    ) -> Result<Self> {
        let tol = F::from_f64_c(1e-9);
        let points: Vec<Vec<F>> = match &kind {
            OptimalSetKind::Points(p) => p.clone(),
            OptimalSetKind::Segment { a, b } => vec![a.clone(), b.clone()],
        };
        for p in &points {
            if !region.contains(p)? {
                return Err(Error::Config("optimal-set point is infeasible".into()));
            }
            if (eval(p) - optimal_value).abs() > tol {
                return Err(Error::Config(format!(
                    "optimal-set point does not attain the optimal value: {} vs {}",
                    eval(p),
                    optimal_value
                )));
            }
        }
        Ok(Self { kind, optimal_value })
    }

    /// Unchecked construction from oracle output (grid-resolution ground
    /// truth; the near-optimal points do not attain the value exactly).
    pub fn from_oracle(points: Vec<Vec<F>>, optimal_value: F) -> Self {
        Self {
            kind: OptimalSetKind::Points(points),
            optimal_value,
        }
    }
}

#[derive(Debug, Clone)]
enum ObjectiveKind<F> {
    /// f(x) = x1
    Linear,
    /// f(x) = (x1-5)^2 + (x2-11)^2
    Quadratic,
    /// f(x) = x1 x2 - 4 x1 - 4 x2
    Bilinear,
    /// f(x) = (3.5 - x1)^2 + 100 (x2 - x1^2)^2
    Rosenbrock,
    /// f(x) = Σ c_i x_i + ||x - x̂||₂
    ToyDose { penalties: Vec<F>, target: Vec<F> },
    /// f ≡ 0 (barrier-only diagnostics)
    Zero,
    /// f(x) = Σ c_i x_i with user-supplied coefficients
    CustomLinear { coeffs: Vec<F> },
    /// f(x) = ||x - center||² with a user-supplied center
    CustomQuadratic { center: Vec<F> },
}

#[derive(Debug, Clone)]
pub struct Objective<F> {
    pub name: String,
    pub dimension: usize,
    kind: ObjectiveKind<F>,
    pub known_optimal_set: Option<OptimalSet<F>>,
}

impl<F: Real> Objective<F> {
    pub fn eval(&self, x: &[F]) -> F {
        let c = F::from_f64_c;
        match &self.kind {
            ObjectiveKind::Linear => x[0],
            ObjectiveKind::Quadratic => {
                let dx = x[0] - c(5.0);
                let dy = x[1] - c(11.0);
                dx * dx + dy * dy
            }
            ObjectiveKind::Bilinear => x[0] * x[1] - c(4.0) * x[0] - c(4.0) * x[1],
            ObjectiveKind::Rosenbrock => {
                let a = c(3.5) - x[0];
                let b = x[1] - x[0] * x[0];
                a * a + c(100.0) * b * b
            }
            ObjectiveKind::ToyDose { penalties, target } => {
                let lin: F = penalties.iter().zip(x).map(|(&ci, &xi)| ci * xi).sum();
                let dist: F = target
                    .iter()
                    .zip(x)
                    .map(|(&t, &xi)| (xi - t) * (xi - t))
                    .sum::<F>()
                    .sqrt();
                lin + dist
            }
            ObjectiveKind::Zero => F::zero(),
            ObjectiveKind::CustomLinear { coeffs } => {
                coeffs.iter().zip(x).map(|(&c, &xi)| c * xi).sum()
            }
            ObjectiveKind::CustomQuadratic { center } => center
                .iter()
                .zip(x)
                .map(|(&c, &xi)| (xi - c) * (xi - c))
                .sum(),
        }
    }

    pub fn grad(&self, x: &[F]) -> Vec<F> {
        let c = F::from_f64_c;
        match &self.kind {
            ObjectiveKind::Linear => vec![F::one(), F::zero()],
            ObjectiveKind::Quadratic => vec![
                c(2.0) * (x[0] - c(5.0)),
                c(2.0) * (x[1] - c(11.0)),
            ],
            ObjectiveKind::Bilinear => vec![x[1] - c(4.0), x[0] - c(4.0)],
            ObjectiveKind::Rosenbrock => {
                let b = x[1] - x[0] * x[0];
                vec![
                    -c(2.0) * (c(3.5) - x[0]) - c(400.0) * x[0] * b,
                    c(200.0) * b,
                ]
            }
            ObjectiveKind::ToyDose { penalties, target } => {
                let dist: F = target
                    .iter()
                    .zip(x)
                    .map(|(&t, &xi)| (xi - t) * (xi - t))
                    .sum::<F>()
                    .sqrt();
                penalties
                    .iter()
                    .zip(x.iter().zip(target))
                    .map(|(&ci, (&xi, &t))| {
                        // subgradient 0 at the kink x = x̂
                        if dist == F::zero() {
                            ci
                        } else {
                            ci + (xi - t) / dist
                        }
                    })
                    .collect()
            }
            ObjectiveKind::Zero => vec![F::zero(); x.len()],
            ObjectiveKind::CustomLinear { coeffs } => coeffs.clone(),
            ObjectiveKind::CustomQuadratic { center } => center
                .iter()
                .zip(x)
                .map(|(&ci, &xi)| c(2.0) * (xi - ci))
                .collect(),
        }
    }

    pub fn optimal_value(&self) -> Option<F> {
        self.known_optimal_set.as_ref().map(|s| s.optimal_value)
    }
}

fn point2<F: Real>(a: f64, b: f64) -> Vec<F> {
    vec![F::from_f64_c(a), F::from_f64_c(b)]
}

pub fn make_linear<F: Real>() -> Objective<F> {
    let kind = ObjectiveKind::Linear;
    let obj = Objective {
        name: "linear".into(),
        dimension: 2,
        kind,
        known_optimal_set: None,
    };
    let set = OptimalSet::checked(
        OptimalSetKind::Segment {
            a: point2(-1.0, 9.0),
            b: point2(-1.0, 17.0),
        },
        F::from_f64_c(-1.0),
        &Region::l_shape(),
        |x| obj.eval(x),
    )
    .expect("linear optimal set");
    Objective {
        known_optimal_set: Some(set),
        ..obj
    }
}

pub fn make_quadratic<F: Real>() -> Objective<F> {
    let obj = Objective {
        name: "quadratic".into(),
        dimension: 2,
        kind: ObjectiveKind::Quadratic,
        known_optimal_set: None,
    };
    let set = OptimalSet::checked(
        OptimalSetKind::Points(vec![point2(5.0, 11.0)]),
        F::zero(),
        &Region::l_shape(),
        |x| obj.eval(x),
    )
    .expect("quadratic optimal set");
    Objective {
        known_optimal_set: Some(set),
        ..obj
    }
}

pub fn make_bilinear<F: Real>() -> Objective<F> {
    let obj = Objective {
        name: "bilinear".into(),
        dimension: 2,
        kind: ObjectiveKind::Bilinear,
        known_optimal_set: None,
    };
    let set = OptimalSet::checked(
        OptimalSetKind::Points(vec![point2(-1.0, 17.0), point2(17.0, -1.0)]),
        F::from_f64_c(-81.0),
        &Region::l_shape(),
        |x| obj.eval(x),
    )
    .expect("bilinear optimal set");
    Objective {
        known_optimal_set: Some(set),
        ..obj
    }
}

pub fn make_rosenbrock<F: Real>() -> Objective<F> {
    let obj = Objective {
        name: "rosenbrock".into(),
        dimension: 2,
        kind: ObjectiveKind::Rosenbrock,
        known_optimal_set: None,
    };
    let set = OptimalSet::checked(
        OptimalSetKind::Points(vec![point2(3.5, 12.25)]),
        F::zero(),
        &Region::l_shape(),
        |x| obj.eval(x),
    )
    .expect("rosenbrock optimal set");
    Objective {
        known_optimal_set: Some(set),
        ..obj
    }
}

/// Default excess-dose penalties: 1.0 on urethra/bladder, 0.25 on unlabeled
/// healthy voxels, 0 on tumor.
pub fn toy_dose_default_penalties<F: Real>(spec: &ToyDoseSpec<F>) -> Vec<F> {
    let mut c = vec![F::from_f64_c(0.25); spec.n_voxels];
    for &i in &spec.tumor_idx {
        c[i] = F::zero();
    }
    for &i in spec.urethra_idx.iter().chain(&spec.bladder_idx) {
        c[i] = F::one();
    }
    c
}

/// Dose objective `Σ c_i x_i + ||x - x̂||₂` with x̂ the prescription vector.
pub fn make_toy_dose<F: Real>(
    spec: &ToyDoseSpec<F>,
    penalties: Vec<F>,
    target: Vec<F>,
) -> Result<Objective<F>> {
    if penalties.len() != spec.n_voxels || target.len() != spec.n_voxels {
        return Err(Error::shape(
            "make_toy_dose",
            spec.n_voxels,
            format!("c {}, x̂ {}", penalties.len(), target.len()),
        ));
    }
    for &i in &spec.tumor_idx {
        if penalties[i] != F::zero() {
            return Err(Error::Config("penalty must be 0 on tumor voxels".into()));
        }
        if target[i] != spec.prescription {
            return Err(Error::Config("target must equal P on tumor voxels".into()));
        }
    }
    if penalties.iter().any(|&c| c < F::zero()) {
        return Err(Error::Config("penalties must be nonnegative".into()));
    }
    Ok(Objective {
        name: "toy_dose".into(),
        dimension: spec.n_voxels,
        kind: ObjectiveKind::ToyDose { penalties, target },
        known_optimal_set: None,
    })
}

/// Linear objective with custom coefficients (no known optimal set).
pub fn make_custom_linear<F: Real>(coeffs: Vec<F>) -> Objective<F> {
    Objective {
        name: "linear(custom)".into(),
        dimension: coeffs.len(),
        kind: ObjectiveKind::CustomLinear { coeffs },
        known_optimal_set: None,
    }
}

/// Quadratic bowl centered at `center` (no known optimal set).
pub fn make_custom_quadratic<F: Real>(center: Vec<F>) -> Objective<F> {
    Objective {
        name: "quadratic(custom)".into(),
        dimension: center.len(),
        kind: ObjectiveKind::CustomQuadratic { center },
        known_optimal_set: None,
    }
}

/// Identically zero objective, used for barrier-only diagnostics.
pub fn make_zero<F: Real>(dimension: usize) -> Objective<F> {
    Objective {
        name: "zero".into(),
        dimension,
        kind: ObjectiveKind::Zero,
        known_optimal_set: None,
    }
}

pub fn make_by_name<F: Real>(name: &str) -> Result<Objective<F>> {
    match name {
        "linear" => Ok(make_linear()),
        "quadratic" => Ok(make_quadratic()),
        "bilinear" => Ok(make_bilinear()),
        "rosenbrock" => Ok(make_rosenbrock()),
        other => Err(Error::Config(format!("unknown objective '{other}'"))),
    }
}

/// Compares the analytic gradient to central finite differences at random
/// points in `domain`; returns the max relative error over `n_trials`.
pub fn grad_check<F: Real>(
    obj: &Objective<F>,
    domain: &AxisBox<F>,
    n_trials: usize,
    step: f64,
    rng: &mut RandomStream,
) -> f64 {
    let mut worst = 0.0f64;
    for _ in 0..n_trials.max(1) {
        let x = domain.sample_uniform(rng);
        let analytic = obj.grad(&x);
        let f = |p: &[F]| obj.eval(p);
        let numeric = central_diff_gradient(&f, &x, step);
        worst = worst.max(max_relative_error(&analytic, &numeric, 1e-6));
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit_box2() -> AxisBox<f64> {
        AxisBox::new(vec![-1.0, -1.0], vec![17.0, 17.0]).unwrap()
    }

    #[test]
    fn table_values() {
        assert_eq!(make_quadratic::<f64>().eval(&[5.0, 11.0]), 0.0);
        assert_eq!(make_bilinear::<f64>().eval(&[-1.0, 17.0]), -81.0);
        assert_eq!(make_bilinear::<f64>().eval(&[17.0, -1.0]), -81.0);
        assert_eq!(make_rosenbrock::<f64>().eval(&[3.5, 12.25]), 0.0);
        assert_eq!(make_linear::<f64>().eval(&[-1.0, 12.0]), -1.0);
    }

    #[test]
    fn bilinear_optimal_set_has_both_corners() {
        let obj = make_bilinear::<f64>();
        let set = obj.known_optimal_set.unwrap();
        match set.kind {
            OptimalSetKind::Points(p) => {
                assert_eq!(p, vec![vec![-1.0, 17.0], vec![17.0, -1.0]]);
            }
            _ => panic!("expected point set"),
        }
        assert_eq!(set.optimal_value, -81.0);
    }

    #[test]
    fn linear_gradient_is_constant() {
        let obj = make_linear::<f64>();
        let mut rng = RandomStream::new(0);
        let err = grad_check(&obj, &unit_box2(), 20, 1e-5, &mut rng);
        assert!(err <= 1e-10, "err = {err}");
    }

    #[test]
    fn quadratic_gradient_vanishes_at_vertex() {
        let obj = make_quadratic::<f64>();
        assert_eq!(obj.grad(&[5.0, 11.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn rosenbrock_gradient_matches_finite_differences() {
        let obj = make_rosenbrock::<f64>();
        let mut rng = RandomStream::new(1);
        let err = grad_check(&obj, &unit_box2(), 50, 1e-5, &mut rng);
        assert!(err <= 1e-5, "err = {err}");
    }

    #[test]
    fn toy_dose_values_and_gradient() {
        let spec = ToyDoseSpec::<f64>::default_16();
        let c = toy_dose_default_penalties(&spec);
        let target = spec.prescription_vector();
        let obj = make_toy_dose(&spec, c, target.clone()).unwrap();
        // x = x̂: linear part vanishes on tumor, organs are 0 in x̂
        assert_eq!(obj.eval(&target), 0.0);
        // x = 0: ||x̂||₂ = P sqrt(|tumor|)
        let zero = vec![0.0; 16];
        assert_relative_eq!(
            obj.eval(&zero),
            spec.prescription * (spec.tumor_idx.len() as f64).sqrt(),
            max_relative = 1e-12
        );
        let mut rng = RandomStream::new(3);
        let domain = AxisBox::new(vec![1.0; 16], vec![70.0; 16]).unwrap();
        let err = grad_check(&obj, &domain, 50, 1e-5, &mut rng);
        assert!(err <= 1e-5, "err = {err}");
    }

    #[test]
    fn toy_dose_rejects_bad_penalties() {
        let spec = ToyDoseSpec::<f64>::default_16();
        let mut c = toy_dose_default_penalties(&spec);
        c[0] = 0.5; // tumor voxel
        assert!(make_toy_dose(&spec, c, spec.prescription_vector()).is_err());
    }
}
