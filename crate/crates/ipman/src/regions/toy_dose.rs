//! Low-dimensional dose-planning analogue: a vector of voxel doses with
//! VaR and max constraints relative to the prescription P.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantile::order_statistic;
use crate::rng::RandomStream;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyDoseSpec<F> {
    pub n_voxels: usize,
    pub tumor_idx: Vec<usize>,
    pub urethra_idx: Vec<usize>,
    pub bladder_idx: Vec<usize>,
    /// Prescription dose P (Gy).
    pub prescription: F,
    /// Constraint (1): ascending `tumor_low_alpha`-quantile of tumor dose
    /// must be at least `tumor_low_factor * P` (the D95-style coverage rule).
    pub tumor_low_alpha: f64,
    pub tumor_low_factor: F,
    /// Constraint (2): ascending `tumor_high_alpha`-quantile of tumor dose
    /// must be at most `tumor_high_factor * P`.
    pub tumor_high_alpha: f64,
    pub tumor_high_factor: F,
    /// Constraint (3): max urethra dose <= `urethra_max_factor * P`.
    pub urethra_max_factor: F,
    /// Constraint (4): max bladder dose <= `bladder_max_factor * P`.
    pub bladder_max_factor: F,
}

impl<F: Real> ToyDoseSpec<F> {
    /// 16-voxel default: 8 tumor, 2 urethra, 3 bladder, 3 unlabeled, P = 60.
    pub fn default_16() -> Self {
        let c = F::from_f64_c;
        Self {
            n_voxels: 16,
            tumor_idx: (0..8).collect(),
            urethra_idx: vec![8, 9],
            bladder_idx: vec![10, 11, 12],
            prescription: c(60.0),
            tumor_low_alpha: 0.05,
            tumor_low_factor: c(0.9),
            tumor_high_alpha: 0.99,
            tumor_high_factor: c(1.2),
            urethra_max_factor: c(0.9),
            bladder_max_factor: c(1.1),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.prescription <= F::zero() {
            return Err(Error::Config("prescription P must be positive".into()));
        }
        let mut seen = HashSet::new();
        for &i in self
            .tumor_idx
            .iter()
            .chain(&self.urethra_idx)
            .chain(&self.bladder_idx)
        {
            if i >= self.n_voxels {
                return Err(Error::Config(format!("voxel index {i} out of range")));
            }
            if !seen.insert(i) {
                return Err(Error::Config(format!("voxel index {i} appears in two structures")));
            }
        }
        if self.tumor_idx.is_empty() {
            return Err(Error::Config("tumor index set is empty".into()));
        }
        Ok(())
    }

    /// Upper dose bound used for the bounding box and proposal sampling.
    pub fn dose_cap(&self) -> F {
        self.tumor_high_factor * self.prescription
    }

    /// Unlabeled (healthy, unconstrained) voxel indices.
    pub fn other_idx(&self) -> Vec<usize> {
        let labeled: HashSet<usize> = self
            .tumor_idx
            .iter()
            .chain(&self.urethra_idx)
            .chain(&self.bladder_idx)
            .copied()
            .collect();
        (0..self.n_voxels).filter(|i| !labeled.contains(i)).collect()
    }

    /// Prescription vector x̂: P on tumor voxels, 0 elsewhere.
    pub fn prescription_vector(&self) -> Vec<F> {
        let mut x = vec![F::zero(); self.n_voxels];
        for &i in &self.tumor_idx {
            x[i] = self.prescription;
        }
        x
    }

    /// One draw from the feasible-plan distribution: tumor doses uniform in
    /// [low·P, high·P], organ doses uniform below their caps, unlabeled
    /// uniform in [0, cap], rejected on the full constraint report.
    pub fn sample_feasible(&self, rng: &mut RandomStream) -> Vec<F> {
        let p = self.prescription;
        loop {
            let mut x = vec![F::zero(); self.n_voxels];
            for &i in &self.tumor_idx {
                x[i] = rng.uniform(self.tumor_low_factor * p, self.tumor_high_factor * p);
            }
            for &i in &self.urethra_idx {
                x[i] = rng.uniform(F::zero(), self.urethra_max_factor * p);
            }
            for &i in &self.bladder_idx {
                x[i] = rng.uniform(F::zero(), self.bladder_max_factor * p);
            }
            for i in self.other_idx() {
                x[i] = rng.uniform(F::zero(), self.dose_cap());
            }
            if toy_dose_feasible(self, &x).map(|r| r.all()).unwrap_or(false) {
                return x;
            }
        }
    }
}

/// Per-constraint flags for a candidate dose vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToyDoseReport {
    /// (1) low tumor quantile >= factor·P (coverage).
    pub tumor_coverage: bool,
    /// (2) high tumor quantile <= factor·P (hot spots).
    pub tumor_hotspot: bool,
    /// (3) max urethra dose <= factor·P.
    pub urethra_max: bool,
    /// (4) max bladder dose <= factor·P.
    pub bladder_max: bool,
}

impl ToyDoseReport {
    pub fn all(&self) -> bool {
        self.tumor_coverage && self.tumor_hotspot && self.urethra_max && self.bladder_max
    }
}

/// Evaluates constraints (1)-(4) for `x`. Errors on negative doses or a
/// length mismatch.
pub fn toy_dose_feasible<F: Real>(spec: &ToyDoseSpec<F>, x: &[F]) -> Result<ToyDoseReport> {
    if x.len() != spec.n_voxels {
        return Err(Error::shape("toy_dose_feasible", spec.n_voxels, x.len()));
    }
    if x.iter().any(|v| *v < F::zero()) {
        return Err(Error::Domain("negative dose entry".into()));
    }
    let p = spec.prescription;
    let gather = |idx: &[usize]| idx.iter().map(|&i| x[i]).collect::<Vec<F>>();
    let tumor = gather(&spec.tumor_idx);
    let tumor_coverage =
        order_statistic(&tumor, spec.tumor_low_alpha) >= spec.tumor_low_factor * p;
    let tumor_hotspot =
        order_statistic(&tumor, spec.tumor_high_alpha) <= spec.tumor_high_factor * p;
    let max_of = |idx: &[usize]| {
        idx.iter()
            .map(|&i| x[i])
            .fold(F::zero(), |a, b| a.max(b))
    };
    let urethra_max =
        spec.urethra_idx.is_empty() || max_of(&spec.urethra_idx) <= spec.urethra_max_factor * p;
    let bladder_max =
        spec.bladder_idx.is_empty() || max_of(&spec.bladder_idx) <= spec.bladder_max_factor * p;
    Ok(ToyDoseReport {
        tumor_coverage,
        tumor_hotspot,
        urethra_max,
        bladder_max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prescription_everywhere_on_tumor_is_feasible() {
        let spec = ToyDoseSpec::<f64>::default_16();
        let x = spec.prescription_vector();
        let r = toy_dose_feasible(&spec, &x).unwrap();
        assert!(r.all(), "{r:?}");
    }

    #[test]
    fn zero_plan_fails_only_coverage() {
        let spec = ToyDoseSpec::<f64>::default_16();
        let x = vec![0.0; 16];
        let r = toy_dose_feasible(&spec, &x).unwrap();
        assert!(!r.tumor_coverage);
        assert!(r.tumor_hotspot && r.urethra_max && r.bladder_max);
    }

    #[test]
    fn single_hot_tumor_voxel_violates_hotspot_constraint() {
        let spec = ToyDoseSpec::<f64>::default_16();
        let mut x = spec.prescription_vector();
        // tumor has 8 voxels: the 0.99-quantile is the 8th ascending value,
        // i.e. the max, so one voxel at 1.5P breaks constraint (2)
        x[3] = 1.5 * spec.prescription;
        let r = toy_dose_feasible(&spec, &x).unwrap();
        assert!(!r.tumor_hotspot);
        assert!(r.tumor_coverage);
    }

    #[test]
    fn negative_dose_is_domain_error() {
        let spec = ToyDoseSpec::<f64>::default_16();
        let mut x = spec.prescription_vector();
        x[0] = -1.0;
        assert!(matches!(
            toy_dose_feasible(&spec, &x),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn overlapping_index_sets_rejected() {
        let mut spec = ToyDoseSpec::<f64>::default_16();
        spec.urethra_idx = vec![0];
        assert!(spec.validate().is_err());
    }

    #[test]
    fn feasible_sampler_respects_report() {
        let spec = ToyDoseSpec::<f64>::default_16();
        let mut rng = RandomStream::new(2);
        for _ in 0..200 {
            let x = spec.sample_feasible(&mut rng);
            assert!(toy_dose_feasible(&spec, &x).unwrap().all());
        }
    }
}
