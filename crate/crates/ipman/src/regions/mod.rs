//! Explicit feasible-set definitions: membership predicates, feasible-sample
//! distributions and infeasible-sample generators.

mod toy_dose;

pub use toy_dose::{toy_dose_feasible, ToyDoseReport, ToyDoseSpec};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix2;
use crate::rng::RandomStream;
use crate::scalar::Real;

/// Axis-aligned box with per-dimension bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisBox<F> {
    pub lower: Vec<F>,
    pub upper: Vec<F>,
}

impl<F: Real> AxisBox<F> {
    pub fn new(lower: Vec<F>, upper: Vec<F>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::shape("AxisBox::new", lower.len(), upper.len()));
        }
        if lower.iter().zip(&upper).any(|(l, u)| l > u) {
            return Err(Error::Config("AxisBox lower bound exceeds upper bound".into()));
        }
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    /// Closed-inequality membership.
    pub fn contains(&self, x: &[F]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (l, u))| v >= l && v <= u)
    }

    /// Shrinks every face inward by `margin`; `None` if any dimension empties.
    pub fn shrink(&self, margin: F) -> Option<Self> {
        let lower: Vec<F> = self.lower.iter().map(|&l| l + margin).collect();
        let upper: Vec<F> = self.upper.iter().map(|&u| u - margin).collect();
        if lower.iter().zip(&upper).any(|(l, u)| l > u) {
            None
        } else {
            Some(Self { lower, upper })
        }
    }

    pub fn inflate(&self, margin: F) -> Self {
        Self {
            lower: self.lower.iter().map(|&l| l - margin).collect(),
            upper: self.upper.iter().map(|&u| u + margin).collect(),
        }
    }

    pub fn volume(&self) -> F {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(&l, &u)| u - l)
            .fold(F::one(), |acc, w| acc * w)
    }

    pub fn sample_uniform(&self, rng: &mut RandomStream) -> Vec<F> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(&l, &u)| rng.uniform(l, u))
            .collect()
    }

    /// Hull of two boxes.
    pub fn hull(&self, other: &Self) -> Self {
        Self {
            lower: self
                .lower
                .iter()
                .zip(&other.lower)
                .map(|(&a, &b)| a.min(b))
                .collect(),
            upper: self
                .upper
                .iter()
                .zip(&other.upper)
                .map(|(&a, &b)| a.max(b))
                .collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub enum RegionKind<F> {
    UnionOfBoxes(Vec<AxisBox<F>>),
    VaRToyDose(ToyDoseSpec<F>),
}

/// Feasible-set description: membership predicate plus bounding box.
/// Immutable after construction.
#[derive(Debug, Clone)]
pub struct Region<F> {
    dimension: usize,
    kind: RegionKind<F>,
    bounding_box: AxisBox<F>,
}

/// Sampler settings for the feasible distribution p_f and the infeasible
/// proposal distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig<F> {
    pub shrink_margin: F,
    pub noise_std: F,
    pub n_feasible: usize,
    pub n_infeasible: usize,
    /// Inflation of the bounding box (per side) for infeasible proposals.
    pub inflate_margin: F,
    /// When true, feasible samples are stratified equally across the
    /// connected components of a union region instead of volume-weighted.
    /// Equal per-component mass keeps small components represented, which
    /// matters when the downstream optimum lies in more than one component.
    #[serde(default)]
    pub stratify_components: bool,
}

impl<F: Real> Default for SamplerConfig<F> {
    fn default() -> Self {
        Self {
            shrink_margin: F::from_f64_c(0.5),
            noise_std: F::from_f64_c(0.25),
            n_feasible: 4000,
            n_infeasible: 4000,
            inflate_margin: F::from_f64_c(2.0),
            stratify_components: false,
        }
    }
}

impl<F: Real> SamplerConfig<F> {
    pub fn validate(&self) -> Result<()> {
        if self.shrink_margin < F::zero() {
            return Err(Error::Config("shrink_margin must be >= 0".into()));
        }
        if self.noise_std < F::zero() {
            return Err(Error::Config("noise_std must be >= 0".into()));
        }
        Ok(())
    }
}

impl<F: Real> Region<F> {
    pub fn union_of_boxes(boxes: Vec<AxisBox<F>>) -> Result<Self> {
        let first = boxes
            .first()
            .ok_or_else(|| Error::Config("union of boxes needs at least one box".into()))?;
        let dimension = first.dim();
        if boxes.iter().any(|b| b.dim() != dimension) {
            return Err(Error::Config("boxes must share a dimension".into()));
        }
        let bounding_box = boxes.iter().skip(1).fold(first.clone(), |acc, b| acc.hull(b));
        Ok(Self {
            dimension,
            kind: RegionKind::UnionOfBoxes(boxes),
            bounding_box,
        })
    }

    /// The 2-D L-shaped set
    /// `{-1<=x1<=17, 9<=x2<=17} ∪ {9<=x1<=17, -1<=x2<=9}`.
    pub fn l_shape() -> Self {
        let c = F::from_f64_c;
        let b1 = AxisBox::new(vec![c(-1.0), c(9.0)], vec![c(17.0), c(17.0)]).unwrap();
        let b2 = AxisBox::new(vec![c(9.0), c(-1.0)], vec![c(17.0), c(9.0)]).unwrap();
        Self::union_of_boxes(vec![b1, b2]).unwrap()
    }

    pub fn toy_dose(spec: ToyDoseSpec<F>) -> Result<Self> {
        spec.validate()?;
        let n = spec.n_voxels;
        let cap = spec.dose_cap();
        let bounding_box = AxisBox::new(vec![F::zero(); n], vec![cap; n])?;
        Ok(Self {
            dimension: n,
            kind: RegionKind::VaRToyDose(spec),
            bounding_box,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn kind(&self) -> &RegionKind<F> {
        &self.kind
    }

    pub fn bounding_box(&self) -> &AxisBox<F> {
        &self.bounding_box
    }

    pub fn boxes(&self) -> Option<&[AxisBox<F>]> {
        match &self.kind {
            RegionKind::UnionOfBoxes(b) => Some(b),
            RegionKind::VaRToyDose(_) => None,
        }
    }

    /// Exact membership (closed inequalities, no noise margin).
    pub fn contains(&self, x: &[F]) -> Result<bool> {
        if x.len() != self.dimension {
            return Err(Error::shape("Region::contains", self.dimension, x.len()));
        }
        Ok(match &self.kind {
            RegionKind::UnionOfBoxes(boxes) => boxes.iter().any(|b| b.contains(x)),
            RegionKind::VaRToyDose(spec) => {
                // Doses live in [0, cap]; outside that range the point is
                // certainly not a plan we consider feasible.
                if !self.bounding_box.contains(x) {
                    false
                } else {
                    toy_dose_feasible(spec, x)?.all()
                }
            }
        })
    }

    /// Draws `cfg.n_feasible` points from p_f: uniform inside the region
    /// shrunk by `shrink_margin`, plus isotropic Gaussian noise.
    pub fn sample_feasible(&self, cfg: &SamplerConfig<F>, rng: &mut RandomStream) -> Result<Matrix2<F>> {
        cfg.validate()?;
        let mut out = Matrix2::zeros(cfg.n_feasible, self.dimension);
        match &self.kind {
            RegionKind::UnionOfBoxes(boxes) => {
                let shrunk: Vec<AxisBox<F>> = boxes
                    .iter()
                    .filter_map(|b| b.shrink(cfg.shrink_margin))
                    .collect();
                if shrunk.is_empty() {
                    return Err(Error::Config(
                        "shrink_margin empties every box of the region".into(),
                    ));
                }
                let volumes: Vec<F> = shrunk.iter().map(AxisBox::volume).collect();
                let total: F = volumes.iter().copied().sum();
                for i in 0..cfg.n_feasible {
                    // box choice (stratified or volume-weighted), then
                    // uniform within the box
                    let chosen = if cfg.stratify_components {
                        rng.index(shrunk.len())
                    } else {
                        let mut t = rng.uniform(F::zero(), total);
                        let mut chosen = shrunk.len() - 1;
                        for (k, &v) in volumes.iter().enumerate() {
                            if t < v {
                                chosen = k;
                                break;
                            }
                            t -= v;
                        }
                        chosen
                    };
                    let mut p = shrunk[chosen].sample_uniform(rng);
                    for v in &mut p {
                        *v += rng.normal(F::zero(), cfg.noise_std);
                    }
                    out.row_mut(i).copy_from_slice(&p);
                }
            }
            RegionKind::VaRToyDose(spec) => {
                for i in 0..cfg.n_feasible {
                    let p = spec.sample_feasible(rng);
                    out.row_mut(i).copy_from_slice(&p);
                }
            }
        }
        Ok(out)
    }

    /// Rejection-samples `cfg.n_infeasible` points with `contains == false`
    /// from the inflated bounding box.
    pub fn sample_infeasible(&self, cfg: &SamplerConfig<F>, rng: &mut RandomStream) -> Result<Matrix2<F>> {
        cfg.validate()?;
        let proposal = self.proposal_box(cfg);
        let mut out = Matrix2::zeros(cfg.n_infeasible, self.dimension);
        let mut accepted = 0usize;
        let mut proposals = 0usize;
        while accepted < cfg.n_infeasible {
            let p = proposal.sample_uniform(rng);
            proposals += 1;
            if !self.contains(&p)? {
                out.row_mut(accepted).copy_from_slice(&p);
                accepted += 1;
            }
            if proposals >= 100_000 && (accepted as f64) < 0.01 * proposals as f64 {
                return Err(Error::Config(format!(
                    "infeasible rejection sampler acceptance rate below 1% ({accepted}/{proposals})"
                )));
            }
        }
        Ok(out)
    }

    /// Proposal box for infeasible sampling: bounding box inflated by
    /// `inflate_margin` per side, floored at zero for dose regions.
    pub fn proposal_box(&self, cfg: &SamplerConfig<F>) -> AxisBox<F> {
        let inflated = self.bounding_box.inflate(cfg.inflate_margin);
        match &self.kind {
            RegionKind::UnionOfBoxes(_) => inflated,
            RegionKind::VaRToyDose(_) => AxisBox {
                lower: inflated.lower.iter().map(|&l| l.max(F::zero())).collect(),
                upper: inflated.upper,
            },
        }
    }
}
