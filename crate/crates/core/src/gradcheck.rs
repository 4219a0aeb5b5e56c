//! Central finite-difference verification of analytic loss gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::losses::{focal_loss, masked_l1_loss, Supervision};

/// Scalar function of a flat parameter vector with an analytic gradient.
pub trait Objective {
    fn dim(&self) -> usize;

    /// Value and gradient at `x`.
    fn evaluate(&self, x: &[f64]) -> Result<(f64, Vec<f64>)>;

    /// False if a kink or singularity is close enough to `x[coord]` that a
    /// central difference with `step` cannot be trusted.
    fn is_smooth_at(&self, _x: &[f64], _coord: usize, _step: f64) -> bool {
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    pub step: f64,
    pub samples: usize,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            step: 1e-4,
            samples: 128,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Coordinate with the largest error, if any was checked.
    pub worst_coord: Option<usize>,
    pub checked: usize,
    /// Coordinates excluded by [`Objective::is_smooth_at`].
    pub skipped_kinks: usize,
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Compares the analytic gradient with `(f(x + h) - f(x - h)) / 2h` on up to
/// `cfg.samples` randomly chosen smooth coordinates (all of them when there
/// are fewer).
pub fn finite_difference_check<O: Objective + ?Sized>(
    objective: &O,
    x: &[f64],
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport> {
    if !(cfg.step > 0.0 && cfg.step <= 1e-2) {
        return Err(Error::invalid(format!(
            "finite-difference step must lie in (0, 1e-2], got {}",
            cfg.step
        )));
    }
    if x.len() != objective.dim() {
        return Err(Error::dims(format!(
            "objective expects {} parameters, got {}",
            objective.dim(),
            x.len()
        )));
    }
    let smooth: Vec<usize> = (0..x.len())
        .filter(|&i| objective.is_smooth_at(x, i, cfg.step))
        .collect();
    let skipped_kinks = x.len() - smooth.len();
    let coords: Vec<usize> = if smooth.len() <= cfg.samples {
        smooth
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut picked: Vec<usize> = sample(&mut rng, smooth.len(), cfg.samples)
            .into_iter()
            .map(|k| smooth[k])
            .collect();
        picked.sort_unstable();
        picked
    };

    let (_, analytic) = objective.evaluate(x)?;
    let mut probe = x.to_vec();
    let mut worst = (0.0, None);
    for &i in &coords {
        probe[i] = x[i] + cfg.step;
        let (up, _) = objective.evaluate(&probe)?;
        probe[i] = x[i] - cfg.step;
        let (down, _) = objective.evaluate(&probe)?;
        probe[i] = x[i];
        let numeric = (up - down) / (2.0 * cfg.step);
        let err = relative_error(analytic[i], numeric);
        if worst.1.is_none() || err > worst.0 {
            worst = (err, Some(i));
        }
    }
    Ok(GradCheckReport {
        max_relative_error: worst.0,
        worst_coord: worst.1,
        checked: coords.len(),
        skipped_kinks,
    })
}

/// Steps kept between a focal-loss coordinate and the ends of `(0, 1)`.
pub const SINGULARITY_MARGIN: f64 = 100.0;

/// Focal loss as a function of the flattened prediction grid.
pub struct FocalObjective<'a> {
    pub gt: &'a Grid,
    pub alpha: f64,
    pub beta: f64,
    pub n: usize,
}

impl Objective for FocalObjective<'_> {
    fn dim(&self) -> usize {
        self.gt.values().len()
    }

    fn evaluate(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let pred = self.gt.with_values(x.to_vec())?;
        let out = focal_loss(&pred, self.gt, self.alpha, self.beta, self.n)?;
        Ok((out.value, out.grad.into_values()))
    }

    fn is_smooth_at(&self, x: &[f64], coord: usize, step: f64) -> bool {
        // The log terms blow up at 0 and 1 (where the clamp also sits). At
        // distance d from them the central difference is off by about
        // step^2 / (3 d^2) relative, so keep d >= SINGULARITY_MARGIN steps.
        let v = x[coord];
        let margin = SINGULARITY_MARGIN * step;
        v > margin && v < 1.0 - margin
    }
}

/// Masked L1 loss as a function of a flattened two-channel map.
pub struct MaskedL1Objective<'a> {
    pub height: usize,
    pub width: usize,
    pub targets: &'a [Supervision],
    pub n: usize,
}

impl MaskedL1Objective<'_> {
    fn coord_of(&self, s: &Supervision, ch: usize) -> usize {
        (s.cell.row * self.width + s.cell.col) * 2 + ch
    }
}

impl Objective for MaskedL1Objective<'_> {
    fn dim(&self) -> usize {
        self.height * self.width * 2
    }

    fn evaluate(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let pred = Grid::from_values(self.height, self.width, 2, x.to_vec())?;
        let out = masked_l1_loss(&pred, self.targets, self.n)?;
        Ok((out.value, out.grad.into_values()))
    }

    fn is_smooth_at(&self, x: &[f64], coord: usize, step: f64) -> bool {
        self.targets.iter().all(|s| {
            (0..2).all(|ch| self.coord_of(s, ch) != coord || (x[coord] - s.target[ch]).abs() > step)
        })
    }
}
