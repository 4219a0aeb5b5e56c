use crate::error::{Error, Result};
use crate::geometry::Keypoint;

/// Decoding, association and loss settings shared by the whole pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// Downsampling factor between image pixels and heatmap cells.
    pub downsample: usize,
    /// Maximum number of heatmap peaks kept per frame.
    pub max_peaks: usize,
    pub score_threshold: f64,
    pub num_classes: usize,
    /// Association gate, as a multiple of the detection's larger side.
    pub gate_scale: f64,
    pub lambda_size: f64,
    pub focal_alpha: f64,
    pub focal_beta: f64,
    pub keypoint: Keypoint,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            downsample: 4,
            max_peaks: 100,
            score_threshold: 0.4,
            num_classes: 1,
            gate_scale: 1.0,
            lambda_size: 0.1,
            focal_alpha: 2.0,
            focal_beta: 4.0,
            keypoint: Keypoint::Top,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.downsample < 1 {
            return Err(Error::invalid("downsample must be >= 1"));
        }
        if self.max_peaks < 1 {
            return Err(Error::invalid("max_peaks must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.score_threshold) {
            return Err(Error::invalid("score_threshold must lie in [0, 1]"));
        }
        if self.num_classes < 1 {
            return Err(Error::invalid("num_classes must be >= 1"));
        }
        // +inf is allowed and disables the gate
        if self.gate_scale.is_nan() || self.gate_scale <= 0.0 {
            return Err(Error::invalid("gate_scale must be positive"));
        }
        if !(self.lambda_size.is_finite() && self.lambda_size > 0.0) {
            return Err(Error::invalid("lambda_size must be positive"));
        }
        if !(self.focal_alpha.is_finite() && self.focal_alpha >= 1.0) {
            return Err(Error::invalid("focal_alpha must be >= 1"));
        }
        if !(self.focal_beta.is_finite() && self.focal_beta >= 0.0) {
            return Err(Error::invalid("focal_beta must be >= 0"));
        }
        Ok(())
    }
}
