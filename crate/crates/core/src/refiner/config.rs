use serde::{Deserialize, Serialize};

use crate::error::{DotError, Result};

/// Architecture hyperparameters of the refiner.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefinerConfig {
    /// Downsampling factor between frames and the coarse grid (4 or 8).
    pub patch: usize,
    /// Refinement iterations `K`.
    pub iterations: usize,
    /// Frame feature dimension `D`.
    pub feature_dim: usize,
    /// Correlation pyramid levels `L`.
    pub levels: usize,
    /// Lookup radius `r`.
    pub radius: usize,
    pub hidden_dim: usize,
    /// Width of the motion features fed to the GRU, flow and mask included.
    pub motion_dim: usize,
    /// Frame encoder widths: stem, then the three residual stages.
    pub encoder_channels: [usize; 4],
    /// Flow+mask branch widths of the motion encoder.
    pub flow_encoder_channels: [usize; 2],
    /// Correlation branch widths of the motion encoder.
    pub corr_encoder_channels: [usize; 2],
    pub decoder_dim: usize,
    pub upsample_dim: usize,
    pub gru_kernel: usize,
    /// Kernel of the first flow+mask encoder convolution.
    pub flow_kernel: usize,
}

impl RefinerConfig {
    /// Full-size architecture.
    pub fn full_size() -> Self {
        RefinerConfig {
            patch: 4,
            iterations: 4,
            feature_dim: 256,
            levels: 4,
            radius: 4,
            hidden_dim: 128,
            motion_dim: 128,
            encoder_channels: [64, 64, 96, 128],
            flow_encoder_channels: [128, 64],
            corr_encoder_channels: [256, 192],
            decoder_dim: 256,
            upsample_dim: 256,
            gru_kernel: 5,
            flow_kernel: 7,
        }
    }

    /// Narrow variant sized for CPU training on 64x64 clips.
    pub fn desk() -> Self {
        RefinerConfig {
            patch: 4,
            iterations: 4,
            feature_dim: 48,
            levels: 4,
            radius: 3,
            hidden_dim: 32,
            motion_dim: 32,
            encoder_channels: [12, 12, 24, 48],
            flow_encoder_channels: [16, 16],
            corr_encoder_channels: [48, 32],
            decoder_dim: 32,
            upsample_dim: 32,
            gru_kernel: 3,
            flow_kernel: 7,
        }
    }

    /// Tiny variant for finite-difference gradient checks.
    pub fn gradient_check() -> Self {
        RefinerConfig {
            patch: 4,
            iterations: 2,
            feature_dim: 32,
            levels: 2,
            radius: 2,
            hidden_dim: 32,
            motion_dim: 16,
            encoder_channels: [8, 8, 12, 16],
            flow_encoder_channels: [8, 8],
            corr_encoder_channels: [16, 8],
            decoder_dim: 8,
            upsample_dim: 8,
            gru_kernel: 3,
            flow_kernel: 3,
        }
    }

    pub fn with_patch(mut self, patch: usize) -> Self {
        self.patch = patch;
        self
    }

    pub fn with_iterations(mut self, iterations: usize) -> Self {
        self.iterations = iterations;
        self
    }

    /// Channels of the correlation features, `L * (2r+1)^2`.
    pub fn corr_channels(&self) -> usize {
        self.levels * (2 * self.radius + 1).pow(2)
    }

    /// Output width of the motion-encoder combination layer.
    pub fn combined_channels(&self) -> usize {
        self.motion_dim - 3
    }

    /// Input channels of the GRU gates: hidden + motion + context.
    pub fn gru_input(&self) -> usize {
        self.hidden_dim + self.motion_dim + self.feature_dim
    }

    /// Stride of the first frame-encoder convolution.
    pub fn stem_stride(&self) -> usize {
        self.patch / 4
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch != 4 && self.patch != 8 {
            return Err(DotError::Config(format!("patch size must be 4 or 8, got {}", self.patch)));
        }
        if self.motion_dim <= 3 {
            return Err(DotError::Config("motion_dim must exceed 3".into()));
        }
        if self.levels == 0 {
            return Err(DotError::Config("need at least one pyramid level".into()));
        }
        if self.gru_kernel.is_multiple_of(2) || self.flow_kernel.is_multiple_of(2) {
            return Err(DotError::Config("kernel sizes must be odd".into()));
        }
        let widths = [
            self.feature_dim,
            self.hidden_dim,
            self.decoder_dim,
            self.upsample_dim,
            self.encoder_channels.iter().product(),
            self.flow_encoder_channels.iter().product(),
            self.corr_encoder_channels.iter().product(),
        ];
        if widths.contains(&0) {
            return Err(DotError::Config("layer widths must be positive".into()));
        }
        Ok(())
    }

    /// Stable identifier of the architecture, stored with checkpoints.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        // FNV-1a, 64 bit
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in json.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        format!("{h:016x}")
    }
}

impl Default for RefinerConfig {
    fn default() -> Self {
        RefinerConfig::desk()
    }
}
