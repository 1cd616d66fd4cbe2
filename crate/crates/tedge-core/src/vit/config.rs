//! Transformer architecture configuration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Architecture hyper-parameters. Images are square (`image_size` per side)
/// and the head dimension is `model_dim / n_heads`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViTConfig {
    pub n_layers: usize,
    pub model_dim: usize,
    pub n_heads: usize,
    /// Hidden linear layers inside each encoder MLP block; the block always
    /// ends with a projection back to `model_dim`.
    pub mlp_layers: usize,
    pub mlp_size: usize,
    pub patch_size: usize,
    pub image_size: usize,
    pub n_classes: usize,
}

impl ViTConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("n_layers", self.n_layers),
            ("model_dim", self.model_dim),
            ("n_heads", self.n_heads),
            ("mlp_layers", self.mlp_layers),
            ("mlp_size", self.mlp_size),
            ("patch_size", self.patch_size),
            ("image_size", self.image_size),
            ("n_classes", self.n_classes),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::InvalidArgument(format!("{name} must be >= 1")));
            }
        }
        if !self.model_dim.is_multiple_of(self.n_heads) {
            return Err(Error::InvalidArgument(format!(
                "model_dim {} not divisible by n_heads {}",
                self.model_dim, self.n_heads
            )));
        }
        if !self.image_size.is_multiple_of(self.patch_size) {
            return Err(Error::InvalidArgument(format!(
                "image_size {} not divisible by patch_size {}",
                self.image_size, self.patch_size
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.model_dim / self.n_heads
    }

    pub fn n_patches(&self) -> usize {
        let grid = self.image_size / self.patch_size;
        grid * grid
    }

    /// Patch tokens plus the class token.
    pub fn seq_len(&self) -> usize {
        self.n_patches() + 1
    }
}
