//! Vision-transformer parameters, forward pass and analytic backward pass.
//!
//! The forward pass follows the standard pre-norm encoder: patch + position
//! embeddings with a prepended class token, `L` layers of multi-head
//! self-attention and an MLP block (each behind layer norm, with residual
//! connections), and a layer-normed linear head on the class token.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::vit::config::ViTConfig;
use crate::vit::ops::{
    gelu, gelu_prime, layer_norm_backward, layer_norm_forward, patchify, softmax_rows,
    softmax_rows_backward, LnCache,
};
use crate::vit::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNormParams {
    pub gain: Tensor, // 1 x d
    pub bias: Tensor, // 1 x d
}

impl LayerNormParams {
    fn new(dim: usize, gain_value: f64) -> Self {
        let mut gain = Tensor::zeros(1, dim);
        gain.data_mut().fill(gain_value);
        LayerNormParams {
            gain,
            bias: Tensor::zeros(1, dim),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Tensor, // in x out
    pub bias: Tensor,   // 1 x out
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayer {
    pub norm1: LayerNormParams,
    /// One d x 3*head_dim projection per head.
    pub qkv: Vec<Tensor>,
    /// (h * head_dim) x d output projection.
    pub msa_proj: Tensor,
    pub norm2: LayerNormParams,
    /// `mlp_layers` hidden linears followed by the projection back to d.
    pub mlp: Vec<Linear>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViTModel {
    pub config: ViTConfig,
    /// Patch projection E: S^2 x d.
    pub patch_proj: Tensor,
    /// Position embeddings E_pos: (N+1) x d.
    pub pos_embed: Tensor,
    /// Class token: 1 x d.
    pub class_token: Tensor,
    pub layers: Vec<EncoderLayer>,
    pub head_norm: LayerNormParams,
    pub head: Linear, // d x n_classes
}

impl ViTModel {
    /// All-zero parameters (also the template for gradients, Adam moments and
    /// checkpoint shapes). Layer-norm gains are zero here too; use
    /// [`ViTModel::init`] for a trainable model.
    pub fn zeros(config: &ViTConfig) -> Result<Self> {
        config.validate()?;
        let d = config.model_dim;
        let dh = config.head_dim();
        let s2 = config.patch_size * config.patch_size;
        let mlp_dims = mlp_dims(config);
        let layers = (0..config.n_layers)
            .map(|_| EncoderLayer {
                norm1: LayerNormParams::new(d, 0.0),
                qkv: (0..config.n_heads)
                    .map(|_| Tensor::zeros(d, 3 * dh))
                    .collect(),
                msa_proj: Tensor::zeros(config.n_heads * dh, d),
                norm2: LayerNormParams::new(d, 0.0),
                mlp: mlp_dims
                    .iter()
                    .map(|&(i, o)| Linear {
                        weight: Tensor::zeros(i, o),
                        bias: Tensor::zeros(1, o),
                    })
                    .collect(),
            })
            .collect();
        Ok(ViTModel {
            config: *config,
            patch_proj: Tensor::zeros(s2, d),
            pos_embed: Tensor::zeros(config.seq_len(), d),
            class_token: Tensor::zeros(1, d),
            layers,
            head_norm: LayerNormParams::new(d, 0.0),
            head: Linear {
                weight: Tensor::zeros(d, config.n_classes),
                bias: Tensor::zeros(1, config.n_classes),
            },
        })
    }

    /// Random initialization: truncated normal (std 0.02, clipped at 2 std)
    /// for projections and embeddings, ones for layer-norm gains, zeros for
    /// biases.
    pub fn init(config: &ViTConfig, seed: u64) -> Result<Self> {
        let mut model = Self::zeros(config)?;
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 0.02).expect("valid normal");
        let mut fill = |t: &mut Tensor| {
            for v in t.data_mut() {
                *v = loop {
                    let x: f64 = normal.sample(&mut rng);
                    if x.abs() <= 0.04 {
                        break x;
                    }
                };
            }
        };
        fill(&mut model.patch_proj);
        fill(&mut model.pos_embed);
        fill(&mut model.class_token);
        for layer in &mut model.layers {
            layer.norm1.gain.data_mut().fill(1.0);
            layer.norm2.gain.data_mut().fill(1.0);
            for w in &mut layer.qkv {
                fill(w);
            }
            fill(&mut layer.msa_proj);
            for lin in &mut layer.mlp {
                fill(&mut lin.weight);
            }
        }
        model.head_norm.gain.data_mut().fill(1.0);
        fill(&mut model.head.weight);
        Ok(model)
    }

    /// Parameter tensors in declaration order (the checkpoint layout).
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out = vec![&self.patch_proj, &self.pos_embed, &self.class_token];
        for layer in &self.layers {
            out.push(&layer.norm1.gain);
            out.push(&layer.norm1.bias);
            out.extend(layer.qkv.iter());
            out.push(&layer.msa_proj);
            out.push(&layer.norm2.gain);
            out.push(&layer.norm2.bias);
            for lin in &layer.mlp {
                out.push(&lin.weight);
                out.push(&lin.bias);
            }
        }
        out.push(&self.head_norm.gain);
        out.push(&self.head_norm.bias);
        out.push(&self.head.weight);
        out.push(&self.head.bias);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = vec![
            &mut self.patch_proj,
            &mut self.pos_embed,
            &mut self.class_token,
        ];
        for layer in &mut self.layers {
            out.push(&mut layer.norm1.gain);
            out.push(&mut layer.norm1.bias);
            out.extend(layer.qkv.iter_mut());
            out.push(&mut layer.msa_proj);
            out.push(&mut layer.norm2.gain);
            out.push(&mut layer.norm2.bias);
            for lin in &mut layer.mlp {
                out.push(&mut lin.weight);
                out.push(&mut lin.bias);
            }
        }
        out.push(&mut self.head_norm.gain);
        out.push(&mut self.head_norm.bias);
        out.push(&mut self.head.weight);
        out.push(&mut self.head.bias);
        out
    }

    pub fn count_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn add_assign(&mut self, other: &ViTModel) {
        let mut mine = self.tensors_mut();
        for (a, b) in mine.iter_mut().zip(other.tensors()) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for t in self.tensors_mut() {
            t.scale(s);
        }
    }
}

/// (in, out) shapes of the MLP linears: mlp_layers hidden maps then the
/// projection back to model_dim.
fn mlp_dims(config: &ViTConfig) -> Vec<(usize, usize)> {
    let d = config.model_dim;
    let m = config.mlp_size;
    let mut dims = Vec::with_capacity(config.mlp_layers + 1);
    dims.push((d, m));
    for _ in 1..config.mlp_layers {
        dims.push((m, m));
    }
    dims.push((m, d));
    dims
}

/// Exact parameter count for a configuration.
pub fn count_params(config: &ViTConfig) -> Result<usize> {
    Ok(ViTModel::zeros(config)?.count_params())
}

#[derive(Debug, Clone)]
pub struct HeadCache {
    q: Tensor,
    k: Tensor,
    v: Tensor,
    /// Post-softmax attention weights, T x T.
    attn: Tensor,
}

#[derive(Debug, Clone)]
pub struct LayerCache {
    ln1: LnCache,
    a: Tensor,
    heads: Vec<HeadCache>,
    concat: Tensor,
    ln2: LnCache,
    /// Pre-activation of each hidden linear.
    mlp_pre: Vec<Tensor>,
    /// Input of each linear: the LN2 output, then the post-GELU hidden
    /// activations.
    mlp_in: Vec<Tensor>,
}

/// Activations recorded by [`ViTModel::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    patches: Tensor,
    layers: Vec<LayerCache>,
    head_ln: LnCache,
    head_normed: Tensor,
}

/// One self-attention head: [Q,K,V] = Z·W_qkv, then softmax(Q Kᵀ/sqrt(d_h))·V.
/// The head dimension is `w_qkv.cols() / 3`.
pub fn self_attention(z: &Tensor, w_qkv: &Tensor) -> Tensor {
    attention_head(z, w_qkv).1
}

fn attention_head(a: &Tensor, w_qkv: &Tensor) -> (HeadCache, Tensor) {
    let dh = w_qkv.cols() / 3;
    let qkv = a.matmul(w_qkv);
    let parts = qkv.split_cols(3);
    let (q, k, v) = (parts[0].clone(), parts[1].clone(), parts[2].clone());
    let mut scores = q.matmul_nt(&k);
    scores.scale(1.0 / (dh as f64).sqrt());
    let attn = softmax_rows(&scores);
    let out = attn.matmul(&v);
    (HeadCache { q, k, v, attn }, out)
}

/// Multi-head self-attention: per-head outputs concatenated along the
/// feature axis and projected by W_msa.
pub fn multi_head_attention(z: &Tensor, layer: &EncoderLayer) -> Tensor {
    let outs: Vec<Tensor> = layer.qkv.iter().map(|w| self_attention(z, w)).collect();
    let refs: Vec<&Tensor> = outs.iter().collect();
    Tensor::hcat(&refs).matmul(&layer.msa_proj)
}

/// One pre-norm encoder layer without caching:
/// Z' = MSA(LN(Z)) + Z, out = MLP(LN(Z')) + Z'.
pub fn encoder_layer_forward(z: &Tensor, layer: &EncoderLayer) -> Tensor {
    let (a, _) = layer_norm_forward(z, layer.norm1.gain.row(0), layer.norm1.bias.row(0));
    let mut z_mid = multi_head_attention(&a, layer);
    z_mid.add_assign(z);
    let (b, _) = layer_norm_forward(&z_mid, layer.norm2.gain.row(0), layer.norm2.bias.row(0));
    let mut h = b;
    for (i, lin) in layer.mlp.iter().enumerate() {
        let mut pre = h.matmul(&lin.weight);
        for r in 0..pre.rows() {
            for (p, &bias) in pre.row_mut(r).iter_mut().zip(lin.bias.row(0)) {
                *p += bias;
            }
        }
        if i + 1 < layer.mlp.len() {
            for v in pre.data_mut() {
                *v = gelu(*v);
            }
        }
        h = pre;
    }
    h.add_assign(&z_mid);
    h
}

impl ViTModel {
    /// Patch + position embeddings with the class token prepended:
    /// Z_0 = [x_cls; patches·E] + E_pos.
    pub fn embed(&self, patches: &Tensor) -> Result<Tensor> {
        let cfg = &self.config;
        if patches.shape() != (cfg.n_patches(), cfg.patch_size * cfg.patch_size) {
            return Err(Error::Shape(format!(
                "patches {}x{}, expected {}x{}",
                patches.rows(),
                patches.cols(),
                cfg.n_patches(),
                cfg.patch_size * cfg.patch_size
            )));
        }
        let embedded = patches.matmul(&self.patch_proj);
        let mut z = embedded.with_row_prepended(self.class_token.row(0));
        z.add_assign(&self.pos_embed);
        Ok(z)
    }

    /// Runs the model on a square image, returning class logits and the
    /// activation cache. Fails fast on non-finite intermediates.
    pub fn forward(&self, image: &Tensor) -> Result<(Vec<f64>, ForwardCache)> {
        let cfg = &self.config;
        if image.shape() != (cfg.image_size, cfg.image_size) {
            return Err(Error::Shape(format!(
                "image {}x{}, expected {}x{}",
                image.rows(),
                image.cols(),
                cfg.image_size,
                cfg.image_size
            )));
        }
        let patches = patchify(image, cfg.patch_size)?;
        let mut z = self.embed(&patches)?;

        let mut layer_caches = Vec::with_capacity(cfg.n_layers);
        for layer in &self.layers {
            let z_in = z.clone();
            let (a, ln1) =
                layer_norm_forward(&z_in, layer.norm1.gain.row(0), layer.norm1.bias.row(0));

            let mut heads = Vec::with_capacity(cfg.n_heads);
            let mut outs = Vec::with_capacity(cfg.n_heads);
            for w_qkv in &layer.qkv {
                let (cache, out) = attention_head(&a, w_qkv);
                heads.push(cache);
                outs.push(out);
            }
            let refs: Vec<&Tensor> = outs.iter().collect();
            let concat = Tensor::hcat(&refs);
            let msa = concat.matmul(&layer.msa_proj);

            let mut z_mid = msa;
            z_mid.add_assign(&z_in);

            let (b, ln2) =
                layer_norm_forward(&z_mid, layer.norm2.gain.row(0), layer.norm2.bias.row(0));

            let mut mlp_in = vec![b.clone()];
            let mut mlp_pre = Vec::with_capacity(layer.mlp.len() - 1);
            let mut h = b.clone();
            for (i, lin) in layer.mlp.iter().enumerate() {
                let mut pre = h.matmul(&lin.weight);
                for r in 0..pre.rows() {
                    for (p, &bias) in pre.row_mut(r).iter_mut().zip(lin.bias.row(0)) {
                        *p += bias;
                    }
                }
                if i + 1 < layer.mlp.len() {
                    let mut act = pre.clone();
                    for v in act.data_mut() {
                        *v = gelu(*v);
                    }
                    mlp_pre.push(pre);
                    mlp_in.push(act.clone());
                    h = act;
                } else {
                    h = pre;
                }
            }

            let mut z_out = h;
            z_out.add_assign(&z_mid);
            if !z_out.is_finite() {
                return Err(Error::NonFinite("encoder layer output".into()));
            }

            layer_caches.push(LayerCache {
                ln1,
                a,
                heads,
                concat,
                ln2,
                mlp_pre,
                mlp_in,
            });
            z = z_out;
        }

        // Classification head on the class-token row.
        let head_in = Tensor::from_vec(1, cfg.model_dim, z.row(0).to_vec())?;
        let (head_normed, head_ln) = layer_norm_forward(
            &head_in,
            self.head_norm.gain.row(0),
            self.head_norm.bias.row(0),
        );
        let mut logits_t = head_normed.matmul(&self.head.weight);
        for (l, &b) in logits_t.row_mut(0).iter_mut().zip(self.head.bias.row(0)) {
            *l += b;
        }
        let logits = logits_t.row(0).to_vec();
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("logits".into()));
        }

        Ok((
            logits,
            ForwardCache {
                patches,
                layers: layer_caches,
                head_ln,
                head_normed,
            },
        ))
    }

    /// Convenience forward that discards the cache.
    pub fn logits(&self, image: &Tensor) -> Result<Vec<f64>> {
        Ok(self.forward(image)?.0)
    }

    /// Accumulates exact gradients of every parameter into `grads` given the
    /// loss gradient w.r.t. the logits.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        dlogits: &[f64],
        grads: &mut ViTModel,
    ) -> Result<()> {
        let cfg = &self.config;
        if dlogits.len() != cfg.n_classes {
            return Err(Error::Shape(format!(
                "dlogits length {}, expected {}",
                dlogits.len(),
                cfg.n_classes
            )));
        }
        if cache.layers.len() != self.layers.len() {
            return Err(Error::Shape("cache does not match model depth".into()));
        }
        let dh = cfg.head_dim();
        let dlogits_t = Tensor::from_vec(1, cfg.n_classes, dlogits.to_vec())?;

        // Head: logits = LN(z_out[0]) W + b.
        grads
            .head
            .weight
            .add_assign(&cache.head_normed.matmul_tn(&dlogits_t));
        grads.head.bias.add_assign(&dlogits_t);
        let dnormed = dlogits_t.matmul_nt(&self.head.weight);
        let dhead_in = layer_norm_backward(
            &cache.head_ln,
            self.head_norm.gain.row(0),
            &dnormed,
            grads.head_norm.gain.row_mut(0),
            grads.head_norm.bias.row_mut(0),
        );
        let mut dz = Tensor::zeros(cfg.seq_len(), cfg.model_dim);
        dz.row_mut(0).copy_from_slice(dhead_in.row(0));

        for idx in (0..self.layers.len()).rev() {
            let layer = &self.layers[idx];
            let lc = &cache.layers[idx];
            let glayer = &mut grads.layers[idx];

            // z_out = mlp_out + z_mid.
            let dmlp_out = dz.clone();
            let mut dz_mid = dz;

            // MLP backward through the final projection and hidden layers.
            let mut dh_cur = dmlp_out;
            for i in (0..layer.mlp.len()).rev() {
                let input = &lc.mlp_in[i];
                glayer.mlp[i].weight.add_assign(&input.matmul_tn(&dh_cur));
                // Bias gradient: column sums.
                for r in 0..dh_cur.rows() {
                    for (g, &v) in glayer.mlp[i].bias.row_mut(0).iter_mut().zip(dh_cur.row(r)) {
                        *g += v;
                    }
                }
                let mut dinput = dh_cur.matmul_nt(&layer.mlp[i].weight);
                if i > 0 {
                    // dinput is w.r.t. the GELU output of hidden layer i-1.
                    let pre = &lc.mlp_pre[i - 1];
                    for (dv, &p) in dinput.data_mut().iter_mut().zip(pre.data()) {
                        *dv *= gelu_prime(p);
                    }
                }
                dh_cur = dinput;
            }
            let db = dh_cur;
            dz_mid.add_assign(&layer_norm_backward(
                &lc.ln2,
                layer.norm2.gain.row(0),
                &db,
                glayer.norm2.gain.row_mut(0),
                glayer.norm2.bias.row_mut(0),
            ));

            // z_mid = msa_out + z_in; msa_out = concat · W_msa.
            let dmsa = &dz_mid;
            glayer.msa_proj.add_assign(&lc.concat.matmul_tn(dmsa));
            let dconcat = dmsa.matmul_nt(&layer.msa_proj);
            let dconcat_heads = dconcat.split_cols(cfg.n_heads);

            let mut da = Tensor::zeros(cfg.seq_len(), cfg.model_dim);
            let scale = 1.0 / (dh as f64).sqrt();
            for (h_idx, hc) in lc.heads.iter().enumerate() {
                let dout = &dconcat_heads[h_idx];
                let dattn = dout.matmul_nt(&hc.v);
                let dv = hc.attn.matmul_tn(dout);
                let mut dscores = softmax_rows_backward(&hc.attn, &dattn);
                dscores.scale(scale);
                let dq = dscores.matmul(&hc.k);
                let dk = dscores.matmul_tn(&hc.q);
                let dqkv = Tensor::hcat(&[&dq, &dk, &dv]);
                glayer.qkv[h_idx].add_assign(&lc.a.matmul_tn(&dqkv));
                da.add_assign(&dqkv.matmul_nt(&layer.qkv[h_idx]));
            }

            let mut dz_in = dz_mid.clone();
            dz_in.add_assign(&layer_norm_backward(
                &lc.ln1,
                layer.norm1.gain.row(0),
                &da,
                glayer.norm1.gain.row_mut(0),
                glayer.norm1.bias.row_mut(0),
            ));
            dz = dz_in;
        }

        // Embedding: Z_0 = [class; patches E] + E_pos.
        grads.pos_embed.add_assign(&dz);
        for (g, &v) in grads.class_token.row_mut(0).iter_mut().zip(dz.row(0)) {
            *g += v;
        }
        let n = cfg.n_patches();
        let mut dpatch_rows = Tensor::zeros(n, cfg.model_dim);
        for p in 0..n {
            dpatch_rows.row_mut(p).copy_from_slice(dz.row(p + 1));
        }
        grads
            .patch_proj
            .add_assign(&cache.patches.matmul_tn(&dpatch_rows));
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn tiny_config() -> ViTConfig {
        ViTConfig {
            n_layers: 1,
            model_dim: 8,
            n_heads: 2,
            mlp_layers: 2,
            mlp_size: 16,
            patch_size: 5,
            image_size: 10,
            n_classes: 3,
        }
    }

    fn random_tensor(rows: usize, cols: usize, rng: &mut ChaCha12Rng) -> Tensor {
        Tensor::from_vec(
            rows,
            cols,
            (0..rows * cols)
                .map(|_| rng.random::<f64>() * 2.0 - 1.0)
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn embed_with_zero_projection_returns_position_embeddings() {
        let cfg = tiny_config();
        let mut model = ViTModel::zeros(&cfg).unwrap();
        for (i, v) in model.pos_embed.data_mut().iter_mut().enumerate() {
            *v = i as f64;
        }
        let patches = Tensor::zeros(cfg.n_patches(), cfg.patch_size * cfg.patch_size);
        let z0 = model.embed(&patches).unwrap();
        assert_eq!(z0, model.pos_embed);
    }

    #[test]
    fn embed_identity_projection_copies_the_patch() {
        // One 2x2 patch, d = 4, E = I: row 1 of Z_0 is the flattened patch.
        let cfg = ViTConfig {
            n_layers: 1,
            model_dim: 4,
            n_heads: 2,
            mlp_layers: 1,
            mlp_size: 4,
            patch_size: 2,
            image_size: 2,
            n_classes: 1,
        };
        let mut model = ViTModel::zeros(&cfg).unwrap();
        for i in 0..4 {
            *model.patch_proj.at_mut(i, i) = 1.0;
        }
        let patches = Tensor::from_vec(1, 4, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let z0 = model.embed(&patches).unwrap();
        assert_eq!(z0.row(1), &[0.1, 0.2, 0.3, 0.4]);
        assert_eq!(z0.row(0), &[0.0; 4]);
    }

    #[test]
    fn embed_matches_naive_matmul_oracle() {
        let cfg = tiny_config();
        let model = ViTModel::init(&cfg, 3).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let patches = random_tensor(cfg.n_patches(), 25, &mut rng);
        let z0 = model.embed(&patches).unwrap();
        for i in 0..cfg.n_patches() {
            for j in 0..cfg.model_dim {
                let mut acc = model.pos_embed.at(i + 1, j);
                for p in 0..25 {
                    acc += patches.at(i, p) * model.patch_proj.at(p, j);
                }
                assert!((z0.at(i + 1, j) - acc).abs() < 1e-12);
            }
        }
        for j in 0..cfg.model_dim {
            let expect = model.class_token.at(0, j) + model.pos_embed.at(0, j);
            assert!((z0.at(0, j) - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn embed_rejects_wrong_patch_shape() {
        let cfg = tiny_config();
        let model = ViTModel::zeros(&cfg).unwrap();
        assert!(model.embed(&Tensor::zeros(3, 25)).is_err());
    }

    #[test]
    fn single_token_attention_returns_its_value_row() {
        let mut rng = ChaCha12Rng::seed_from_u64(14);
        let z = random_tensor(1, 6, &mut rng);
        let w = random_tensor(6, 9, &mut rng); // d_h = 3
        let out = self_attention(&z, &w);
        let qkv = z.matmul(&w);
        assert_eq!(out.shape(), (1, 3));
        for j in 0..3 {
            assert!((out.at(0, j) - qkv.at(0, 6 + j)).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_keys_average_the_values() {
        // K = 0 makes every score 0, softmax uniform, output the column
        // mean of V.
        let mut rng = ChaCha12Rng::seed_from_u64(15);
        let z = random_tensor(4, 6, &mut rng);
        let mut w = random_tensor(6, 9, &mut rng);
        for r in 0..6 {
            for c in 3..6 {
                *w.at_mut(r, c) = 0.0;
            }
        }
        let out = self_attention(&z, &w);
        let qkv = z.matmul(&w);
        for j in 0..3 {
            let mean: f64 = (0..4).map(|i| qkv.at(i, 6 + j)).sum::<f64>() / 4.0;
            for i in 0..4 {
                assert!((out.at(i, j) - mean).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn attention_matches_explicit_loop_oracle() {
        let mut rng = ChaCha12Rng::seed_from_u64(16);
        for _ in 0..50 {
            let d = 6;
            let dh = 3;
            let z = random_tensor(3, d, &mut rng);
            let w = random_tensor(d, 3 * dh, &mut rng);
            let out = self_attention(&z, &w);
            let qkv = z.matmul(&w);
            for i in 0..3 {
                let mut scores = [0.0; 3];
                for j in 0..3 {
                    for c in 0..dh {
                        scores[j] += qkv.at(i, c) * qkv.at(j, dh + c);
                    }
                    scores[j] /= (dh as f64).sqrt();
                }
                let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = scores.iter().map(|&s| (s - max).exp()).collect();
                let sum: f64 = exps.iter().sum();
                for c in 0..dh {
                    let mut acc = 0.0;
                    for j in 0..3 {
                        acc += exps[j] / sum * qkv.at(j, 2 * dh + c);
                    }
                    assert!((out.at(i, c) - acc).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn single_head_with_identity_projection_equals_self_attention() {
        let cfg = ViTConfig {
            n_layers: 1,
            model_dim: 4,
            n_heads: 1,
            mlp_layers: 1,
            mlp_size: 4,
            patch_size: 2,
            image_size: 4,
            n_classes: 1,
        };
        let mut model = ViTModel::init(&cfg, 77).unwrap();
        let layer = &mut model.layers[0];
        layer.msa_proj = Tensor::zeros(4, 4);
        for i in 0..4 {
            *layer.msa_proj.at_mut(i, i) = 1.0;
        }
        let mut rng = ChaCha12Rng::seed_from_u64(18);
        let z = random_tensor(5, 4, &mut rng);
        let mha = multi_head_attention(&z, &model.layers[0]);
        let sa = self_attention(&z, &model.layers[0].qkv[0]);
        assert_eq!(mha, sa);
    }

    #[test]
    fn multi_head_output_shape_and_concat_oracle() {
        let cfg = tiny_config();
        let model = ViTModel::init(&cfg, 21).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(19);
        let z = random_tensor(cfg.seq_len(), cfg.model_dim, &mut rng);
        let mha = multi_head_attention(&z, &model.layers[0]);
        assert_eq!(mha.shape(), (cfg.seq_len(), cfg.model_dim));

        // Manual two-head concat followed by the projection.
        let h0 = self_attention(&z, &model.layers[0].qkv[0]);
        let h1 = self_attention(&z, &model.layers[0].qkv[1]);
        let concat = Tensor::hcat(&[&h0, &h1]);
        let expect = concat.matmul(&model.layers[0].msa_proj);
        for (a, b) in mha.data().iter().zip(expect.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_weight_encoder_layer_is_identity() {
        let cfg = tiny_config();
        let model = ViTModel::zeros(&cfg).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(20);
        let z = random_tensor(cfg.seq_len(), cfg.model_dim, &mut rng);
        let out = encoder_layer_forward(&z, &model.layers[0]);
        assert_eq!(out, z);
    }

    #[test]
    fn parameter_count_matches_hand_arithmetic() {
        // E 25x8 + E_pos 5x8 + cls 8 + LN1 16 + QKV 2x(8x12) + proj 64
        // + LN2 16 + MLP (8*16+16)+(16*16+16)+(16*8+8) + head LN 16
        // + head 8*3+3 = 1131.
        assert_eq!(count_params(&tiny_config()).unwrap(), 1131);
    }

    #[test]
    fn each_extra_class_costs_dim_plus_one() {
        let mut cfg = tiny_config();
        let base = count_params(&cfg).unwrap();
        cfg.n_classes *= 2;
        let doubled = count_params(&cfg).unwrap();
        assert_eq!(doubled - base, 3 * (cfg.model_dim + 1));
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let cfg = tiny_config();
        let a = ViTModel::init(&cfg, 4).unwrap();
        let b = ViTModel::init(&cfg, 4).unwrap();
        assert_eq!(a, b);
        for t in [&a.patch_proj, &a.pos_embed, &a.class_token] {
            assert!(t.data().iter().all(|v| v.abs() <= 0.04));
        }
    }
}
