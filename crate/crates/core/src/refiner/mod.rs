//! Learned iterative refinement of coarse flow and visibility.
//!
//! A RAFT-style network: shared frame encoder, all-pairs correlation pyramid,
//! windowed lookup around the current flow, joint flow/mask/correlation
//! encoder, convolutional GRU, residual flow and mask decoders and a learned
//! convex upsampling back to full resolution.

mod chain;
mod checkpoint;
mod config;
pub mod network;

pub use chain::{chain_flows, downsample_to_coarse, warm_start};
pub use config::RefinerConfig;
pub use network::{
    build_pyramid, encode_frames, forward, init_params, lookup, param_shapes, CorrelationPyramid, RefinerInputs,
    RefinerOutputs, RefinerState,
};

use crate::error::{DotError, Result};
use crate::interp::{coarse_dims, CoarseEstimate};
use crate::nn::{lit, Graph, ParamStore, Scalar, Tensor};
use crate::types::{FlowField, Frame, Resolution, VisibilityMask};

/// A refiner architecture together with its weights.
#[derive(Debug, Clone)]
pub struct Refiner {
    config: RefinerConfig,
    params: ParamStore<f32>,
}

impl Refiner {
    /// Freshly initialized weights.
    pub fn new(config: RefinerConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let params = init_params(&config, seed);
        Ok(Refiner { config, params })
    }

    /// Wrap existing weights, checking names and shapes against the config.
    pub fn from_params(config: RefinerConfig, params: ParamStore<f32>) -> Result<Self> {
        config.validate()?;
        let expected = param_shapes(&config);
        if expected.len() != params.len() {
            return Err(DotError::Config(format!(
                "config expects {} tensors, weights have {}",
                expected.len(),
                params.len()
            )));
        }
        for (name, shape) in &expected {
            match params.get(name) {
                None => return Err(DotError::Config(format!("missing weight {name}"))),
                Some(t) if t.shape != *shape => {
                    return Err(DotError::Config(format!(
                        "weight {name} has shape {:?}, config expects {shape:?}",
                        t.shape
                    )))
                }
                Some(_) => {}
            }
        }
        Ok(Refiner { config, params })
    }

    pub fn config(&self) -> &RefinerConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<f32> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<f32> {
        &mut self.params
    }

    /// Refine a coarse estimate for the pair `(source, target)`.
    ///
    /// Returns fine flow in pixels and a soft visibility mask in `(0, 1)`.
    /// With zero iterations the coarse estimate is upsampled by nearest
    /// replication instead.
    pub fn refine(&self, source: &Frame, target: &Frame, init: &CoarseEstimate) -> Result<(FlowField, VisibilityMask)> {
        let mut out = self.refine_batch(&[RefineJob { source, target, init }])?;
        Ok(out.pop().expect("one result per job"))
    }

    /// Refine several same-sized pairs in one batched pass.
    pub fn refine_batch(&self, jobs: &[RefineJob<'_>]) -> Result<Vec<(FlowField, VisibilityMask)>> {
        let Some(first) = jobs.first() else {
            return Ok(Vec::new());
        };
        let (h, w) = (first.source.height, first.source.width);
        for job in jobs {
            self.check_job(job, h, w)?;
        }
        if self.config.iterations == 0 {
            return Ok(jobs.iter().map(|j| j.init.upsample_nearest(h, w)).collect());
        }
        let inputs = make_inputs::<f32>(&self.config, jobs)?;
        let mut g = Graph::inference(&self.params);
        let out = forward(&mut g, &self.config, &inputs);
        Ok(split_outputs(g.value(out.flow), g.value(out.mask_logits)))
    }

    fn check_job(&self, job: &RefineJob<'_>, h: usize, w: usize) -> Result<()> {
        let p = self.config.patch;
        for f in [job.source, job.target] {
            if (f.height, f.width) != (h, w) {
                return Err(DotError::Shape(format!(
                    "frame is {}x{}, expected {h}x{w}",
                    f.height, f.width
                )));
            }
        }
        if job.init.patch != p {
            return Err(DotError::Config(format!(
                "initial estimate uses patch {}, refiner uses {p}",
                job.init.patch
            )));
        }
        let (hc, wc) = coarse_dims(h, w, p);
        if (job.init.flow.height, job.init.flow.width) != (hc, wc)
            || (job.init.mask.height, job.init.mask.width) != (hc, wc)
        {
            return Err(DotError::Shape(format!(
                "initial estimate is {}x{}, expected {hc}x{wc}",
                job.init.flow.height, job.init.flow.width
            )));
        }
        Ok(())
    }
}

/// One pair to refine.
#[derive(Debug, Clone, Copy)]
pub struct RefineJob<'a> {
    pub source: &'a Frame,
    pub target: &'a Frame,
    pub init: &'a CoarseEstimate,
}

/// Frame as a `[3, Hp, Wp]` planar slice, edge-replicated to `Hp x Wp`.
pub(crate) fn frame_planes<T: Scalar>(frame: &Frame, hp: usize, wp: usize, out: &mut [T]) {
    let (h, w) = (frame.height, frame.width);
    for c in 0..3 {
        for y in 0..hp {
            let sy = y.min(h - 1);
            for x in 0..wp {
                let sx = x.min(w - 1);
                out[(c * hp + y) * wp + x] = lit(frame.data[(sy * w + sx) * 3 + c] as f64);
            }
        }
    }
}

/// Stack jobs into padded network inputs.
pub fn make_inputs<T: Scalar>(cfg: &RefinerConfig, jobs: &[RefineJob<'_>]) -> Result<RefinerInputs<T>> {
    let first = jobs
        .first()
        .ok_or_else(|| DotError::Invalid("no pairs to refine".into()))?;
    let (h, w) = (first.source.height, first.source.width);
    let p = cfg.patch;
    let (hc, wc) = coarse_dims(h, w, p);
    let (hp, wp) = (hc * p, wc * p);
    let n = jobs.len();
    let mut source = Tensor::zeros([n, 3, hp, wp]);
    let mut target = Tensor::zeros([n, 3, hp, wp]);
    let mut flow0 = Tensor::zeros([n, 2, hc, wc]);
    let mut mask0 = Tensor::zeros([n, 1, hc, wc]);
    let fl = 3 * hp * wp;
    let cl = hc * wc;
    for (i, job) in jobs.iter().enumerate() {
        frame_planes(job.source, hp, wp, &mut source.data[i * fl..(i + 1) * fl]);
        frame_planes(job.target, hp, wp, &mut target.data[i * fl..(i + 1) * fl]);
        for c in 0..cl {
            flow0.data[(2 * i) * cl + c] = lit(job.init.flow.data[2 * c] as f64);
            flow0.data[(2 * i + 1) * cl + c] = lit(job.init.flow.data[2 * c + 1] as f64);
            mask0.data[i * cl + c] = lit(job.init.mask.data[c] as f64);
        }
    }
    Ok(RefinerInputs {
        source,
        target,
        flow0,
        mask0,
        height: h,
        width: w,
    })
}

fn sigmoid(v: f32) -> f32 {
    1.0 / (1.0 + (-v).exp())
}

/// Unstack `[N, 2, H, W]` flow and `[N, 1, H, W]` logits into per-item fields.
pub(crate) fn split_outputs<T: Scalar>(flow: &Tensor<T>, logits: &Tensor<T>) -> Vec<(FlowField, VisibilityMask)> {
    let [n, _, h, w] = flow.shape;
    let hw = h * w;
    (0..n)
        .map(|i| {
            let mut data = vec![0.0f32; 2 * hw];
            for k in 0..hw {
                data[2 * k] = flow.data[2 * i * hw + k].to_f32().unwrap_or(f32::NAN);
                data[2 * k + 1] = flow.data[(2 * i + 1) * hw + k].to_f32().unwrap_or(f32::NAN);
            }
            let mask = (0..hw)
                .map(|k| sigmoid(logits.data[i * hw + k].to_f32().unwrap_or(f32::NAN)))
                .collect();
            (
                FlowField {
                    height: h,
                    width: w,
                    data,
                    resolution: Resolution::Fine,
                },
                VisibilityMask {
                    height: h,
                    width: w,
                    data: mask,
                    binary: false,
                },
            )
        })
        .collect()
}
