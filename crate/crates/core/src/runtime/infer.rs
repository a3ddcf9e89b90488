use std::path::Path;
use std::time::{Duration, Instant};

use image::{GrayImage, Luma, Rgba, RgbaImage, RgbImage};
use rayon::prelude::*;

use super::weights::WeightsFile;
use crate::data::{resize_mask_nearest, LabeledFrame, Preprocess};
use crate::error::{data_err, Error, Result};
use crate::metrics::{ConfusionMatrix, EvalReport};
use crate::model::{forward, ModelParams, NUM_CLASSES};
use crate::nn::softmax_channels_fwd;
use crate::tensor::Tensor4;

/// Whether the explicit softmax runs before the argmax. The mask is the
/// same either way; `Fused` skips the exponentials.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SoftmaxMode {
    Explicit,
    #[default]
    Fused,
}

/// Wall time of each pipeline stage for one frame.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimes {
    pub preprocess: Duration,
    pub forward: Duration,
    pub postprocess: Duration,
}

impl StageTimes {
    pub fn total(&self) -> Duration {
        self.preprocess + self.forward + self.postprocess
    }
}

/// A loaded model ready to segment frames. Shareable across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictor {
    pub params: ModelParams<f32>,
    pub preprocess: Preprocess,
    pub softmax: SoftmaxMode,
}

impl From<WeightsFile> for Predictor {
    fn from(w: WeightsFile) -> Self {
        Predictor::new(w.params, w.preprocess)
    }
}

impl Predictor {
    pub fn new(params: ModelParams<f32>, preprocess: Preprocess) -> Self {
        Predictor {
            params,
            preprocess,
            softmax: SoftmaxMode::default(),
        }
    }

    pub fn with_softmax(mut self, mode: SoftmaxMode) -> Self {
        self.softmax = mode;
        self
    }

    /// Class mask at the source image's resolution.
    pub fn infer(&self, image: &RgbImage) -> Result<GrayImage> {
        self.infer_timed(image).map(|(m, _)| m)
    }

    pub fn infer_timed(&self, image: &RgbImage) -> Result<(GrayImage, StageTimes)> {
        let (w, h) = image.dimensions();
        if w == 0 || h == 0 {
            return Err(data_err!("cannot segment a {w}x{h} image"));
        }
        let t0 = Instant::now();
        let x = self.preprocess.image_tensor(image);
        let t1 = Instant::now();
        let logits = forward(&self.params, &x)?;
        let t2 = Instant::now();
        let scores = match self.softmax {
            SoftmaxMode::Explicit => softmax_channels_fwd(&logits),
            SoftmaxMode::Fused => logits,
        };
        let size = self.preprocess.size;
        let small = GrayImage::from_raw(size, size, argmax_channels(&scores, 0))
            .expect("argmax plane matches network size");
        let mask = resize_mask_nearest(&small, w, h);
        let t3 = Instant::now();
        Ok((
            mask,
            StageTimes {
                preprocess: t1 - t0,
                forward: t2 - t1,
                postprocess: t3 - t2,
            },
        ))
    }
}

/// Dataset-level metrics of the full pipeline against each frame's mask at
/// source resolution.
pub fn evaluate_predictor(predictor: &Predictor, frames: &[LabeledFrame]) -> Result<EvalReport> {
    if frames.is_empty() {
        return Err(data_err!("nothing to evaluate"));
    }
    let parts: Vec<ConfusionMatrix> = frames
        .par_iter()
        .map(|f| {
            let pred = predictor.infer(&f.image)?;
            let mut cm = ConfusionMatrix::new(NUM_CLASSES);
            cm.accumulate(pred.as_raw(), f.mask.as_raw())?;
            Ok(cm)
        })
        .collect::<Result<_>>()?;
    let mut total = ConfusionMatrix::new(NUM_CLASSES);
    for cm in &parts {
        total += cm;
    }
    Ok(total.report())
}

/// Per-pixel index of the largest channel of sample `n`; ties go to the
/// lowest index.
pub fn argmax_channels(x: &Tensor4<f32>, n: usize) -> Vec<u8> {
    let s = x.shape();
    let mut best = x.plane(n, 0).to_vec();
    let mut idx = vec![0u8; s.plane()];
    for c in 1..s.c {
        for (i, &v) in x.plane(n, c).iter().enumerate() {
            if v > best[i] {
                best[i] = v;
                idx[i] = c as u8;
            }
        }
    }
    idx
}

/// Colour overlay of a class mask: background transparent, ink green,
/// nozzle red.
pub fn overlay(mask: &GrayImage) -> RgbaImage {
    RgbaImage::from_fn(mask.width(), mask.height(), |x, y| match mask.get_pixel(x, y) {
        Luma([1]) => Rgba([0, 255, 0, 160]),
        Luma([2]) => Rgba([255, 0, 0, 160]),
        _ => Rgba([0, 0, 0, 0]),
    })
}

pub fn write_overlay(path: &Path, mask: &GrayImage) -> Result<()> {
    overlay(mask)
        .save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::image(path, e))
}
