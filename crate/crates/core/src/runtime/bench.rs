use std::fmt::Write as _;
use std::time::Duration;

use image::{GrayImage, RgbImage};

use super::infer::{Predictor, StageTimes};
use crate::error::{data_err, Error, Result};

/// Published end-to-end latencies kept next to local measurements:
/// `(label, ms per frame)`.
pub const REFERENCE_LATENCIES: [(&str, f64); 2] = [("paper_pi4b_cpu", 335.0), ("paper_gpu", 0.41)];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatencyStats {
    pub mean_ms: f64,
    pub median_ms: f64,
    pub p95_ms: f64,
}

impl LatencyStats {
    /// Nearest-rank percentiles. Panics on an empty sample.
    pub fn from_samples(samples: &[Duration]) -> Self {
        assert!(!samples.is_empty(), "latency stats need at least one sample");
        let mut ms: Vec<f64> = samples.iter().map(|d| d.as_secs_f64() * 1e3).collect();
        ms.sort_by(f64::total_cmp);
        let n = ms.len();
        let rank = |q: f64| ms[((q * n as f64).ceil() as usize).clamp(1, n) - 1];
        LatencyStats {
            mean_ms: ms.iter().sum::<f64>() / n as f64,
            median_ms: if n % 2 == 1 {
                ms[n / 2]
            } else {
                (ms[n / 2 - 1] + ms[n / 2]) / 2.0
            },
            p95_ms: rank(0.95),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatencyReport {
    /// Timed frames; warmup frames are not counted.
    pub frames: usize,
    pub warmup: usize,
    pub threads: usize,
    pub input_size: u32,
    pub preprocess: LatencyStats,
    pub forward: LatencyStats,
    pub postprocess: LatencyStats,
    pub total: LatencyStats,
}

impl LatencyReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("source,stage,mean_ms,median_ms,p95_ms,frames,warmup,threads,input\n");
        let input = format!("{0}x{0}", self.input_size);
        for (stage, st) in [
            ("preprocess", &self.preprocess),
            ("forward", &self.forward),
            ("postprocess", &self.postprocess),
            ("total", &self.total),
        ] {
            let _ = writeln!(
                s,
                "measured,{stage},{:.4},{:.4},{:.4},{},{},{},{input}",
                st.mean_ms, st.median_ms, st.p95_ms, self.frames, self.warmup, self.threads
            );
        }
        for (label, ms) in REFERENCE_LATENCIES {
            let _ = writeln!(s, "{label},total,{ms},,,100,,,256x256");
        }
        s
    }

    pub fn summary(&self) -> String {
        format!(
            "{} frames ({} warmup, {} thread(s), {s}x{s} input): mean {:.3} ms, median {:.3} ms, \
             p95 {:.3} ms [preprocess {:.3}, forward {:.3}, postprocess {:.3}]",
            self.frames,
            self.warmup,
            self.threads,
            self.total.mean_ms,
            self.total.median_ms,
            self.total.p95_ms,
            self.preprocess.mean_ms,
            self.forward.mean_ms,
            self.postprocess.mean_ms,
            s = self.input_size,
        )
    }
}

/// Runs `warmup + frames` inferences cycling through `images` inside a
/// dedicated pool of `threads` workers, and returns the report with the
/// masks of the timed frames.
pub fn benchmark(
    predictor: &Predictor,
    images: &[RgbImage],
    frames: usize,
    warmup: usize,
    threads: usize,
) -> Result<(LatencyReport, Vec<GrayImage>)> {
    if frames == 0 {
        return Err(data_err!("benchmark needs at least one timed frame"));
    }
    if images.is_empty() {
        return Err(data_err!("benchmark needs at least one input image"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::Internal(format!("thread pool: {e}")))?;
    let (times, masks) = pool.install(|| -> Result<(Vec<StageTimes>, Vec<GrayImage>)> {
        for i in 0..warmup {
            predictor.infer(&images[i % images.len()])?;
        }
        let mut times = Vec::with_capacity(frames);
        let mut masks = Vec::with_capacity(frames);
        for i in 0..frames {
            let (m, t) = predictor.infer_timed(&images[i % images.len()])?;
            times.push(t);
            masks.push(m);
        }
        Ok((times, masks))
    })?;
    let pick = |f: fn(&StageTimes) -> Duration| {
        LatencyStats::from_samples(&times.iter().map(f).collect::<Vec<_>>())
    };
    let report = LatencyReport {
        frames,
        warmup,
        threads: threads.max(1),
        input_size: predictor.preprocess.size,
        preprocess: pick(|t| t.preprocess),
        forward: pick(|t| t.forward),
        postprocess: pick(|t| t.postprocess),
        total: pick(|t| t.total()),
    };
    Ok((report, masks))
}
