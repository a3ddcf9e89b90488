use std::fmt::Write as _;

use crate::error::Result;
use crate::model::{layer_table, ArchConfig, LayerRow};
use crate::tensor::Shape;

/// Per-layer complexity at one input resolution, with totals.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexityReport {
    pub config: ArchConfig,
    pub input: Shape,
    pub layers: Vec<LayerRow>,
    pub total_params: u64,
    pub total_flops: u64,
}

pub fn describe(config: &ArchConfig, size: usize) -> Result<ComplexityReport> {
    let input = Shape::new(1, config.in_channels, size, size)?;
    let layers = layer_table(config, input)?;
    Ok(ComplexityReport {
        config: *config,
        input,
        total_params: layers.iter().map(|r| r.params).sum(),
        total_flops: layers.iter().map(|r| r.flops).sum(),
        layers,
    })
}

impl ComplexityReport {
    pub fn gflops(&self) -> f64 {
        self.total_flops as f64 / 1e9
    }

    pub fn mparams(&self) -> f64 {
        self.total_params as f64 / 1e6
    }

    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<11} {:<11} {:>8} {:>14}  output", "layer", "kind", "params", "flops");
        for r in &self.layers {
            let o = r.out_shape;
            let _ = writeln!(
                s,
                "{:<11} {:<11} {:>8} {:>14}  {}x{}x{}",
                r.name, r.kind, r.params, r.flops, o.c, o.h, o.w
            );
        }
        let _ = writeln!(s, "{:<11} {:<11} {:>8} {:>14}", "total", "", self.total_params, self.total_flops);
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("layer,kind,params,flops,out_c,out_h,out_w\n");
        for r in &self.layers {
            let o = r.out_shape;
            let _ = writeln!(s, "{},{},{},{},{},{},{}", r.name, r.kind, r.params, r.flops, o.c, o.h, o.w);
        }
        let _ = writeln!(s, "total,,{},{},,,", self.total_params, self.total_flops);
        s
    }

    /// Model-zoo style summary row: parameters (M), FLOPs (G), input.
    pub fn summary_row(&self) -> String {
        format!(
            "model,params_m,flops_g,input\nBioLite U-Net,{:.4},{:.3},{}x{}\n",
            self.mparams(),
            self.gflops(),
            self.input.h,
            self.input.w
        )
    }
}
