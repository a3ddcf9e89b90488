//! Helpers shared by the integration tests: finite-difference gradient
//! checking in f64 and small fixtures.

#![allow(dead_code)]

use biolite_core::data::{split, LabeledFrame};
use biolite_core::model::{backward_with_input, forward_cached, ArchConfig, ModelParams};
use biolite_core::nn::{
    bilinear_up2x_bwd, bilinear_up2x_fwd, depthwise_conv3x3_bwd, depthwise_conv3x3_fwd,
    dwsep_block_bwd, dwsep_block_fwd, maxpool2x2_bwd, maxpool2x2_fwd, pointwise_conv1x1_bwd,
    pointwise_conv1x1_fwd, relu_bwd, relu_fwd, Activation, ConvDWParams,
};
use biolite_core::optim::ce_loss;
use biolite_core::synth::{generate_dataset, Difficulty};
use biolite_core::{Shape, Tensor4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const EPS: f64 = 1e-3;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn shape(n: usize, c: usize, h: usize, w: usize) -> Shape {
    Shape::new(n, c, h, w).unwrap()
}

pub fn random_tensor(s: Shape, rng: &mut impl Rng) -> Tensor4<f64> {
    let data = (0..s.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    Tensor4::from_vec(s, data).unwrap()
}

/// Scalar loss `Σ r ⊙ y`, whose gradient wrt `y` is `r`.
pub fn projection(y: &Tensor4<f64>, r: &Tensor4<f64>) -> f64 {
    y.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
}

/// A differentiable function of several tensors, with the analytic
/// gradient of every one of them.
pub struct Problem {
    pub name: String,
    pub inputs: Vec<(String, Tensor4<f64>)>,
    pub grads: Vec<Tensor4<f64>>,
    pub loss: Box<dyn Fn(&[Tensor4<f64>]) -> f64>,
}

#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: String,
    pub max_rel_err: f64,
    pub worst: String,
    pub sampled: usize,
    pub skipped_kinks: usize,
}

pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

/// Samples up to `per_tensor` coordinates of every input and compares the
/// analytic gradient with a central difference. A coordinate whose
/// one-sided differences at `ε` and `ε/2` disagree sits near a ReLU or
/// max-pool kink and is replaced by another draw.
pub fn check(p: &Problem, per_tensor: usize, rng: &mut impl Rng) -> CheckOutcome {
    let mut xs: Vec<Tensor4<f64>> = p.inputs.iter().map(|(_, t)| t.clone()).collect();
    let base = (p.loss)(&xs);
    let mut out = CheckOutcome {
        name: p.name.clone(),
        max_rel_err: 0.0,
        worst: String::new(),
        sampled: 0,
        skipped_kinks: 0,
    };
    for (t, (tname, tensor)) in p.inputs.iter().enumerate() {
        let len = tensor.len();
        let want = per_tensor.min(len);
        let mut order: Vec<usize> = (0..len).collect();
        for i in (1..len).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        let mut taken = 0;
        for &i in &order {
            if taken == want {
                break;
            }
            let orig = xs[t].data()[i];
            let mut at = |d: f64| {
                xs[t].data_mut()[i] = orig + d;
                let v = (p.loss)(&xs);
                xs[t].data_mut()[i] = orig;
                v
            };
            let (up, down) = (at(EPS), at(-EPS));
            let (up_half, down_half) = (at(EPS / 2.0), at(-EPS / 2.0));

            let slopes = [
                (up - base) / EPS,
                (base - down) / EPS,
                (up_half - base) / (EPS / 2.0),
                (base - down_half) / (EPS / 2.0),
            ];
            let scale = slopes.iter().fold(0.0f64, |m, s| m.max(s.abs()));
            let spread = slopes.iter().fold(f64::MIN, |m, &s| m.max(s))
                - slopes.iter().fold(f64::MAX, |m, &s| m.min(s));
            if spread > 1e-4 * scale + 1e-7 {
                out.skipped_kinks += 1;
                continue;
            }
            let numeric = (up - down) / (2.0 * EPS);
            let analytic = p.grads[t].data()[i];
            let e = rel_err(analytic, numeric);
            if e > out.max_rel_err {
                out.max_rel_err = e;
                out.worst = format!("{tname}[{i}]: analytic {analytic:e}, numeric {numeric:e}");
            }
            taken += 1;
            out.sampled += 1;
        }
    }
    out
}

fn named(pairs: Vec<(&str, Tensor4<f64>)>) -> Vec<(String, Tensor4<f64>)> {
    pairs.into_iter().map(|(n, t)| (n.to_string(), t)).collect()
}

pub fn depthwise_problem(rng: &mut impl Rng) -> Problem {
    let x = random_tensor(shape(2, 4, 8, 8), rng);
    let k = random_tensor(shape(4, 1, 3, 3), rng);
    let b = random_tensor(shape(4, 1, 1, 1), rng);
    let r = random_tensor(x.shape(), rng);
    let (dx, dk, db) = depthwise_conv3x3_bwd(&x, &k, &r).unwrap();
    Problem {
        name: "depthwise_conv3x3".into(),
        inputs: named(vec![("x", x), ("weight", k), ("bias", b)]),
        grads: vec![dx, dk, db],
        loss: Box::new(move |v| projection(&depthwise_conv3x3_fwd(&v[0], &v[1], &v[2]).unwrap(), &r)),
    }
}

pub fn pointwise_problem(rng: &mut impl Rng) -> Problem {
    let x = random_tensor(shape(2, 4, 8, 8), rng);
    let k = random_tensor(shape(3, 4, 1, 1), rng);
    let b = random_tensor(shape(3, 1, 1, 1), rng);
    let r = random_tensor(shape(2, 3, 8, 8), rng);
    let (dx, dk, db) = pointwise_conv1x1_bwd(&x, &k, &r).unwrap();
    Problem {
        name: "pointwise_conv1x1".into(),
        inputs: named(vec![("x", x), ("weight", k), ("bias", b)]),
        grads: vec![dx, dk, db],
        loss: Box::new(move |v| projection(&pointwise_conv1x1_fwd(&v[0], &v[1], &v[2]).unwrap(), &r)),
    }
}

pub fn relu_problem(rng: &mut impl Rng) -> Problem {
    let x = random_tensor(shape(2, 4, 8, 8), rng);
    let r = random_tensor(x.shape(), rng);
    let dx = relu_bwd(&x, &r).unwrap();
    Problem {
        name: "relu".into(),
        inputs: named(vec![("x", x)]),
        grads: vec![dx],
        loss: Box::new(move |v| projection(&relu_fwd(&v[0]), &r)),
    }
}

pub fn maxpool_problem(rng: &mut impl Rng) -> Problem {
    let x = random_tensor(shape(2, 4, 8, 8), rng);
    let r = random_tensor(shape(2, 4, 4, 4), rng);
    let (_, idx) = maxpool2x2_fwd(&x).unwrap();
    let dx = maxpool2x2_bwd(&idx, &r).unwrap();
    Problem {
        name: "maxpool2x2".into(),
        inputs: named(vec![("x", x)]),
        grads: vec![dx],
        loss: Box::new(move |v| projection(&maxpool2x2_fwd(&v[0]).unwrap().0, &r)),
    }
}

pub fn upsample_problem(rng: &mut impl Rng) -> Problem {
    let x = random_tensor(shape(2, 4, 4, 4), rng);
    let r = random_tensor(shape(2, 4, 8, 8), rng);
    let dx = bilinear_up2x_bwd(&r).unwrap();
    Problem {
        name: "bilinear_up2x".into(),
        inputs: named(vec![("x", x)]),
        grads: vec![dx],
        loss: Box::new(move |v| projection(&bilinear_up2x_fwd(&v[0]), &r)),
    }
}

pub fn dwsep_problem(activation: Activation, rng: &mut impl Rng) -> Problem {
    let x = random_tensor(shape(2, 4, 8, 8), rng);
    let mut p = ConvDWParams::<f64>::zeros(4, 3);
    for t in p.tensors_mut() {
        *t = random_tensor(t.shape(), rng);
    }
    let r = random_tensor(shape(2, 3, 8, 8), rng);
    let (_, cache) = dwsep_block_fwd(&x, p.as_ref(), activation).unwrap();
    let g = dwsep_block_bwd(&cache, p.as_ref(), &r).unwrap();
    let [a, b, c, d] = p.tensors().map(|t| t.clone());
    let [ga, gb, gc, gd] = g.params.tensors().map(|t| t.clone());
    Problem {
        name: format!("dwsep_block ({activation:?})"),
        inputs: named(vec![
            ("x", x),
            ("dw.weight", a),
            ("dw.bias", b),
            ("pw.weight", c),
            ("pw.bias", d),
        ]),
        grads: vec![g.input, ga, gb, gc, gd],
        loss: Box::new(move |v| {
            let params = ConvDWParams {
                depthwise_kernel: v[1].clone(),
                depthwise_bias: v[2].clone(),
                pointwise_kernel: v[3].clone(),
                pointwise_bias: v[4].clone(),
            };
            projection(&dwsep_block_fwd(&v[0], params.as_ref(), activation).unwrap().0, &r)
        }),
    }
}

pub fn random_target(n: usize, rng: &mut impl Rng) -> Vec<u8> {
    (0..n).map(|_| rng.random_range(0..3u8)).collect()
}

pub fn ce_problem(rng: &mut impl Rng) -> Problem {
    let logits = random_tensor(shape(2, 3, 8, 8), rng).scale(3.0);
    let target = random_target(2 * 64, rng);
    let (_, g) = ce_loss(&logits, &target).unwrap();
    Problem {
        name: "cross_entropy".into(),
        inputs: named(vec![("logits", logits)]),
        grads: vec![g],
        loss: Box::new(move |v| ce_loss(&v[0], &target).unwrap().0),
    }
}

/// The whole network on a `(2, 3, 8, 8)` input under cross-entropy, wrt
/// the input and every parameter tensor.
pub fn model_problem(config: ArchConfig, seed: u64, rng: &mut impl Rng) -> Problem {
    let params: ModelParams<f64> = biolite_core::model::build(config, seed).unwrap().cast();
    let x = random_tensor(shape(2, config.in_channels, 8, 8), rng);
    let target = random_target(2 * 64, rng);
    let (y, cache) = forward_cached(&params, &x).unwrap();
    let (_, dlogits) = ce_loss(&y, &target).unwrap();
    let (grads, dx) = backward_with_input(&params, &cache, &dlogits).unwrap();

    let mut inputs = vec![("input".to_string(), x)];
    let mut g = vec![dx];
    for (p, gp) in params.params().iter().zip(grads.params()) {
        inputs.push((p.name.clone(), p.tensor.clone()));
        g.push(gp.tensor.clone());
    }
    let template = params.clone();
    Problem {
        name: "full model".into(),
        inputs,
        grads: g,
        loss: Box::new(move |v| {
            let mut p = template.clone();
            for (slot, t) in p.params_mut().iter_mut().zip(&v[1..]) {
                slot.tensor = t.clone();
            }
            let y = biolite_core::model::forward(&p, &v[0]).unwrap();
            ce_loss(&y, &target).unwrap().0
        }),
    }
}

/// Every layer problem, in a fixed order.
pub fn layer_problems(rng: &mut impl Rng) -> Vec<Problem> {
    vec![
        depthwise_problem(rng),
        pointwise_problem(rng),
        relu_problem(rng),
        maxpool_problem(rng),
        upsample_problem(rng),
        dwsep_problem(Activation::Relu, rng),
        dwsep_problem(Activation::Identity, rng),
        ce_problem(rng),
    ]
}

/// Synthetic frames split into (train, val, test) by the seeded split.
pub fn synth_splits(
    n: usize,
    difficulty: Difficulty,
    seed: u64,
    size: u32,
) -> (Vec<LabeledFrame>, Vec<LabeledFrame>, Vec<LabeledFrame>) {
    let frames: Vec<LabeledFrame> = generate_dataset(n, difficulty, seed, size)
        .unwrap()
        .into_iter()
        .map(|s| s.frame)
        .collect();
    let ids: Vec<&str> = frames.iter().map(|f| f.id.as_str()).collect();
    let s = split(&ids, seed).unwrap();
    let pick = |v: &[String]| -> Vec<LabeledFrame> {
        frames.iter().filter(|f| v.contains(&f.id)).cloned().collect()
    };
    (pick(&s.train), pick(&s.val), pick(&s.test))
}
