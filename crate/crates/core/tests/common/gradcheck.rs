//! Central finite-difference checks in f64.

use cardioseg::layers::{maxpool2d, maxpool2d_backward, upsample2d, upsample2d_backward, Activation, BatchNorm, Conv2d, Dropout};
use cardioseg::network::build_model;
use cardioseg::training::{cross_entropy_loss, one_hot};
use cardioseg::{Mode, Model, ModelConfig, Rng, Tensor};

pub const STEP: f64 = 1e-5;
/// Magnitudes below this count as this when forming relative errors, so
/// gradients that are analytically zero are compared in absolute terms.
pub const FLOOR: f64 = 1e-6;
pub const LAYER_TOL: f64 = 1e-4;
pub const MODEL_TOL: f64 = 1e-3;

#[derive(Debug)]
pub struct GradCheck {
    pub name: String,
    pub max_rel: f64,
    pub entries: usize,
    pub tol: f64,
}

impl GradCheck {
    pub fn passed(&self) -> bool {
        self.max_rel < self.tol
    }
}

pub fn rel_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(FLOOR)
}

/// `(f(x + h e_i) - f(x - h e_i)) / 2h` for every entry `i`.
pub fn numeric_grad(x: &Tensor<f64>, mut f: impl FnMut(&Tensor<f64>) -> f64) -> Vec<f64> {
    let mut probe = x.clone();
    (0..x.len())
        .map(|i| {
            let orig = probe.data()[i];
            probe.data_mut()[i] = orig + STEP;
            let up = f(&probe);
            probe.data_mut()[i] = orig - STEP;
            let down = f(&probe);
            probe.data_mut()[i] = orig;
            (up - down) / (2.0 * STEP)
        })
        .collect()
}

fn compare(name: &str, analytic: &Tensor<f64>, numeric: &[f64], tol: f64) -> GradCheck {
    assert_eq!(analytic.len(), numeric.len(), "{name}: gradient size");
    let max_rel = analytic
        .data()
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| rel_error(a, n))
        .fold(0.0, f64::max);
    GradCheck {
        name: name.to_owned(),
        max_rel,
        entries: numeric.len(),
        tol,
    }
}

fn random(shape: &[usize], rng: &mut Rng) -> Tensor<f64> {
    Tensor::he_normal(shape, 2, rng).unwrap()
}

/// Random values kept at least `gap` away from zero (away from ReLU's kink).
fn away_from_zero(shape: &[usize], gap: f64, rng: &mut Rng) -> Tensor<f64> {
    random(shape, rng).map(|v| if v >= 0.0 { v + gap } else { v - gap })
}

fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

pub fn conv_checks() -> Vec<GradCheck> {
    let mut rng = Rng::new(100);
    let mut conv = Conv2d::<f64>::new(3, 3, 4, &mut rng).unwrap();
    conv.bias = random(&[4], &mut rng);
    let x = random(&[2, 5, 6, 3], &mut rng);
    let r = random(&[2, 5, 6, 4], &mut rng);
    let g = conv.backward(&x, &r).unwrap();

    let dx = numeric_grad(&x, |x| dot(&conv.forward(x).unwrap(), &r));
    let dw = numeric_grad(&conv.weight, |w| {
        let c = Conv2d::from_parts(w.clone(), conv.bias.clone()).unwrap();
        dot(&c.forward(&x).unwrap(), &r)
    });
    let db = numeric_grad(&conv.bias, |b| {
        let c = Conv2d::from_parts(conv.weight.clone(), b.clone()).unwrap();
        dot(&c.forward(&x).unwrap(), &r)
    });
    vec![
        compare("conv2d input", &g.input, &dx, LAYER_TOL),
        compare("conv2d weight", &g.weight, &dw, LAYER_TOL),
        compare("conv2d bias", &g.bias, &db, LAYER_TOL),
    ]
}

pub fn batchnorm_checks() -> Vec<GradCheck> {
    let mut rng = Rng::new(101);
    let mut bn = BatchNorm::<f64>::new(3).unwrap();
    bn.gamma = random(&[3], &mut rng);
    bn.beta = random(&[3], &mut rng);
    let x = random(&[2, 3, 4, 3], &mut rng);
    let r = random(&[2, 3, 4, 3], &mut rng);
    let (_, cache) = bn.clone().forward_train(&x).unwrap();
    let g = bn.backward(&cache, &r).unwrap();

    let objective = |bn: &BatchNorm<f64>, x: &Tensor<f64>| dot(&bn.clone().forward_train(x).unwrap().0, &r);
    let dx = numeric_grad(&x, |x| objective(&bn, x));
    let dgamma = numeric_grad(&bn.gamma, |gm| objective(&BatchNorm { gamma: gm.clone(), ..bn.clone() }, &x));
    let dbeta = numeric_grad(&bn.beta, |bt| objective(&BatchNorm { beta: bt.clone(), ..bn.clone() }, &x));
    vec![
        compare("batchnorm input", &g.input, &dx, LAYER_TOL),
        compare("batchnorm gamma", &g.gamma, &dgamma, LAYER_TOL),
        compare("batchnorm beta", &g.beta, &dbeta, LAYER_TOL),
    ]
}

pub fn activation_checks() -> Vec<GradCheck> {
    let mut rng = Rng::new(102);
    let mut out = Vec::new();
    for (act, name) in [(Activation::Relu, "relu"), (Activation::Sigmoid, "sigmoid")] {
        let x = away_from_zero(&[2, 3, 3, 2], 0.05, &mut rng);
        let r = random(&[2, 3, 3, 2], &mut rng);
        let analytic = act.backward(&act.forward(&x), &r);
        let numeric = numeric_grad(&x, |x| dot(&act.forward(x), &r));
        out.push(compare(name, &analytic, &numeric, LAYER_TOL));
    }
    out
}

pub fn pooling_checks() -> Vec<GradCheck> {
    let mut rng = Rng::new(103);
    let x = random(&[2, 4, 6, 3], &mut rng);
    let r = random(&[2, 2, 3, 3], &mut rng);
    let (_, idx) = maxpool2d(&x).unwrap();
    let pool = compare(
        "maxpool2d",
        &maxpool2d_backward(&idx, &r).unwrap(),
        &numeric_grad(&x, |x| dot(&maxpool2d(x).unwrap().0, &r)),
        LAYER_TOL,
    );

    let x = random(&[2, 3, 2, 2], &mut rng);
    let r = random(&[2, 6, 4, 2], &mut rng);
    let up = compare(
        "upsample2d",
        &upsample2d_backward(&r).unwrap(),
        &numeric_grad(&x, |x| dot(&upsample2d(x).unwrap(), &r)),
        LAYER_TOL,
    );
    vec![pool, up]
}

pub fn dropout_check() -> GradCheck {
    let mut rng = Rng::new(104);
    let x = random(&[2, 4, 4, 3], &mut rng);
    let r = random(&[2, 4, 4, 3], &mut rng);
    let layer = Dropout::new(0.5, Rng::new(5)).unwrap();
    let (_, mask) = layer.clone().forward_train(&x).unwrap();
    // Cloning the layer replays its generator, so every evaluation draws the same mask.
    let numeric = numeric_grad(&x, |x| dot(&layer.clone().forward_train(x).unwrap().0, &r));
    compare("dropout (fixed mask)", &mask.backward(&r).unwrap(), &numeric, LAYER_TOL)
}

fn random_target(shape: &[usize], rng: &mut Rng) -> Tensor<f64> {
    let mask = Tensor::from_vec(shape, (0..shape.iter().product()).map(|_| f64::from(rng.uniform() < 0.4)).collect()).unwrap();
    one_hot(&mask).unwrap()
}

pub fn loss_check() -> GradCheck {
    let mut rng = Rng::new(105);
    let y = random_target(&[2, 3, 3], &mut rng);
    let yh = Tensor::from_vec(&[2, 3, 3, 2], (0..36).map(|_| rng.range(0.05, 0.95)).collect()).unwrap();
    let (_, grad) = cross_entropy_loss(&y, &yh).unwrap();
    let numeric = numeric_grad(&yh, |p| cross_entropy_loss(&y, p).unwrap().0);
    compare("cross-entropy loss", &grad, &numeric, LAYER_TOL)
}

pub fn all_layer_checks() -> Vec<GradCheck> {
    let mut v = conv_checks();
    v.extend(batchnorm_checks());
    v.extend(activation_checks());
    v.extend(pooling_checks());
    v.push(dropout_check());
    v.push(loss_check());
    v
}

/// Whole-model check: nf 2, depth 2, three input channels, batch of two 16×16
/// inputs, train mode with dropout, loss included. Returns one entry for the
/// input gradient and one covering every parameter.
pub fn model_checks() -> Vec<GradCheck> {
    let cfg = ModelConfig {
        nf: 2,
        ch: 3,
        depth: 2,
        seed: 21,
        ..Default::default()
    };
    let mut rng = Rng::new(106);
    let base: Model<f64> = build_model(&cfg, &mut Rng::new(21)).unwrap();
    let x = random(&[2, 16, 16, 3], &mut rng);
    let y = random_target(&[2, 16, 16], &mut rng);

    // Every evaluation starts from a clone of `base`, so dropout masks and
    // batch statistics are recomputed identically.
    let loss_of = |m: &Model<f64>, x: &Tensor<f64>| {
        let mut m = m.clone();
        let out = m.forward(x, Mode::Train).unwrap();
        cross_entropy_loss(&y, &out).unwrap().0
    };
    let mut m = base.clone();
    let out = m.forward(&x, Mode::Train).unwrap();
    let (_, upstream) = cross_entropy_loss(&y, &out).unwrap();
    let grads = m.backward(&upstream).unwrap();

    let mut checks = vec![compare("model input", &grads.input, &numeric_grad(&x, |x| loss_of(&base, x)), MODEL_TOL)];
    let names: Vec<String> = base.params().into_iter().map(|(n, _)| n).collect();
    let (mut analytic, mut numeric) = (Vec::new(), Vec::new());
    for (i, name) in names.iter().enumerate() {
        let g = grads.params.get(name).unwrap_or_else(|| panic!("no gradient for {name}"));
        let p = base.params()[i].1.clone();
        analytic.extend_from_slice(g.data());
        numeric.extend(numeric_grad(&p, |p| {
            let mut probe = base.clone();
            *probe.params_mut()[i] = p.clone();
            loss_of(&probe, &x)
        }));
    }
    let all = Tensor::from_vec(&[analytic.len()], analytic).unwrap();
    checks.push(compare(&format!("model parameters ({} tensors)", names.len()), &all, &numeric, MODEL_TOL));
    checks
}
