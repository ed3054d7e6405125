use crate::error::{Error, Result};
use crate::layers::{maxpool2d, maxpool2d_backward, Activation, Conv2d, Dropout, DropoutMask, Mode, PoolIndices};
use crate::rng::Rng;
use crate::tensor::{Scalar, Tensor};

use super::blocks::{Mod1, Mod1Cache, Mod2, Mod2Cache};
use super::config::ModelConfig;
use super::params::{Gradients, Slot};

/// RNG stream reserved for dropout masks, separate from initialization.
const DROPOUT_STREAM: u64 = 0xD0;

/// Encoder-decoder FCN: `depth` [`Mod1`] encoder levels with 2×2 max pooling,
/// a [`Mod1`] bottleneck followed by dropout, `depth` mirrored [`Mod2`]
/// decoder levels consuming the encoder skips, and a 1×1 convolution head with
/// a sigmoid per class channel.
#[derive(Clone, Debug)]
pub struct Model<T: Scalar = f32> {
    config: ModelConfig,
    pub encoders: Vec<Mod1<T>>,
    pub bottleneck: Mod1<T>,
    pub dropout: Dropout,
    /// `decoders[l]` consumes the skip saved by `encoders[l]`.
    pub decoders: Vec<Mod2<T>>,
    pub head: Conv2d<T>,
    cache: Option<ForwardCache<T>>,
}

#[derive(Clone, Debug)]
struct ForwardCache<T: Scalar> {
    input_shape: Vec<usize>,
    encoders: Vec<(Mod1Cache<T>, PoolIndices)>,
    bottleneck: Mod1Cache<T>,
    dropout: DropoutMask<T>,
    /// Indexed by decoder level.
    decoders: Vec<Mod2Cache<T>>,
    head_input: Tensor<T>,
    output: Tensor<T>,
}

/// Result of [`Model::backward`].
#[derive(Clone, Debug)]
pub struct ModelGrad<T: Scalar> {
    pub params: Gradients<T>,
    pub input: Tensor<T>,
}

/// Builds a model with deterministic He initialization drawn from `rng`.
pub fn build_model<T: Scalar>(config: &ModelConfig, rng: &mut Rng) -> Result<Model<T>> {
    config.validate()?;
    let mut encoders = Vec::with_capacity(config.depth);
    let mut in_ch = config.ch;
    for level in 0..config.depth {
        let f = config.filters_at(level);
        encoders.push(Mod1::new(in_ch, f, rng)?);
        in_ch = f;
    }
    let bottleneck = Mod1::new(in_ch, config.filters_at(config.depth), rng)?;
    let mut decoders = Vec::with_capacity(config.depth);
    let mut below = bottleneck.filters();
    let mut reversed = Vec::with_capacity(config.depth);
    for level in (0..config.depth).rev() {
        let f = config.filters_at(level);
        reversed.push(Mod2::new(below, f, f, rng)?);
        below = f;
    }
    decoders.extend(reversed.into_iter().rev());
    let head = Conv2d::new(1, config.nf, config.num_classes, rng)?;
    Ok(Model {
        dropout: Dropout::new(config.dropout_rate, Rng::derive(config.seed, DROPOUT_STREAM))?,
        config: config.clone(),
        encoders,
        bottleneck,
        decoders,
        head,
        cache: None,
    })
}

impl<T: Scalar> Model<T> {
    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        let (_, h, w, c) = x.nhwc()?;
        if c != self.config.ch {
            return Err(Error::InvalidInput(format!(
                "model expects {} input channels, got {c}",
                self.config.ch
            )));
        }
        self.config.check_spatial(h, w)
    }

    /// Shape of the output for an input of `input_shape`, without computing it.
    pub fn output_shape(&self, input_shape: &[usize]) -> Result<Vec<usize>> {
        let (h, w, c) = match *input_shape {
            [h, w, c] | [_, h, w, c] => (h, w, c),
            _ => return Err(Error::ShapeMismatch(format!("bad input shape {input_shape:?}"))),
        };
        if c != self.config.ch {
            return Err(Error::InvalidInput(format!(
                "model expects {} input channels, got {c}",
                self.config.ch
            )));
        }
        self.config.check_spatial(h, w)?;
        // Walk channel counts through the blocks to validate the wiring.
        let mut ch = c;
        for enc in &self.encoders {
            if enc.in_channels() != ch {
                return Err(Error::ShapeMismatch("encoder wiring is inconsistent".into()));
            }
            ch = enc.filters();
        }
        if self.bottleneck.in_channels() != ch {
            return Err(Error::ShapeMismatch("bottleneck wiring is inconsistent".into()));
        }
        ch = self.bottleneck.filters();
        for (dec, enc) in self.decoders.iter().zip(&self.encoders).rev() {
            if dec.body.in_channels() != ch + enc.filters() || dec.skip_channels() != enc.filters() {
                return Err(Error::ShapeMismatch("decoder wiring is inconsistent".into()));
            }
            ch = dec.body.filters();
        }
        if self.head.in_channels() != ch {
            return Err(Error::ShapeMismatch("head wiring is inconsistent".into()));
        }
        let mut shape = input_shape.to_vec();
        *shape.last_mut().unwrap() = self.head.filters();
        Ok(shape)
    }

    /// Runs the network. `Train` uses batch statistics and dropout, updates the
    /// running statistics and records what [`Model::backward`] needs; `Infer`
    /// clears any recorded state.
    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        match mode {
            Mode::Infer => {
                self.cache = None;
                self.forward_infer(x)
            }
            Mode::Train => self.forward_train(x),
        }
    }

    /// Inference pass with running statistics; never mutates the model.
    pub fn forward_infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let mut skips = Vec::with_capacity(self.encoders.len());
        let mut h = x.clone();
        for enc in &self.encoders {
            let s = enc.forward_infer(&h)?;
            h = maxpool2d(&s)?.0;
            skips.push(s);
        }
        h = self.bottleneck.forward_infer(&h)?;
        h = self.dropout.forward_infer(&h);
        for (dec, skip) in self.decoders.iter().zip(&skips).rev() {
            h = dec.forward_infer(&h, skip)?;
        }
        Ok(Activation::Sigmoid.forward(&self.head.forward(&h)?))
    }

    fn forward_train(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x)?;
        self.cache = None;
        let mut skips = Vec::with_capacity(self.encoders.len());
        let mut enc_caches = Vec::with_capacity(self.encoders.len());
        let mut h = x.clone();
        for enc in &mut self.encoders {
            let (s, cache) = enc.forward(&h, Mode::Train)?;
            let (pooled, idx) = maxpool2d(&s)?;
            enc_caches.push((cache.ok_or(Error::MissingForwardState)?, idx));
            skips.push(s);
            h = pooled;
        }
        let (b, bottleneck) = self.bottleneck.forward(&h, Mode::Train)?;
        let (mut h, dropout) = self.dropout.forward_train(&b)?;
        let mut dec_caches = Vec::with_capacity(self.decoders.len());
        for (dec, skip) in self.decoders.iter_mut().zip(&skips).rev() {
            let (y, cache) = dec.forward(&h, skip, Mode::Train)?;
            dec_caches.push(cache.ok_or(Error::MissingForwardState)?);
            h = y;
        }
        dec_caches.reverse();
        let output = Activation::Sigmoid.forward(&self.head.forward(&h)?);
        self.cache = Some(ForwardCache {
            input_shape: x.shape().to_vec(),
            encoders: enc_caches,
            bottleneck: bottleneck.ok_or(Error::MissingForwardState)?,
            dropout,
            decoders: dec_caches,
            head_input: h,
            output: output.clone(),
        });
        Ok(output)
    }

    /// Backpropagates `upstream = dL/d(output)` through the last train-mode
    /// forward pass. The recorded state is consumed.
    pub fn backward(&mut self, upstream: &Tensor<T>) -> Result<ModelGrad<T>> {
        let cache = self.cache.take().ok_or(Error::MissingForwardState)?;
        if upstream.shape() != cache.output.shape() {
            return Err(Error::ShapeMismatch(format!(
                "upstream gradient {:?} does not match output {:?}",
                upstream.shape(),
                cache.output.shape()
            )));
        }
        let depth = self.encoders.len();
        let d_logits = Activation::Sigmoid.backward(&cache.output, upstream);
        let head = self.head.backward(&cache.head_input, &d_logits)?;

        let mut dec_grads: Vec<Gradients<T>> = vec![Gradients::default(); depth];
        let mut skip_grads: Vec<Option<Tensor<T>>> = vec![None; depth];
        let mut d = head.input;
        for level in 0..depth {
            let (dx, dskip) = self.decoders[level].backward(
                &cache.decoders[level],
                &d,
                &format!("dec{level}"),
                &mut dec_grads[level],
            )?;
            skip_grads[level] = Some(dskip);
            d = dx;
        }
        d = cache.dropout.backward(&d)?;
        let mut bottleneck_grads = Gradients::default();
        d = self.bottleneck.backward(&cache.bottleneck, &d, "bottleneck", &mut bottleneck_grads)?;

        let mut enc_grads: Vec<Gradients<T>> = vec![Gradients::default(); depth];
        for level in (0..depth).rev() {
            let (enc_cache, idx) = &cache.encoders[level];
            let mut ds = maxpool2d_backward(idx, &d)?;
            if let Some(skip) = &skip_grads[level] {
                ds.add_assign(skip)?;
            }
            d = self.encoders[level].backward(enc_cache, &ds, &format!("enc{level}"), &mut enc_grads[level])?;
        }
        debug_assert_eq!(d.shape(), cache.input_shape.as_slice());

        // Assemble in parameter order: encoders, bottleneck, decoders, head.
        let mut params = Gradients::default();
        enc_grads.into_iter().for_each(|g| params.extend(g));
        params.extend(bottleneck_grads);
        dec_grads.into_iter().for_each(|g| params.extend(g));
        params.push("head.weight".into(), head.weight);
        params.push("head.bias".into(), head.bias);
        Ok(ModelGrad { params, input: d })
    }

    pub fn has_forward_state(&self) -> bool {
        self.cache.is_some()
    }

    /// Visits every tensor (parameters and buffers) in canonical order.
    pub fn visit<'a>(&'a self, f: &mut dyn FnMut(String, Slot, &'a Tensor<T>)) {
        for (i, enc) in self.encoders.iter().enumerate() {
            enc.visit(&format!("enc{i}"), f);
        }
        self.bottleneck.visit("bottleneck", f);
        for (i, dec) in self.decoders.iter().enumerate() {
            dec.visit(&format!("dec{i}"), f);
        }
        f("head.weight".into(), Slot::Param, &self.head.weight);
        f("head.bias".into(), Slot::Param, &self.head.bias);
    }

    pub fn visit_mut<'a>(&'a mut self, f: &mut dyn FnMut(String, Slot, &'a mut Tensor<T>)) {
        for (i, enc) in self.encoders.iter_mut().enumerate() {
            enc.visit_mut(&format!("enc{i}"), f);
        }
        self.bottleneck.visit_mut("bottleneck", f);
        for (i, dec) in self.decoders.iter_mut().enumerate() {
            dec.visit_mut(&format!("dec{i}"), f);
        }
        f("head.weight".into(), Slot::Param, &mut self.head.weight);
        f("head.bias".into(), Slot::Param, &mut self.head.bias);
    }

    /// Trainable parameters in canonical order.
    pub fn params(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        self.visit(&mut |name, slot, t| {
            if slot == Slot::Param {
                out.push((name, t));
            }
        });
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = Vec::new();
        self.visit_mut(&mut |_, slot, t| {
            if slot == Slot::Param {
                out.push(t);
            }
        });
        out
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|(_, t)| t.len()).sum()
    }

    /// Copies every tensor into a model of another precision.
    pub fn cast<U: Scalar>(&self) -> Model<U> {
        let mut rng = Rng::new(self.config.seed);
        let mut out: Model<U> = build_model(&self.config, &mut rng).expect("config already validated");
        let mut src = Vec::new();
        self.visit(&mut |_, _, t| src.push(t.cast::<U>()));
        let mut it = src.into_iter();
        out.visit_mut(&mut |_, _, t| *t = it.next().expect("identical structure"));
        out.dropout = self.dropout.clone();
        out
    }
}
