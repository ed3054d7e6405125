//! The two building blocks of the encoder-decoder.
//!
//! [`Mod1`] is two `conv → batchnorm → relu` stages. [`Mod2`] first upsamples
//! its input ×2 and concatenates the encoder skip tensor (upsampled channels
//! first), then applies the same two stages.

use crate::error::{Error, Result};
use crate::layers::{
    upsample2d, upsample2d_backward, Activation, BatchNorm, BatchNormCache, Conv2d, Mode,
};
use crate::rng::Rng;
use crate::tensor::{Scalar, Tensor};

use super::params::{Gradients, Slot};

pub const KERNEL: usize = 3;

#[derive(Clone, Debug, PartialEq)]
pub struct ConvStage<T: Scalar = f32> {
    pub conv: Conv2d<T>,
    pub bn: BatchNorm<T>,
}

#[derive(Clone, Debug)]
pub struct StageCache<T: Scalar> {
    input: Tensor<T>,
    bn: BatchNormCache<T>,
    output: Tensor<T>,
}

impl<T: Scalar> ConvStage<T> {
    pub fn new(in_channels: usize, filters: usize, rng: &mut Rng) -> Result<Self> {
        Ok(Self {
            conv: Conv2d::new(KERNEL, in_channels, filters, rng)?,
            bn: BatchNorm::new(filters)?,
        })
    }

    pub fn forward_train(&mut self, x: &Tensor<T>) -> Result<(Tensor<T>, StageCache<T>)> {
        let z = self.conv.forward(x)?;
        let (n, bn) = self.bn.forward_train(&z)?;
        let output = Activation::Relu.forward(&n);
        Ok((
            output.clone(),
            StageCache {
                input: x.clone(),
                bn,
                output,
            },
        ))
    }

    pub fn forward_infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let z = self.conv.forward(x)?;
        Ok(Activation::Relu.forward(&self.bn.forward_infer(&z)?))
    }

    fn backward(&self, cache: &StageCache<T>, upstream: &Tensor<T>, prefix: &str, grads: &mut Gradients<T>) -> Result<Tensor<T>> {
        let d_norm = Activation::Relu.backward(&cache.output, upstream);
        let bn = self.bn.backward(&cache.bn, &d_norm)?;
        let conv = self.conv.backward(&cache.input, &bn.input)?;
        grads.push(format!("{prefix}.conv.weight"), conv.weight);
        grads.push(format!("{prefix}.conv.bias"), conv.bias);
        grads.push(format!("{prefix}.bn.gamma"), bn.gamma);
        grads.push(format!("{prefix}.bn.beta"), bn.beta);
        Ok(conv.input)
    }

    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, Slot, &'a Tensor<T>)) {
        f(format!("{prefix}.conv.weight"), Slot::Param, &self.conv.weight);
        f(format!("{prefix}.conv.bias"), Slot::Param, &self.conv.bias);
        f(format!("{prefix}.bn.gamma"), Slot::Param, &self.bn.gamma);
        f(format!("{prefix}.bn.beta"), Slot::Param, &self.bn.beta);
        f(format!("{prefix}.bn.running_mean"), Slot::Buffer, &self.bn.running_mean);
        f(format!("{prefix}.bn.running_var"), Slot::Buffer, &self.bn.running_var);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, Slot, &'a mut Tensor<T>)) {
        f(format!("{prefix}.conv.weight"), Slot::Param, &mut self.conv.weight);
        f(format!("{prefix}.conv.bias"), Slot::Param, &mut self.conv.bias);
        f(format!("{prefix}.bn.gamma"), Slot::Param, &mut self.bn.gamma);
        f(format!("{prefix}.bn.beta"), Slot::Param, &mut self.bn.beta);
        f(format!("{prefix}.bn.running_mean"), Slot::Buffer, &mut self.bn.running_mean);
        f(format!("{prefix}.bn.running_var"), Slot::Buffer, &mut self.bn.running_var);
    }
}

/// Two `conv → batchnorm → relu` stages producing `filters` channels.
#[derive(Clone, Debug, PartialEq)]
pub struct Mod1<T: Scalar = f32> {
    pub stages: [ConvStage<T>; 2],
}

#[derive(Clone, Debug)]
pub struct Mod1Cache<T: Scalar>([StageCache<T>; 2]);

impl<T: Scalar> Mod1<T> {
    pub fn new(in_channels: usize, filters: usize, rng: &mut Rng) -> Result<Self> {
        let first = ConvStage::new(in_channels, filters, rng)?;
        let second = ConvStage::new(filters, filters, rng)?;
        Ok(Self {
            stages: [first, second],
        })
    }

    pub fn in_channels(&self) -> usize {
        self.stages[0].conv.in_channels()
    }

    pub fn filters(&self) -> usize {
        self.stages[1].conv.filters()
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<(Tensor<T>, Option<Mod1Cache<T>>)> {
        match mode {
            Mode::Train => {
                let (y, c0) = self.stages[0].forward_train(x)?;
                let (y, c1) = self.stages[1].forward_train(&y)?;
                Ok((y, Some(Mod1Cache([c0, c1]))))
            }
            Mode::Infer => Ok((self.forward_infer(x)?, None)),
        }
    }

    pub fn forward_infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let y = self.stages[0].forward_infer(x)?;
        self.stages[1].forward_infer(&y)
    }

    /// Pushes this block's parameter gradients and returns the input gradient.
    pub fn backward(&self, cache: &Mod1Cache<T>, upstream: &Tensor<T>, prefix: &str, grads: &mut Gradients<T>) -> Result<Tensor<T>> {
        // Gradients are pushed in parameter order, so run stage 0's backward last
        // but record stage 1's entries after it.
        let mut late = Gradients::default();
        let d = self.stages[1].backward(&cache.0[1], upstream, &format!("{prefix}.1"), &mut late)?;
        let d = self.stages[0].backward(&cache.0[0], &d, &format!("{prefix}.0"), grads)?;
        grads.extend(late);
        Ok(d)
    }

    pub(crate) fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, Slot, &'a Tensor<T>)) {
        self.stages[0].visit(&format!("{prefix}.0"), f);
        self.stages[1].visit(&format!("{prefix}.1"), f);
    }

    pub(crate) fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, Slot, &'a mut Tensor<T>)) {
        let [first, second] = &mut self.stages;
        first.visit_mut(&format!("{prefix}.0"), f);
        second.visit_mut(&format!("{prefix}.1"), f);
    }
}

/// Upsample ×2, concatenate the skip tensor, then a [`Mod1`] body.
#[derive(Clone, Debug, PartialEq)]
pub struct Mod2<T: Scalar = f32> {
    pub body: Mod1<T>,
    skip_channels: usize,
}

#[derive(Clone, Debug)]
pub struct Mod2Cache<T: Scalar> {
    up_channels: usize,
    body: Mod1Cache<T>,
}

impl<T: Scalar> Mod2<T> {
    pub fn new(in_channels: usize, skip_channels: usize, filters: usize, rng: &mut Rng) -> Result<Self> {
        Ok(Self {
            body: Mod1::new(in_channels + skip_channels, filters, rng)?,
            skip_channels,
        })
    }

    pub fn skip_channels(&self) -> usize {
        self.skip_channels
    }

    fn join(&self, x: &Tensor<T>, skip: &Tensor<T>) -> Result<Tensor<T>> {
        let up = upsample2d(x)?;
        let (n, h, w, _) = up.nhwc()?;
        let (sn, sh, sw, _) = skip.nhwc()?;
        if (n, h, w) != (sn, sh, sw) {
            return Err(Error::ShapeMismatch(format!(
                "upsampled input {:?} does not match skip {:?}",
                up.shape(),
                skip.shape()
            )));
        }
        up.concat_channels(skip)
    }

    pub fn forward(&mut self, x: &Tensor<T>, skip: &Tensor<T>, mode: Mode) -> Result<(Tensor<T>, Option<Mod2Cache<T>>)> {
        let joined = self.join(x, skip)?;
        let up_channels = x.nhwc()?.3;
        let (y, body) = self.body.forward(&joined, mode)?;
        Ok((y, body.map(|body| Mod2Cache { up_channels, body })))
    }

    pub fn forward_infer(&self, x: &Tensor<T>, skip: &Tensor<T>) -> Result<Tensor<T>> {
        self.body.forward_infer(&self.join(x, skip)?)
    }

    /// Returns `(input gradient, skip gradient)`.
    pub fn backward(&self, cache: &Mod2Cache<T>, upstream: &Tensor<T>, prefix: &str, grads: &mut Gradients<T>) -> Result<(Tensor<T>, Tensor<T>)> {
        let d_joined = self.body.backward(&cache.body, upstream, prefix, grads)?;
        let (d_up, d_skip) = d_joined.split_channels(cache.up_channels)?;
        Ok((upsample2d_backward(&d_up)?, d_skip))
    }

    pub(crate) fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, Slot, &'a Tensor<T>)) {
        self.body.visit(prefix, f);
    }

    pub(crate) fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, Slot, &'a mut Tensor<T>)) {
        self.body.visit_mut(prefix, f);
    }
}
