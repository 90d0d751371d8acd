use super::network::Network;
use super::params::Grads;
use crate::error::{Error, Result};
use crate::relevance::RelevanceMask;
use crate::tensor::Real;

/// Stochastic gradient descent with momentum and L2 weight decay, optionally
/// restricted to the entries selected by a [`RelevanceMask`].
///
/// Entries outside the mask are never written, and neither is their
/// momentum buffer.
#[derive(Debug, Clone)]
pub struct Sgd<F> {
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: Vec<Vec<F>>,
}

impl<F: Real> Sgd<F> {
    pub fn new(momentum: f64, weight_decay: f64) -> Self {
        Sgd {
            momentum,
            weight_decay,
            velocity: Vec::new(),
        }
    }

    pub fn plain() -> Self {
        Self::new(0.0, 0.0)
    }

    pub fn step(
        &mut self,
        net: &mut Network<F>,
        grads: &Grads<F>,
        mask: Option<&RelevanceMask>,
        lr: f64,
    ) -> Result<()> {
        let params = net.params();
        if grads.tensors.len() != params.len()
            || grads
                .tensors
                .iter()
                .zip(params.iter())
                .any(|(g, (_, p))| g.shape() != p.shape())
        {
            return Err(Error::Mask("gradient layout does not match the model".into()));
        }
        if let Some(mask) = mask {
            mask.check_layout(params)?;
        }
        if self.velocity.is_empty() {
            self.velocity = params.iter().map(|(_, t)| vec![F::ZERO; t.len()]).collect();
        }
        let lr = F::from_f64(lr);
        let mom = F::from_f64(self.momentum);
        let wd = F::from_f64(self.weight_decay);
        let use_momentum = self.momentum != 0.0;
        let use_wd = self.weight_decay != 0.0;
        for (i, g) in grads.tensors.iter().enumerate() {
            let sel = mask.map(|m| m.tensor(i));
            if sel.is_some_and(|s| !s.iter().any(|&b| b)) {
                continue;
            }
            let vel = &mut self.velocity[i];
            let theta = net.param_data_mut(i);
            for (j, (&gj, p)) in g.data().iter().zip(theta.iter_mut()).enumerate() {
                if let Some(s) = sel {
                    if !s[j] {
                        continue;
                    }
                }
                let mut d = gj;
                if use_wd {
                    d += wd * *p;
                }
                if use_momentum {
                    vel[j] = mom * vel[j] + d;
                    d = vel[j];
                }
                *p -= lr * d;
            }
        }
        Ok(())
    }
}

/// One plain descent step `theta -= lr * g` on the masked entries.
pub fn apply_masked_gradient<F: Real>(
    net: &mut Network<F>,
    grads: &Grads<F>,
    mask: &RelevanceMask,
    lr: f64,
) -> Result<()> {
    Sgd::plain().step(net, grads, Some(mask), lr)
}

/// Copy of `net` with every masked entry set to exactly zero.
pub fn zero_params<F: Real>(net: &Network<F>, mask: &RelevanceMask) -> Result<Network<F>> {
    mask.check_layout(net.params())?;
    let mut out = net.clone();
    for i in 0..mask.len() {
        let sel = mask.tensor(i);
        for (p, &s) in out.param_data_mut(i).iter_mut().zip(sel) {
            if s {
                *p = F::ZERO;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Architecture, MicroCnn};

    fn grads_of(net: &Network<f32>, value: f32) -> Grads<f32> {
        let mut g = Grads::zeros_for(net.params());
        for t in &mut g.tensors {
            t.data_mut().fill(value);
        }
        g
    }

    #[test]
    fn masked_step_touches_only_selected_entries() {
        let net = MicroCnn.build(3, 1);
        let mut mask = RelevanceMask::none(net.params());
        mask.tensor_mut(0)[3] = true;
        mask.tensor_mut(net.params().len() - 1)[1] = true;
        let mut after = net.clone();
        let mut opt = Sgd::new(0.9, 0.0);
        for _ in 0..3 {
            opt.step(&mut after, &grads_of(&net, 0.5), Some(&mask), 0.1).unwrap();
        }
        for t in 0..mask.len() {
            for (j, (a, b)) in net.params().tensor(t).data().iter().zip(after.params().tensor(t).data()).enumerate() {
                if mask.tensor(t)[j] {
                    assert_ne!(a, b);
                } else {
                    assert_eq!(a.to_bits(), b.to_bits());
                }
            }
        }
    }

    #[test]
    fn momentum_accumulates() {
        let net = MicroCnn.build(3, 2);
        let mut after = net.clone();
        let mut opt = Sgd::new(0.9, 0.0);
        opt.step(&mut after, &grads_of(&net, 1.0), None, 0.1).unwrap();
        opt.step(&mut after, &grads_of(&net, 1.0), None, 0.1).unwrap();
        let (a, b) = (net.params().tensor(0).data()[0], after.params().tensor(0).data()[0]);
        assert!((f64::from(a - b) - 0.1 * (1.0 + 1.9)).abs() < 1e-6);
    }

    #[test]
    fn weight_decay_pulls_toward_zero() {
        let net = MicroCnn.build(3, 3);
        let mut after = net.clone();
        Sgd::new(0.0, 0.5).step(&mut after, &grads_of(&net, 0.0), None, 0.1).unwrap();
        let (a, b) = (net.params().tensor(0).data()[0], after.params().tensor(0).data()[0]);
        assert!((f64::from(b) - f64::from(a) * 0.95).abs() < 1e-6);
    }

    #[test]
    fn plain_masked_gradient_and_zeroing() {
        let net = MicroCnn.build(3, 4);
        let all = RelevanceMask::all(net.params());
        let mut after = net.clone();
        apply_masked_gradient(&mut after, &grads_of(&net, 2.0), &all, 0.25).unwrap();
        let (a, b) = (net.params().tensor(1).data()[0], after.params().tensor(1).data()[0]);
        assert_eq!(b, a - 0.5);
        let zeroed = zero_params(&net, &all).unwrap();
        assert!(zeroed.params().iter().all(|(_, t)| t.data().iter().all(|&v| v == 0.0)));
        assert_eq!(zeroed.buffers(), net.buffers());
    }

    #[test]
    fn mismatched_layouts_are_rejected() {
        let net = MicroCnn.build(3, 5);
        let other = MicroCnn.build(4, 5);
        let mut target = net.clone();
        assert!(Sgd::plain().step(&mut target, &grads_of(&other, 1.0), None, 0.1).is_err());
        let mask = RelevanceMask::all(other.params());
        assert!(apply_masked_gradient(&mut target, &grads_of(&net, 1.0), &mask, 0.1).is_err());
    }
}
