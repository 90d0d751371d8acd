use crate::data::{augment_unseen, AugmentKind};
use crate::error::{Error, Result};
use crate::model::{BnMode, Network};
use crate::tensor::Real;

/// Absolute gradient of the saliency loss for every parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap {
    pub class_id: usize,
    pub augmentation: Option<AugmentKind>,
    names: Vec<String>,
    values: Vec<Vec<f64>>,
}

impl SaliencyMap {
    pub fn from_parts(
        class_id: usize,
        augmentation: Option<AugmentKind>,
        names: Vec<String>,
        values: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if names.len() != values.len() {
            return Err(Error::InputShape("saliency names and tensors differ in count".into()));
        }
        if values.iter().flatten().any(|v| !(*v >= 0.0)) {
            return Err(Error::InputShape("saliency must be non-negative".into()));
        }
        Ok(SaliencyMap {
            class_id,
            augmentation,
            names,
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensor(&self, i: usize) -> &[f64] {
        &self.values[i]
    }

    pub fn check_layout<F: Real>(&self, net: &Network<F>) -> Result<()> {
        let p = net.params();
        let ok = p.len() == self.len()
            && p.iter()
                .zip(self.names.iter().zip(&self.values))
                .all(|((n, t), (sn, sv))| n == sn && t.len() == sv.len());
        if ok {
            Ok(())
        } else {
            Err(Error::InputShape("saliency map does not match the model".into()))
        }
    }

    /// Flat indices of tensor `i`, most salient first, ties by index.
    pub fn order(&self, i: usize) -> Vec<usize> {
        let v = &self.values[i];
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[b].total_cmp(&v[a]).then(a.cmp(&b)));
        idx
    }

    /// `(tensor, flat index)` over the whole model, most salient first, ties
    /// by tensor name then index.
    pub fn global_order(&self) -> Vec<(usize, usize)> {
        let mut all: Vec<(usize, usize)> = self
            .values
            .iter()
            .enumerate()
            .flat_map(|(t, v)| (0..v.len()).map(move |j| (t, j)))
            .collect();
        all.sort_by(|&(ta, ja), &(tb, jb)| {
            self.values[tb][jb]
                .total_cmp(&self.values[ta][ja])
                .then_with(|| self.names[ta].cmp(&self.names[tb]))
                .then(ja.cmp(&jb))
        });
        all
    }
}

/// Loss `-ln(mean_k softmax(z_k)[class])` over a batch of logit rows and its
/// gradient with respect to the logits.
pub fn mean_prediction_loss(logits: &[f64], n: usize, class: usize) -> (f64, Vec<f64>) {
    let c = logits.len() / n;
    let probs: Vec<f64> = logits
        .chunks(c)
        .flat_map(|row| {
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
            let s: f64 = e.iter().sum();
            e.into_iter().map(move |v| v / s)
        })
        .collect();
    let mean = probs.chunks(c).map(|p| p[class]).sum::<f64>() / n as f64;
    let scale = -1.0 / (n as f64 * mean);
    let grad = probs
        .chunks(c)
        .flat_map(|p| {
            let pc = p[class];
            (0..c).map(move |i| scale * pc * (if i == class { 1.0 } else { 0.0 } - p[i]))
        })
        .collect();
    (-mean.ln(), grad)
}

/// Gradient saliency of every parameter for `class_id`, computed on the
/// class images after an augmentation the model never saw in training.
/// The model is only read.
pub fn class_gradient_saliency<F: Real>(
    model: &Network<F>,
    class_images: &[F],
    class_id: usize,
    augmentation: Option<AugmentKind>,
    seed: u64,
) -> Result<SaliencyMap> {
    let len = model.input_len();
    if class_images.is_empty() {
        return Err(Error::InsufficientData(format!("no images for class {class_id}")));
    }
    if class_images.len() % len != 0 {
        return Err(Error::InputShape(format!(
            "{} values do not divide into images of {len}",
            class_images.len()
        )));
    }
    if class_id >= model.num_classes() {
        return Err(Error::InvalidClass {
            id: class_id,
            num_classes: model.num_classes(),
        });
    }
    let n = class_images.len() / len;
    let images: Vec<F> = match augmentation {
        Some(kind) => {
            let raw: Vec<f32> = class_images.iter().map(|v| v.to_f64() as f32).collect();
            augment_unseen(&raw, model.input_shape(), kind, seed, &training_augmentations(model))?
                .into_iter()
                .map(|v| F::from_f64(v as f64))
                .collect()
        }
        None => class_images.to_vec(),
    };
    let pass = model.forward(&images, n, BnMode::Eval, true)?;
    let logits: Vec<f64> = pass.logits.iter().map(|v| v.to_f64()).collect();
    let (_, dlogits) = mean_prediction_loss(&logits, n, class_id);
    let dlogits: Vec<F> = dlogits.into_iter().map(F::from_f64).collect();
    let grads = model.backward(&pass, &dlogits)?;
    let names = model.params().names().map(str::to_string).collect();
    let values = grads
        .tensors
        .iter()
        .map(|t| t.data().iter().map(|v| v.to_f64().abs()).collect())
        .collect();
    SaliencyMap::from_parts(class_id, augmentation, names, values)
}

/// Training augmentations recorded in the model metadata.
pub fn training_augmentations<F: Real>(model: &Network<F>) -> Vec<String> {
    model
        .meta
        .get(crate::train::TRAIN_AUGMENT_KEY)
        .map(|s| s.split(',').filter(|t| !t.is_empty()).map(str::to_string).collect())
        .unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Architecture, NetworkBuilder};
    use approx::assert_abs_diff_eq;

    fn logistic() -> Network<f64> {
        // Logits (0, w * x): softmax over them is the logistic model.
        let mut net = NetworkBuilder::new("toy", [1, 1, 1], 0).flatten().head(2).cast::<f64>();
        for i in 0..net.params().len() {
            net.param_data_mut(i).fill(0.0);
        }
        net
    }

    #[test]
    fn logistic_weight_at_zero_has_saliency_half() {
        let net = logistic();
        let s = class_gradient_saliency(&net, &[1.0], 1, None, 0).unwrap();
        let w = net.params().index_of("head.weight").unwrap();
        assert_abs_diff_eq!(s.tensor(w)[1], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn disconnected_parameter_has_zero_saliency() {
        let net = logistic();
        // The input is zero, so no weight sees any signal.
        let s = class_gradient_saliency(&net, &[0.0], 1, None, 0).unwrap();
        let w = net.params().index_of("head.weight").unwrap();
        assert!(s.tensor(w).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn saliency_is_deterministic_and_read_only() {
        let net = crate::model::MicroCnn.build(3, 5);
        let before = net.clone();
        let images: Vec<f32> = (0..48).map(|i| (i as f32 * 0.37).sin()).collect();
        let a = class_gradient_saliency(&net, &images, 2, Some(AugmentKind::VerticalFlip), 9).unwrap();
        let b = class_gradient_saliency(&net, &images, 2, Some(AugmentKind::VerticalFlip), 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(net.params(), before.params());
    }

    #[test]
    fn empty_images_are_rejected() {
        let net = logistic();
        assert!(matches!(
            class_gradient_saliency(&net, &[], 1, None, 0),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn mean_prediction_gradient_matches_differences() {
        let z = [0.3, -1.2, 2.0, 0.1, 0.5, -0.4];
        let (_, g) = mean_prediction_loss(&z, 2, 1);
        for j in 0..z.len() {
            let h = 1e-6;
            let mut p = z;
            p[j] += h;
            let mut m = z;
            m[j] -= h;
            let fd = (mean_prediction_loss(&p, 2, 1).0 - mean_prediction_loss(&m, 2, 1).0) / (2.0 * h);
            assert_abs_diff_eq!(g[j], fd, epsilon = 1e-8);
        }
    }
}
