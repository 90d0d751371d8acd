use crate::error::{Error, Result};

/// Labeled images stored NCHW in one contiguous buffer, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    shape: [usize; 3],
    class_names: Vec<String>,
    images: Vec<f32>,
    labels: Vec<usize>,
}

impl Dataset {
    pub fn new(
        shape: [usize; 3],
        class_names: Vec<String>,
        images: Vec<f32>,
        labels: Vec<usize>,
    ) -> Result<Self> {
        let len: usize = shape.iter().product();
        if images.len() != labels.len() * len {
            return Err(Error::InputShape(format!(
                "{} labels need {} pixel values, got {}",
                labels.len(),
                labels.len() * len,
                images.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_names.len()) {
            return Err(Error::InvalidClass {
                id: bad,
                num_classes: class_names.len(),
            });
        }
        Ok(Dataset {
            shape,
            class_names,
            images,
            labels,
        })
    }

    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn image_len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn images(&self) -> &[f32] {
        &self.images
    }

    pub fn image(&self, i: usize) -> &[f32] {
        let len = self.image_len();
        &self.images[i * len..(i + 1) * len]
    }

    /// Example indices of every class, ascending.
    pub fn class_indices(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_classes()];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l].push(i);
        }
        out
    }

    /// Concatenated pixels of the given examples.
    pub fn gather(&self, indices: &[usize]) -> Vec<f32> {
        let mut out = Vec::with_capacity(indices.len() * self.image_len());
        for &i in indices {
            out.extend_from_slice(self.image(i));
        }
        out
    }

    pub fn gather_labels(&self, indices: &[usize]) -> Vec<usize> {
        indices.iter().map(|&i| self.labels[i]).collect()
    }

    /// Indices whose label is in `classes`.
    pub fn indices_of(&self, classes: &std::collections::BTreeSet<usize>) -> Vec<usize> {
        (0..self.len()).filter(|&i| classes.contains(&self.labels[i])).collect()
    }
}
