//! Classifier parameters, forward/backward passes, masked updates and
//! checkpoints.

mod arch;
mod checkpoint;
mod head;
mod logits;
mod network;
mod optim;
mod params;

pub use arch::{ArchRegistry, Architecture, MicroCnn, SmallCnn};
pub use checkpoint::{load_checkpoint, load_checkpoint_expecting, save_checkpoint};
pub use head::HeadLayout;
pub(crate) use head::argmax_where as head_argmax;
pub use logits::{slice_logits, LogitVector};
pub use network::{BnMode, ForwardPass, Layer, Network, NetworkBuilder, BN_EPS, BN_MOMENTUM};
pub use optim::{apply_masked_gradient, zero_params, Sgd};
pub use params::{Grads, ParamStore};

/// A frozen teacher and the student being edited. Both share one
/// architecture; the teacher is only reachable by shared reference.
#[derive(Debug, Clone)]
pub struct ModelPair {
    teacher: Network<f32>,
    pub student: Network<f32>,
}

impl ModelPair {
    /// Starts the student as an exact copy of the teacher.
    pub fn from_original(original: &Network<f32>) -> Self {
        ModelPair {
            teacher: original.clone(),
            student: original.clone(),
        }
    }

    pub fn new(teacher: Network<f32>, student: Network<f32>) -> crate::Result<Self> {
        if teacher.arch() != student.arch() || !teacher.params().same_layout(student.params()) {
            return Err(crate::Error::InputShape(
                "teacher and student architectures differ".into(),
            ));
        }
        Ok(ModelPair { teacher, student })
    }

    pub fn teacher(&self) -> &Network<f32> {
        &self.teacher
    }

    pub fn into_student(self) -> Network<f32> {
        self.student
    }
}
