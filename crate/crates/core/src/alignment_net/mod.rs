//! Two-layer network mapping (visual feature, class semantic) pairs onto
//! class-center prototypes, trained with an L1 objective and Adam.

mod adam;
mod checkpoint;
mod gradcheck;
mod loss;
mod network;
mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointHeader};
pub use gradcheck::{compare_gradients, grad_check, sample_coords, GradCheckReport, ParamCoord};
pub use loss::l1_loss;
pub use network::{
    backward, AlignmentNetwork, AlignmentSource, ForwardTrace, NetworkShape, Parameters,
    TrainingBatch,
};
pub use train::{train, TrainConfig, TrainOutcome};
