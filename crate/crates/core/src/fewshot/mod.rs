//! Episodic few-shot learning: sampling, nearest-neighbour inference, the
//! softmin chunk loss with analytic gradients, and training.

mod checkpoint;
mod infer;
mod loss;
mod model;
mod optim;
mod sampler;
mod train;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use infer::{infer_labels, nearest_pairs, predict_labels, predict_triples};
pub use loss::{chunk_loss, chunk_loss_grad, sequence_loss, softmin_term};
pub use model::{
    episode_loss, loss_and_grads, prepare_episode, CategoryBatch, DistanceMode, LossConfig, PreparedEpisode,
};
pub use optim::{Adam, AdamConfig, DEFAULT_LR};
pub use sampler::{check_episode, sample_episode, sample_support, EpisodeSampler, SamplerConfig};
pub use train::{
    finetune, finetune_step, pretrain, pretrain_examples, pretrain_loss_and_grads, pretrain_step, train, Phase,
    PretrainExample, TrainConfig, TrainState, TrainingMode,
};
