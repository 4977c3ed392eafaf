//! Learned actuator model: delta-history features, a small tanh network,
//! torque/position/multi-step losses and ensemble training.

pub mod features;
pub mod losses;
pub mod model;
pub mod network;
pub mod train;

pub use features::{build_features, HistorySpec, Standardizer};
pub use losses::{
    multi_step_loss, multi_step_loss_grad, position_loss, position_loss_grad, torque_loss, torque_loss_grad,
    unit_table, zero_torque_normalizers, RolloutBatch, Simulator, TorqueBatch,
};
pub use model::{
    disagreement, load_ensemble, load_model, predict_torque, read_ensemble, read_model, save_ensemble, save_model,
    write_ensemble, write_model, Ensemble, GeanModel, CHECKPOINT_VERSION,
};
pub use network::{Adam, Layer, Mlp};
pub use train::{
    init_model, train, train_ensemble, train_with, training_windows, write_curve, CurveRow, GeanConfig, LossKind,
    TrainOutcome,
};
