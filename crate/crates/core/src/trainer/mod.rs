//! Stacked toy networks of MPO layers, auxiliary-only fine-tuning and the
//! greedy dimension-squeezing loop. Everything here is `f64`.

mod data;
mod network;
mod optim;
mod squeeze;

pub use data::{teacher_data, Dataset, TeacherTask};
pub use network::{
    auto_plans, build_toy_network, evaluate, DenseNetwork, Head, Nonlinearity, TeacherStructure, ToyNetwork,
};
pub use optim::{
    finetune_auxiliary, full_vs_auxiliary_report, train, EpochLog, FullVsAuxiliaryReport, Optimizer, TrainOptions,
    TrainingLog,
};
pub use squeeze::{
    dimension_squeeze, direct_truncation, select_truncation, BaselineMode, BondSide, SqueezeConfig, SqueezeStep,
    SqueezeTrace, TruncationChoice,
};
