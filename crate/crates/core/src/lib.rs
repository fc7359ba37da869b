pub mod ensemble;
pub mod learners;
pub mod pipeline;
pub mod preprocess;
pub mod ranking;
pub mod survival;
pub mod synth;
pub mod tabular;
