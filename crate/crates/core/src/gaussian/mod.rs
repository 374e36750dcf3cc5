//! The Gaussian diffusion approximation: its exact sampling distribution and
//! a sampler for its stationary law.

mod formula;
mod partitions;
mod sampler;

pub use formula::{gaussian_series_literal, q_gauss, GaussianSeriesEngine};
pub use partitions::{
    double_factorial_odd, enumerate_pair_partitions, enumerate_pair_partitions_capped, enumerate_r,
    HaplotypeList, MultiplicityMatrix, PairPartition, DEFAULT_PARTITION_CAP,
};
pub use sampler::{
    conditional_covariance, sample_d_given, sample_dirichlet, sample_stationary,
    ConditionalSampler, GaussianDraw, SamplerMode, DEFAULT_REJECTION_CAP,
};
