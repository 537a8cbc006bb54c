//! Bayesian inference over parameters and the factor path.

pub mod sampler;
pub mod summary;

pub use sampler::{
    acceptance_probability, chain_rng, component_name, default_rw_sd, initial_state, log_posterior,
    mh_step_component, run_chain, run_sampler, sample_truncated_gaussian, stationarity_checks,
    truncated_gaussian_proposal_logdensity, tune_proposals, ChainConfig, LgdPosterior,
    PosteriorSamples, PriorSpec, StationarityCheck, Target, N_PARAMS,
};
pub use summary::{summarize, summarize_values, PosteriorSummary};
