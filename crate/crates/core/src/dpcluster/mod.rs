//! Dirichlet-process clustering of player styles by Gibbs sampling.
//!
//! Initial partition from K-means on the least-squares styles, base measure
//! estimated from the K-means centers, then repeated sweeps that reassign
//! each player with probability proportional to `n_k * exp(loglik)` for the
//! existing clusters and `omega * exp(loglik)` for a fresh draw from the base
//! measure.

pub mod base;
pub mod kmeans;
pub mod sampler;
pub mod state;

pub use base::{estimate_base_measure, BaseMeasure};
pub use kmeans::{default_k, kmeans, KMeansResult};
pub use sampler::{
    gibbs_sweep, resample_sigma2, run_sampler, Sampler, SamplerConfig, SamplerTrace, TraceRecord,
};
pub use state::{
    normalize_log_weights, partition_score, player_loglik, pooled_stats, posterior_mode,
    reassignment_log_weights, reassignment_probs, update_cluster_mean, Cluster, MeanUpdate,
    PartitionState, PlayerData,
};

pub(crate) mod score_serde {
    //! Scores may be `-inf` (zero concentration); JSON stores those as null.
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NEG_INFINITY))
    }
}
