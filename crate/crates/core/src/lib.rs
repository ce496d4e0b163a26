//! Perturbation discrimination score (PDS): how well each predicted
//! perturbation effect picks out its own observed effect among all observed
//! effects, under several distances, plus the scale, geometry and
//! preprocessing analyses around it.

pub mod asymptotics;
pub mod cli;
pub mod discrimination;
pub mod effects;
pub mod error;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod preprocessing;
pub mod synth;
pub mod transforms;

pub use asymptotics::{convergence_threshold_l2, l1_flip_threshold, scale_sweep, ScaleSweepResult, SweepCurve};
pub use discrimination::{compute_pds, pds_row, ErrorPolicy, PdsOptions, PdsReport, PerturbationScore};
pub use effects::{align_pair, EffectMatrix, EffectPair, MaskedVectorView};
pub use error::{PdsError, Result};
pub use geometry::{orthogonal_ray_certificate, region_fraction, CertificateResult, MonteCarloRegionResult};
pub use metrics::{distance, DistanceKind, DistanceSpec};
pub use preprocessing::{CountMatrix, PipelineKind, PipelineSpec};
pub use synth::SynthSpec;
pub use transforms::{apply_chain, norm_match, NormKind, TransformDescriptor};
