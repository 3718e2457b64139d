//! Verification protocol: ROC/EER/VR metrics, datasets and the end-to-end
//! train/score/report run.

mod dataset;
mod protocol;
mod roc;
mod synth;

pub use dataset::{Dataset, Sample, Split, MANIFEST_NAME};
pub use protocol::{
    evaluate, preprocess, prepare, run_protocol, run_protocol_full, train, ClassifierReport, EvalReport, ProtocolOutput,
    TrainedPipeline, EER_FLOOR,
};
pub use roc::{eer, roc, vr_at_far, RocCurve, RocPoint, VerificationRate};
pub use synth::{
    generate, generate_synthetic_dataset, ramp_field, render_texture, spot_field, Illumination, SplitPlan,
    SyntheticConfig, SYNTH_SIZE,
};
