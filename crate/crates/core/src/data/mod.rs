//! Cohort ingestion, normalization, windowed example construction,
//! patient-level splits, synthetic cohorts and the kidney case study.

mod ckd;
mod cohort;
mod panel;
mod record;
mod split;
mod store;
mod synth;
mod window;

pub use ckd::{build_ckd_examples, ckd_eligible, dense_enough, CkdConfig, CkdExample};
pub use cohort::{
    compute_norm_stats, filter_cohort, normalize, passes_filter, LabStats, NormStats,
};
pub use panel::{lab_codes, lab_label, LAB_PANEL};
pub use record::{
    read_cohort, write_cohort, PatientId, PatientRecord, DEMO_FILE, DX_FILE, LABS_FILE, PX_FILE,
    RX_FILE,
};
pub use split::{split_by_patient, Split, SplitPart};
pub use store::{ExampleSet, ExampleSetMeta};
pub use synth::{synthesize_cohort, Generator, PlantedDisease, SynthSpec};
pub use window::{build_examples, label_at, window_ends, Example, Label, WindowConfig};
