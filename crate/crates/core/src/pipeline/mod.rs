//! Per-connection key generation: rate model, sifting, Winnow
//! reconciliation, Toeplitz privacy amplification, the QBER gate and the
//! round driver that ties them to tag authentication.

pub mod compression;
pub mod gate;
pub mod log;
pub mod pairing;
pub mod rate;
pub mod sifting;
pub mod toeplitz;
pub mod winnow;

pub use compression::{compression_ratio, h2, DEFAULT_SAFETY_MARGIN};
pub use gate::{qber_gate, GateAction, QberGate, QberPolicy, DEFAULT_QBER_THRESHOLD};
pub use log::{parse_log, render_log, AuthMode, LogParseError, LogRecord, RoundAction};
pub use pairing::{
    post_processing_efficiency, run_pairing_process, AuthOutcome, Authenticator, FaultInjector,
    PairingOutput, PairingProcess, PipelineParams, PqcLink, PresharedLink, RoundReport, YieldModel,
};
pub use rate::{estimate_key_rate, fit_device_factor, DeviceProfile};
pub use sifting::{
    pulses_for_target, simulate_sifting, simulate_sifting_pulses, SiftError, SiftedKeyPair,
    SIFT_FACTOR,
};
pub use toeplitz::{privacy_amplify, seed_len, PaError, ToeplitzSeed};
pub use winnow::{
    hamming_syndrome, syndrome_width, winnow_reconcile, CountingChannel, Disclosure, PublicChannel,
    ReconciliationResult, RecordingChannel, WinnowError, WinnowParams,
};
