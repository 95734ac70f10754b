//! One connection's pairing process, round by round.
//!
//! A round simulates one desk-scale block of `block_bits` sifted bits and
//! runs it through sifting, reconciliation, the QBER gate and privacy
//! amplification, authenticating the basis record, the corrected key, the
//! PA seed and the final key. The block stands in for the bits the
//! connection sifts in `round_s`: its output is scaled so that, at the
//! connection's base QBER, the expected credit per round equals
//! `estimate_key_rate * round_s`.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::compression::{compression_ratio, DEFAULT_SAFETY_MARGIN};
use super::gate::{GateAction, QberGate, QberPolicy};
use super::log::{AuthMode, LogRecord, RoundAction};
use super::rate::{estimate_key_rate, DeviceProfile};
use super::sifting::simulate_sifting;
use super::toeplitz::{privacy_amplify, ToeplitzSeed};
use super::winnow::{winnow_reconcile, CountingChannel, WinnowParams};
use crate::bits::BitString;
use crate::crypto::{
    exchange_tags, preshared_authenticate, simulate_handshake, AuthSession, ChannelModel,
    HandshakeRun, Identity, Leg, OperationCosts, Pki, PresharedError, PresharedPool, Role,
    SessionConfig, TagCategory, TagVerdict,
};
use crate::topology::{ConnectionId, Route};

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineParams {
    pub winnow: WinnowParams,
    pub qber: QberPolicy,
    pub safety_margin: u64,
    pub round_s: f64,
    /// Sifted bits simulated per round.
    pub block_bits: usize,
    /// Standard deviation of per-round QBER jitter, as a fraction of the
    /// base QBER.
    pub qber_jitter: f64,
    /// QBER added after every round until the next calibration.
    pub qber_drift_per_round: f64,
    /// Blocks simulated to estimate the post-processing efficiency.
    pub calibration_blocks: usize,
}

impl Default for PipelineParams {
    fn default() -> Self {
        Self {
            winnow: WinnowParams::default(),
            qber: QberPolicy::default(),
            safety_margin: DEFAULT_SAFETY_MARGIN,
            round_s: 1.0,
            block_bits: 4096,
            qber_jitter: 0.1,
            qber_drift_per_round: 0.0,
            calibration_blocks: 64,
        }
    }
}

impl PipelineParams {
    pub fn validate(&self) -> Result<(), String> {
        self.qber.validate()?;
        if !(self.round_s > 0.0 && self.round_s.is_finite()) {
            return Err(format!("round_s must be positive, got {}", self.round_s));
        }
        if self.block_bits < 64 {
            return Err(format!(
                "block_bits must be at least 64, got {}",
                self.block_bits
            ));
        }
        if !(self.qber_jitter >= 0.0) || !(self.qber_drift_per_round >= 0.0) {
            return Err("qber jitter and drift must be non-negative".into());
        }
        if self.calibration_blocks == 0 {
            return Err("calibration_blocks must be positive".into());
        }
        if self.winnow.schedule.iter().any(|&b| b < 2) || self.winnow.max_rounds == 0 {
            return Err("winnow schedule needs block sizes >= 2 and max_rounds >= 1".into());
        }
        Ok(())
    }
}

/// Expected fraction of a sifted block that survives reconciliation and
/// compression at `qber`, estimated over the given number of blocks.
pub fn post_processing_efficiency(
    profile: &DeviceProfile,
    loss_db: f64,
    params: &PipelineParams,
    qber: f64,
    seed: u64,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = DeviceProfile {
        qber_base: qber,
        ..*profile
    };
    let mut out = 0u64;
    let mut input = 0u64;
    for _ in 0..params.calibration_blocks {
        let Ok(sift) = simulate_sifting(&p, loss_db, params.block_bits, &mut rng) else {
            continue;
        };
        input += sift.len() as u64;
        let wp = params.winnow.clone().with_seed(rng.random());
        let mut ch = CountingChannel::default();
        if let Ok(r) = winnow_reconcile(&sift.alice, &sift.bob, &wp, &mut ch) {
            let q = sift.alice.hamming_distance(&sift.bob) as f64 / sift.len() as f64;
            out += compression_ratio(q, r.leaked_bits, r.alice.len(), params.safety_margin) as u64;
        }
    }
    if input == 0 {
        0.0
    } else {
        out as f64 / input as f64
    }
}

/// How simulated blocks map to credited key.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct YieldModel {
    /// Secret bits per round predicted by the rate model.
    pub target_bits_per_round: f64,
    /// Measured output fraction at the base QBER.
    pub efficiency: f64,
    /// Multiplier from block output to credited bits.
    pub scale: f64,
}

impl YieldModel {
    pub fn calibrate(
        profile: &DeviceProfile,
        loss_db: f64,
        params: &PipelineParams,
        seed: u64,
    ) -> Self {
        let target = estimate_key_rate(loss_db, profile) * 1000.0 * params.round_s;
        let efficiency =
            post_processing_efficiency(profile, loss_db, params, profile.qber_base, seed);
        let scale = if efficiency > 0.0 {
            target / (efficiency * params.block_bits as f64)
        } else {
            0.0
        };
        Self {
            target_bits_per_round: target,
            efficiency,
            scale,
        }
    }
}

/// Tag authentication for one connection, either by signatures over a
/// handshake-authenticated session pair or from a pre-shared pool.
#[allow(clippy::large_enum_variant)]
pub enum Authenticator {
    Pqc(PqcLink),
    Preshared(PresharedLink),
}

pub struct PqcLink {
    pub a: AuthSession,
    pub b: AuthSession,
    pub faults: FaultInjector,
}

impl PqcLink {
    /// Runs the handshake between `a` (initiator) and `b` over `channel`.
    /// Returns the run as the error if either side fails to authenticate.
    pub fn establish(
        pki: &Pki,
        a: &Arc<Identity>,
        b: &Arc<Identity>,
        now: u64,
        seed: [u8; 32],
        costs: &OperationCosts,
        channel: &ChannelModel,
    ) -> Result<(Self, HandshakeRun), HandshakeRun> {
        let mut seed_b = seed;
        seed_b[31] ^= 0xff;
        let mut sa = pki.session(
            a,
            SessionConfig {
                role: Role::Initiator,
                expected_peer: b.id.clone(),
                now,
                rng_seed: seed,
            },
        );
        let mut sb = pki.session(
            b,
            SessionConfig {
                role: Role::Responder,
                expected_peer: a.id.clone(),
                now,
                rng_seed: seed_b,
            },
        );
        let run = simulate_handshake(&mut sa, &mut sb, costs, channel);
        if !run.authenticated() {
            return Err(run);
        }
        Ok((
            Self {
                a: sa,
                b: sb,
                faults: FaultInjector::none(),
            },
            run,
        ))
    }
}

pub struct PresharedLink {
    pub a: PresharedPool,
    pub b: PresharedPool,
}

/// Corrupts tag frames in flight: each frame independently with
/// probability `rate`, and every frame of category `tamper`.
#[derive(Clone, Debug)]
pub struct FaultInjector {
    pub rate: f64,
    pub tamper: Option<TagCategory>,
    rng: ChaCha8Rng,
}

impl FaultInjector {
    pub fn none() -> Self {
        Self::new(0.0, 0)
    }

    pub fn new(rate: f64, seed: u64) -> Self {
        Self {
            rate,
            tamper: None,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn tampering(mut self, category: TagCategory) -> Self {
        self.tamper = Some(category);
        self
    }

    fn apply(&mut self, category: TagCategory, frame: &mut [u8]) {
        let hit = self.tamper == Some(category)
            || (self.rate > 0.0 && self.rng.random::<f64>() < self.rate);
        if hit {
            if let Some(last) = frame.last_mut() {
                *last ^= 0x01;
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AuthOutcome {
    Accepted,
    DataMismatch,
    Rejected,
    PoolExhausted,
}

impl Authenticator {
    pub fn mode(&self) -> AuthMode {
        match self {
            Authenticator::Pqc(_) => AuthMode::Pqc,
            Authenticator::Preshared(_) => AuthMode::Preshared,
        }
    }

    pub fn exchange(&mut self, category: TagCategory, data_a: &[u8], data_b: &[u8]) -> AuthOutcome {
        match self {
            Authenticator::Pqc(link) => {
                let faults = &mut link.faults;
                let r = exchange_tags(
                    &mut link.a,
                    &mut link.b,
                    category,
                    data_a,
                    data_b,
                    |_: Leg, f| faults.apply(category, f),
                );
                match r {
                    Ok((TagVerdict::Accepted, TagVerdict::Accepted)) => AuthOutcome::Accepted,
                    Ok((va, vb)) if va != TagVerdict::Rejected && vb != TagVerdict::Rejected => {
                        AuthOutcome::DataMismatch
                    }
                    _ => AuthOutcome::Rejected,
                }
            }
            Authenticator::Preshared(link) => {
                let ka = link.a.next_key();
                let kb = link.b.next_key();
                match (ka, kb) {
                    (Ok(ka), Ok(kb)) => {
                        let ta = preshared_authenticate(&ka, category, data_a);
                        let tb = preshared_authenticate(&kb, category, data_b);
                        match (ta, tb) {
                            (Ok(ta), Ok(tb)) if ta == tb => AuthOutcome::Accepted,
                            (Ok(_), Ok(_)) => AuthOutcome::DataMismatch,
                            _ => AuthOutcome::Rejected,
                        }
                    }
                    (Err(PresharedError::Exhausted { .. }), _)
                    | (_, Err(PresharedError::Exhausted { .. })) => AuthOutcome::PoolExhausted,
                    _ => AuthOutcome::Rejected,
                }
            }
        }
    }
}

/// Result of one round.
#[derive(Clone, Debug)]
pub struct RoundReport {
    pub record: LogRecord,
    /// Final keys of both sides when the round reached privacy amplification.
    pub final_keys: Option<(BitString, BitString)>,
}

/// State of one connection's pairing that persists across rounds.
#[derive(Clone, Debug)]
pub struct PairingProcess {
    connection: ConnectionId,
    route: String,
    loss_db: f64,
    profile: DeviceProfile,
    params: PipelineParams,
    yield_model: YieldModel,
    gate: QberGate,
    qber_level: f64,
    rng: ChaCha8Rng,
    halted: bool,
}

impl PairingProcess {
    pub fn new(
        route: &Route,
        loss_db: f64,
        profile: DeviceProfile,
        params: PipelineParams,
        yield_model: YieldModel,
        seed: u64,
    ) -> Self {
        Self {
            connection: route.connection(),
            route: route.to_string(),
            loss_db,
            profile,
            gate: QberGate::new(params.qber),
            params,
            yield_model,
            qber_level: profile.qber_base,
            rng: ChaCha8Rng::seed_from_u64(seed),
            halted: false,
        }
    }

    pub fn connection(&self) -> &ConnectionId {
        &self.connection
    }

    pub fn yield_model(&self) -> &YieldModel {
        &self.yield_model
    }

    pub fn params(&self) -> &PipelineParams {
        &self.params
    }

    /// Set once the pre-shared pool runs dry; no further rounds run.
    pub fn halted(&self) -> bool {
        self.halted
    }

    pub fn calibrations(&self) -> u64 {
        self.gate.calibrations()
    }

    /// QBER the channel will have before next round's jitter.
    pub fn qber_level(&self) -> f64 {
        self.qber_level
    }

    /// Carries gate state and QBER level over from an earlier process on
    /// the same connection.
    pub fn resume_from(&mut self, earlier: &PairingProcess) {
        self.gate = earlier.gate.clone();
        self.qber_level = earlier.qber_level;
        self.halted = earlier.halted;
    }

    fn record(
        &self,
        t: f64,
        qber: f64,
        bits: u64,
        leaked: u64,
        action: RoundAction,
        mode: AuthMode,
    ) -> LogRecord {
        LogRecord {
            timestamp_s: t,
            connection: self.connection.clone(),
            route: self.route.clone(),
            qber,
            key_bits_out: bits,
            leaked_bits: leaked,
            action,
            auth_mode: mode,
        }
    }

    fn round_qber(&mut self) -> f64 {
        let sigma = self.params.qber_jitter * self.profile.qber_base;
        let q = if sigma > 0.0 {
            self.qber_level
                + Normal::new(0.0, sigma)
                    .expect("finite sigma")
                    .sample(&mut self.rng)
        } else {
            self.qber_level
        };
        q.clamp(0.0, 0.499)
    }

    /// Runs one round starting at `t_start` simulated seconds.
    pub fn run_round(&mut self, t_start: f64, auth: &mut Authenticator) -> RoundReport {
        let mode = auth.mode();
        let q_true = self.round_qber();
        self.qber_level += self.params.qber_drift_per_round;
        let abort = |s: &Self, q: f64, leaked: u64, action: RoundAction| RoundReport {
            record: s.record(t_start, q, 0, leaked, action, mode),
            final_keys: None,
        };
        if self.halted {
            return abort(self, 0.0, 0, RoundAction::PoolExhausted);
        }

        let profile = DeviceProfile {
            qber_base: q_true,
            ..self.profile
        };
        let Ok(sift) = simulate_sifting(
            &profile,
            self.loss_db,
            self.params.block_bits,
            &mut self.rng,
        ) else {
            return abort(self, 0.0, 0, RoundAction::ReconcileFailed);
        };
        let shuffle_seed: u64 = self.rng.random();
        let pa_rng_seed: u64 = self.rng.random();

        let fail = |s: &mut Self, outcome: AuthOutcome, q: f64, leaked: u64| {
            let action = match outcome {
                AuthOutcome::PoolExhausted => {
                    s.halted = true;
                    RoundAction::PoolExhausted
                }
                AuthOutcome::DataMismatch => RoundAction::ReconcileFailed,
                _ => RoundAction::AuthFailed,
            };
            abort(s, q, leaked, action)
        };

        let record = sift.sift_record();
        match auth.exchange(TagCategory::BasisSift, &record, &record) {
            AuthOutcome::Accepted => {}
            other => return fail(self, other, 0.0, 0),
        }

        let wp = self.params.winnow.clone().with_seed(shuffle_seed);
        let mut channel = CountingChannel::default();
        let rec = match winnow_reconcile(&sift.alice, &sift.bob, &wp, &mut channel) {
            Ok(r) => r,
            Err(_) => {
                let leaked = channel.parity_bits + channel.syndrome_bits;
                return abort(self, 0.0, leaked, RoundAction::ReconcileFailed);
            }
        };
        let leaked = rec.leaked_bits;
        let q_meas = sift.alice.hamming_distance(&sift.bob) as f64 / sift.len() as f64;

        match auth.exchange(
            TagCategory::CorrectedKey,
            &rec.alice.to_bytes(),
            &rec.bob.to_bytes(),
        ) {
            AuthOutcome::Accepted => {}
            other => return fail(self, other, q_meas, leaked),
        }

        match self.gate.observe(q_meas) {
            GateAction::Keep => {}
            GateAction::Discard => return abort(self, q_meas, leaked, RoundAction::Discard),
            GateAction::Calibrate => {
                self.qber_level = self.profile.qber_base;
                return abort(self, q_meas, leaked, RoundAction::Calibrate);
            }
        }

        let n_in = rec.alice.len();
        let n_out = compression_ratio(q_meas, leaked, n_in, self.params.safety_margin);
        let seed = ToeplitzSeed::random(n_in, n_out, &mut ChaCha8Rng::seed_from_u64(pa_rng_seed));
        let seed_bytes = seed.to_bytes();
        match auth.exchange(TagCategory::PASharedRandom, &seed_bytes, &seed_bytes) {
            AuthOutcome::Accepted => {}
            other => return fail(self, other, q_meas, leaked),
        }
        let fa = privacy_amplify(&rec.alice, &seed, n_out).expect("seed sized for input");
        let fb = privacy_amplify(&rec.bob, &seed, n_out).expect("seed sized for input");

        let outcome = auth.exchange(TagCategory::FinalKey, &fa.to_bytes(), &fb.to_bytes());
        if outcome != AuthOutcome::Accepted {
            let mut r = fail(self, outcome, q_meas, leaked);
            r.final_keys = Some((fa, fb));
            return r;
        }
        let credited = (n_out as f64 * self.yield_model.scale).floor() as u64;
        RoundReport {
            record: self.record(t_start, q_meas, credited, leaked, RoundAction::Keep, mode),
            final_keys: Some((fa, fb)),
        }
    }
}

/// Output of [`run_pairing_process`].
#[derive(Clone, Debug, Default)]
pub struct PairingOutput {
    pub records: Vec<LogRecord>,
    pub key_bits: u64,
}

impl PairingOutput {
    pub fn key_bytes(&self) -> u64 {
        self.key_bits / 8
    }
}

/// Runs whole rounds that fit in `duration_s` starting at `start_s`.
pub fn run_pairing_process(
    process: &mut PairingProcess,
    start_s: f64,
    duration_s: f64,
    auth: &mut Authenticator,
) -> PairingOutput {
    let round_s = process.params.round_s;
    let rounds = if duration_s > 0.0 {
        (duration_s / round_s + 1e-9).floor() as u64
    } else {
        0
    };
    let mut out = PairingOutput::default();
    if process.halted {
        return out;
    }
    for k in 0..rounds {
        let t = start_s + k as f64 * round_s;
        let r = process.run_round(t, auth);
        out.key_bits += r.record.key_bits_out;
        out.records.push(r.record);
        if process.halted {
            break;
        }
    }
    out
}
