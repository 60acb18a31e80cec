//! Monte Carlo experiments: encode, corrupt, decode, compare against the
//! noiseless run, aggregate per (channel, rho).

use std::fmt;
use std::io::Write;
use std::sync::Arc;
use std::time::{Duration, Instant};

use num_rational::Ratio;
use num_traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::bits::Bits;
use crate::channel::{make_pattern, ChannelError, ChannelKind, PatternDescriptor, PatternExtras};
use crate::dec_general::{est_a_general_metered, run_general};
use crate::dec_linear::{est_a_linear_metered, run_linear, Conf, DecodeError, DecodeReport, SpaceLayout};
use crate::enc::{encode_source, EncError, Mode, StreamParams};
use crate::stream_model::{build_algorithm, Algorithm, AlgorithmId, AlgorithmInputs, BitStream, CorruptedSource, StreamError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Stream(#[from] StreamError),
    #[error(transparent)]
    Enc(#[from] EncError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which channel to apply, plus any explicit targets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelSpec {
    pub kind: ChannelKind,
    pub copies: Vec<u64>,
    pub symbols: Vec<u64>,
    pub flips: Vec<u64>,
}

impl ChannelSpec {
    pub fn new(kind: ChannelKind) -> Self {
        Self { kind, copies: Vec::new(), symbols: Vec::new(), flips: Vec::new() }
    }
}

/// Seeds for the three independent randomness sources. Trial `t` uses
/// `base + t * stride` for each.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedPlan {
    pub input: u64,
    pub decoder: u64,
    pub decoder_stride: u64,
    pub channel: u64,
    pub channel_stride: u64,
}

impl Default for SeedPlan {
    fn default() -> Self {
        Self { input: 0x5eed_0001, decoder: 0x5eed_0002, decoder_stride: 1, channel: 0x5eed_0003, channel_stride: 1 }
    }
}

impl SeedPlan {
    pub fn from_base(seed: u64) -> Self {
        Self { input: seed, decoder: seed ^ 0xdec0_de00, decoder_stride: 1, channel: seed ^ 0xc4a2_2e10, channel_stride: 1 }
    }

    pub fn decoder_seed(&self, trial: u64) -> u64 {
        self.decoder.wrapping_add(trial.wrapping_mul(self.decoder_stride))
    }

    pub fn channel_seed(&self, trial: u64) -> u64 {
        self.channel.wrapping_add(trial.wrapping_mul(self.channel_stride))
    }

    pub fn input_seed(&self, trial: u64) -> u64 {
        self.input.wrapping_add(trial)
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub sp: StreamParams,
    pub algorithm: AlgorithmId,
    pub inputs: AlgorithmInputs,
    /// Fixed input; a fresh uniform input per trial when `None`.
    pub x: Option<Bits>,
    pub channels: Vec<ChannelSpec>,
    pub rhos: Vec<Ratio<u64>>,
    pub trials: u64,
    pub seeds: SeedPlan,
    pub eps_budget: Ratio<u64>,
    /// Skip budget enforcement, for exploring failure curves.
    pub over_budget: bool,
    pub jobs: usize,
}

impl ExperimentConfig {
    pub fn new(sp: StreamParams, algorithm: AlgorithmId, inputs: AlgorithmInputs) -> Self {
        Self {
            sp,
            algorithm,
            inputs,
            x: None,
            channels: vec![ChannelSpec::new(ChannelKind::Random)],
            rhos: vec![Ratio::zero()],
            trials: 1,
            seeds: SeedPlan::default(),
            eps_budget: Ratio::new(1, 8),
            over_budget: false,
            jobs: 1,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.trials == 0 {
            return Err(HarnessError::Config("trials must be at least 1".into()));
        }
        if self.channels.is_empty() || self.rhos.is_empty() {
            return Err(HarnessError::Config("need at least one channel and one rho".into()));
        }
        if let Some(x) = &self.x {
            if x.len() != self.sp.n() as u64 {
                return Err(HarnessError::Config(format!("x has {} bits, n = {}", x.len(), self.sp.n())));
            }
        }
        let alg = build_algorithm(self.algorithm, self.sp.n(), &self.inputs)?;
        if self.sp.mode() == Mode::Linear && alg.linear().is_none() {
            return Err(HarnessError::Config(format!("{} is not linear; use mode=general", self.algorithm)));
        }
        if !self.over_budget {
            let limit = Ratio::new(1u64, 4) - self.eps_budget.min(Ratio::new(1, 4));
            if let Some(r) = self.rhos.iter().find(|&&r| r > limit) {
                return Err(HarnessError::Config(format!(
                    "rho {r} exceeds 1/4 - eps_budget = {limit}; set over_budget to explore it"
                )));
            }
        }
        Ok(())
    }

    fn input(&self, trial: u64) -> Bits {
        match &self.x {
            Some(x) => x.clone(),
            None => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seeds.input_seed(trial));
                Bits::from_bools(&(0..self.sp.n()).map(|_| rng.random()).collect::<Vec<bool>>())
            }
        }
    }

    fn descriptor(&self, ch: &ChannelSpec, rho: Ratio<u64>, trial: u64) -> PatternDescriptor {
        let mut extras = PatternExtras::layout(self.sp.copy_bits(), self.sp.ldc().n_inner());
        extras.copies = ch.copies.clone();
        extras.symbols = ch.symbols.clone();
        extras.flips = ch.flips.clone();
        PatternDescriptor {
            kind: ch.kind,
            seed: self.seeds.channel_seed(trial),
            rho,
            m_len: self.sp.m_len(),
            eps_budget: (!self.over_budget).then_some(self.eps_budget),
            extras,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TrialStatus {
    Success,
    Failure,
    /// Infrastructure error; the trial says nothing about decoding.
    Error(String),
}

impl fmt::Display for TrialStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrialStatus::Success => f.write_str("success"),
            TrialStatus::Failure => f.write_str("failure"),
            TrialStatus::Error(e) => write!(f, "error: {e}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrialRecord {
    pub channel: ChannelKind,
    pub rho: Ratio<u64>,
    pub trial: u64,
    pub status: TrialStatus,
    pub value: Option<u64>,
    pub expected: u64,
    pub conf: Conf,
    pub signed_conf: Conf,
    /// Realized fraction of flipped bits.
    pub weight: Ratio<u64>,
    pub peak_registers: u64,
    pub peak_collected_bits: u64,
    pub bits_read: u64,
    pub audit_checked: u64,
    pub audit_violations: u64,
    /// Every copy read exactly once, in order, covering the whole stream.
    pub one_pass: bool,
    pub wall_time: Duration,
}

impl TrialRecord {
    pub fn success(&self) -> bool {
        self.status == TrialStatus::Success
    }

    pub fn completed(&self) -> bool {
        !matches!(self.status, TrialStatus::Error(_))
    }
}

/// `+conf` when the guess is right, `-conf` otherwise.
pub fn signed_confidence(value: u64, truth: u64, conf: Conf) -> Conf {
    if value == truth {
        conf
    } else {
        -conf
    }
}

/// Dispatches on the stream mode.
pub fn decode<R: Rng + ?Sized>(
    alg: &Algorithm,
    bs: &mut BitStream<'_>,
    sp: &StreamParams,
    rng: &mut R,
) -> Result<DecodeReport, DecodeError> {
    match (sp.mode(), alg.linear()) {
        (Mode::Linear, Some(l)) => run_linear(l, bs, sp, rng),
        (Mode::Linear, None) => Err(DecodeError::Usage(format!("{} is not linear", alg.name()))),
        (Mode::General, _) => run_general(alg.general().as_ref(), bs, sp, rng),
    }
}

fn spans_cover(spans: &[(u64, u64)], len: u64) -> bool {
    let mut at = 0;
    for &(s, e) in spans {
        if s != at || e <= s {
            return false;
        }
        at = e;
    }
    at == len
}

/// One trial of one (channel, rho) cell.
pub fn run_trial(cfg: &ExperimentConfig, ch: &ChannelSpec, rho: Ratio<u64>, trial: u64) -> TrialRecord {
    let start = Instant::now();
    let mut rec = TrialRecord {
        channel: ch.kind,
        rho,
        trial,
        status: TrialStatus::Error(String::new()),
        value: None,
        expected: 0,
        conf: Conf::zero(),
        signed_conf: Conf::zero(),
        weight: Ratio::zero(),
        peak_registers: 0,
        peak_collected_bits: 0,
        bits_read: 0,
        audit_checked: 0,
        audit_violations: 0,
        one_pass: false,
        wall_time: Duration::ZERO,
    };
    if let Err(e) = fill_trial(cfg, ch, rho, trial, &mut rec) {
        rec.status = TrialStatus::Error(e.to_string());
    }
    rec.wall_time = start.elapsed();
    rec
}

fn fill_trial(
    cfg: &ExperimentConfig,
    ch: &ChannelSpec,
    rho: Ratio<u64>,
    trial: u64,
    rec: &mut TrialRecord,
) -> Result<(), HarnessError> {
    let sp = &cfg.sp;
    let alg = build_algorithm(cfg.algorithm, sp.n(), &cfg.inputs)?;
    let x = cfg.input(trial);
    rec.expected = alg.run_noiseless(&x);
    let pattern = Arc::new(make_pattern(cfg.descriptor(ch, rho, trial))?);
    rec.weight = pattern.weight_fraction();
    let src = CorruptedSource::new(encode_source(&x, sp)?, pattern)?;
    let mut bs = BitStream::instrumented(src);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seeds.decoder_seed(trial));
    let rep = decode(&alg, &mut bs, sp, &mut rng)?;
    rec.value = Some(rep.value);
    rec.conf = rep.conf;
    rec.signed_conf = signed_confidence(rep.value, rec.expected, rep.conf);
    rec.peak_registers = rep.peak_registers;
    rec.peak_collected_bits = rep.peak_collected_bits;
    rec.bits_read = rep.bits_read;
    rec.audit_checked = rep.audit.checked;
    rec.audit_violations = rep.audit.violations;
    rec.one_pass = rep.bits_read == sp.m_len() && bs.spans().is_some_and(|s| spans_cover(s, sp.m_len()));
    rec.status = if rep.value == rec.expected { TrialStatus::Success } else { TrialStatus::Failure };
    Ok(())
}

/// Per-(channel, rho) summary over completed trials.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AggregateRow {
    pub channel: ChannelKind,
    pub rho: Ratio<u64>,
    pub trials: u64,
    pub successes: u64,
    /// Trials aborted by infrastructure errors; not in `trials`.
    pub errors: u64,
    pub mean_conf: Conf,
    pub peak_registers_max: u64,
    pub bits_read: u64,
}

impl AggregateRow {
    pub fn success_rate(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            self.successes as f64 / self.trials as f64
        }
    }
}

pub fn aggregate(channel: ChannelKind, rho: Ratio<u64>, records: &[TrialRecord]) -> AggregateRow {
    let done: Vec<&TrialRecord> = records.iter().filter(|r| r.completed()).collect();
    let trials = done.len() as u64;
    let total: Conf = done.iter().map(|r| r.conf).sum();
    AggregateRow {
        channel,
        rho,
        trials,
        successes: done.iter().filter(|r| r.success()).count() as u64,
        errors: records.len() as u64 - trials,
        mean_conf: if trials == 0 { Conf::zero() } else { total / Conf::from_integer(trials as i64) },
        peak_registers_max: done.iter().map(|r| r.peak_registers).max().unwrap_or(0),
        bits_read: done.iter().map(|r| r.bits_read).max().unwrap_or(0),
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub records: Vec<TrialRecord>,
    pub aggregates: Vec<AggregateRow>,
}

/// Runs every (channel, rho, trial), `cfg.jobs` trials at a time.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult, HarnessError> {
    cfg.validate()?;
    let cells: Vec<(usize, Ratio<u64>)> =
        (0..cfg.channels.len()).flat_map(|c| cfg.rhos.iter().map(move |&r| (c, r))).collect();
    let jobs: Vec<(usize, Ratio<u64>, u64)> =
        cells.iter().flat_map(|&(c, r)| (0..cfg.trials).map(move |t| (c, r, t))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs.max(1))
        .build()
        .map_err(|e| HarnessError::Config(format!("thread pool: {e}")))?;
    let records: Vec<TrialRecord> =
        pool.install(|| jobs.par_iter().map(|&(c, r, t)| run_trial(cfg, &cfg.channels[c], r, t)).collect());
    let aggregates = cells
        .iter()
        .enumerate()
        .map(|(k, &(c, r))| {
            let n = cfg.trials as usize;
            aggregate(cfg.channels[c].kind, r, &records[k * n..(k + 1) * n])
        })
        .collect();
    Ok(ExperimentResult { records, aggregates })
}

pub const CSV_HEADER: [&str; 9] = [
    "channel",
    "rho_num",
    "rho_den",
    "trials",
    "successes",
    "mean_conf_num",
    "mean_conf_den",
    "peak_registers_max",
    "bits_read",
];

pub fn write_aggregates_csv<W: Write>(rows: &[AggregateRow], out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.channel.to_string(),
            r.rho.numer().to_string(),
            r.rho.denom().to_string(),
            r.trials.to_string(),
            r.successes.to_string(),
            r.mean_conf.numer().to_string(),
            r.mean_conf.denom().to_string(),
            r.peak_registers_max.to_string(),
            r.bits_read.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Per-trial rows, errors included with their message.
pub fn write_records_csv<W: Write>(records: &[TrialRecord], out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "channel",
        "rho_num",
        "rho_den",
        "trial",
        "status",
        "value",
        "expected",
        "conf_num",
        "conf_den",
        "peak_registers",
        "bits_read",
        "wall_ms",
    ])?;
    for r in records {
        w.write_record([
            r.channel.to_string(),
            r.rho.numer().to_string(),
            r.rho.denom().to_string(),
            r.trial.to_string(),
            r.status.to_string(),
            r.value.map(|v| v.to_string()).unwrap_or_default(),
            r.expected.to_string(),
            r.conf.numer().to_string(),
            r.conf.denom().to_string(),
            r.peak_registers.to_string(),
            r.bits_read.to_string(),
            r.wall_time.as_millis().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Space used by a clean decode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpaceProbe {
    pub peak_registers: u64,
    pub peak_collected_bits: u64,
    pub layout: SpaceLayout,
}

/// Peak registers and collected bits of a full clean decode of `x`.
pub fn space_probe(sp: &StreamParams, alg: &Algorithm, x: &Bits, seed: u64) -> Result<SpaceProbe, HarnessError> {
    let mut bs = BitStream::new(encode_source(x, sp)?);
    let rep = decode(alg, &mut bs, sp, &mut ChaCha8Rng::seed_from_u64(seed))?;
    Ok(SpaceProbe { peak_registers: rep.peak_registers, peak_collected_bits: rep.peak_collected_bits, layout: rep.layout })
}

/// Same, for a single leaf `estA(0, 1)`.
pub fn leaf_space_probe(sp: &StreamParams, alg: &Algorithm, x: &Bits, seed: u64) -> Result<SpaceProbe, HarnessError> {
    let mut bs = BitStream::new(encode_source(x, sp)?);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let probe = match (sp.mode(), alg.linear()) {
        (Mode::Linear, Some(l)) => est_a_linear_metered(0, 1, &mut bs, l, sp, &mut rng)?,
        (Mode::Linear, None) => return Err(HarnessError::Config(format!("{} is not linear", alg.name()))),
        (Mode::General, _) => {
            let a = alg.general();
            est_a_general_metered(0, 1, a.init_state(), &mut bs, a.as_ref(), sp, &mut rng)?
        }
    };
    Ok(SpaceProbe {
        peak_registers: probe.peak_registers,
        peak_collected_bits: bs.stats().peak_collected,
        layout: probe.layout,
    })
}
