//! Command-line front end.
//!
//! Every subcommand accepts the shared parameter flags and an optional
//! `key=value` parameter file; flags win over the file. The fully resolved
//! parameters are echoed to stderr before anything else happens.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use num_rational::Ratio;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bits::Bits;
use crate::channel::{apply_pattern, make_pattern, ChannelError, ChannelKind, PatternDescriptor, PatternExtras};
use crate::dec_linear::DecodeError;
use crate::enc::{encode_source, read_stream_file, write_source, write_stream_file, EncError, Mode, StreamParams};
use crate::harness::{
    decode, run_experiment, write_aggregates_csv, write_records_csv, ChannelSpec, ExperimentConfig, HarnessError,
    SeedPlan,
};
use crate::rm_ldc::{LdcError, LdcOverrides};
use crate::selftest::run_selftest;
use crate::stream_model::{build_algorithm, AlgorithmId, AlgorithmInputs, BitStream, StreamError};

pub const DEFAULT_SEED: u64 = 0x5eed;
pub const DEFAULT_EPS_BUDGET: (u64, u64) = (1, 8);
pub const DEFAULT_EPS_LDC: (i64, i64) = (1, 2);

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_FORMAT: i32 = 3;
pub const EXIT_CONFIG: i32 = 4;
pub const EXIT_INFRA: i32 = 5;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Format(String),
    Config(String),
    Infra(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Format(_) => EXIT_FORMAT,
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Infra(_) => EXIT_INFRA,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Format(m) => write!(f, "format error: {m}"),
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Infra(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Infra(e.to_string())
    }
}

impl From<EncError> for CliError {
    fn from(e: EncError) -> Self {
        match e {
            EncError::Config(_) | EncError::Ldc(_) => CliError::Config(e.to_string()),
            EncError::Format(_) | EncError::Truncated { .. } => CliError::Format(e.to_string()),
            EncError::Io(_) => CliError::Infra(e.to_string()),
        }
    }
}

impl From<LdcError> for CliError {
    fn from(e: LdcError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<ChannelError> for CliError {
    fn from(e: ChannelError) -> Self {
        match e {
            ChannelError::Format(_) => CliError::Format(e.to_string()),
            ChannelError::LengthMismatch { .. } => CliError::Format(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<StreamError> for CliError {
    fn from(e: StreamError) -> Self {
        match e {
            StreamError::Missing(..) | StreamError::Config(_) => CliError::Config(e.to_string()),
            _ => CliError::Infra(e.to_string()),
        }
    }
}

impl From<DecodeError> for CliError {
    fn from(e: DecodeError) -> Self {
        match e {
            DecodeError::Usage(m) => CliError::Config(m),
            DecodeError::Enc(e) => e.into(),
            DecodeError::Stream(e) => e.into(),
            _ => CliError::Infra(e.to_string()),
        }
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Config(m) => CliError::Config(m),
            HarnessError::Stream(e) => e.into(),
            HarnessError::Enc(e) => e.into(),
            HarnessError::Channel(e) => e.into(),
            HarnessError::Decode(e) => e.into(),
            HarnessError::Csv(_) | HarnessError::Io(_) => CliError::Infra(e.to_string()),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "nrstream", version, about = "Noise-resilient one-pass streaming over LDC-encoded input")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print the resolved stream and LDC parameters.
    Params(Common),
    /// Encode an input into a stream file.
    Encode {
        #[command(flatten)]
        common: Common,
        /// Input as hex (`c6a1`) or binary (`0b1100...`).
        #[arg(long)]
        x: Option<String>,
        /// File holding the input in either notation.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Flip bits of a stream file under a channel model.
    Corrupt {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        stream: PathBuf,
        #[arg(long, default_value = "random")]
        channel: String,
        /// Corruption rate, `a/b` or decimal.
        #[arg(long, default_value = "0")]
        rho: String,
        /// Comma-separated copy indices for copy_targeted.
        #[arg(long)]
        copies: Option<String>,
        /// Comma-separated outer symbols for symbol_targeted.
        #[arg(long)]
        symbols: Option<String>,
        /// Replay a saved pattern file instead of building one.
        #[arg(long)]
        pattern: Option<PathBuf>,
        #[arg(long)]
        pattern_out: Option<PathBuf>,
        /// Skip the (1/4 - eps) budget check.
        #[arg(long)]
        over_budget: bool,
    },
    /// Decode a stream file with the chosen algorithm.
    Decode {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        stream: PathBuf,
    },
    /// Run a Monte Carlo sweep and print aggregate CSV.
    Experiment {
        #[command(flatten)]
        common: Common,
        /// Comma-separated channel kinds.
        #[arg(long)]
        channels: Option<String>,
        /// Comma-separated rates.
        #[arg(long)]
        rhos: Option<String>,
        #[arg(long)]
        trials: Option<u64>,
        /// Fixed input; a random one per trial otherwise.
        #[arg(long)]
        x: Option<String>,
        /// Per-trial CSV destination.
        #[arg(long)]
        records: Option<PathBuf>,
        #[arg(long)]
        over_budget: bool,
    },
    /// Run the exhaustive small-instance checks.
    Selftest,
}

#[derive(Args, Debug, Clone, Default)]
struct Common {
    /// Parameter file of `key=value` lines; `#` starts a comment.
    #[arg(long, visible_alias = "config")]
    params: Option<PathBuf>,
    /// Input length in bits; must be a power of r.
    #[arg(long)]
    n: Option<String>,
    /// Branching factor.
    #[arg(long)]
    r: Option<String>,
    /// Chunks per level (default 16 linear, 64 general).
    #[arg(long)]
    ell: Option<String>,
    /// Amplification rounds.
    #[arg(long = "T")]
    t: Option<String>,
    /// Curves per local decode.
    #[arg(long)]
    k: Option<String>,
    /// Budget slack: at most (1/4 - eps) m_len flips.
    #[arg(long)]
    eps: Option<String>,
    /// LDC slack (default 1/2).
    #[arg(long)]
    eps_ldc: Option<String>,
    /// Outer polynomials have total degree below d.
    #[arg(long)]
    d: Option<String>,
    /// Variables of the outer code.
    #[arg(long)]
    nvars: Option<String>,
    /// Field width: q = 2^w.
    #[arg(long)]
    w: Option<String>,
    /// `linear` or `general`.
    #[arg(long)]
    mode: Option<String>,
    /// parity, dot, sum, count, index or dfa.
    #[arg(long)]
    algorithm: Option<String>,
    /// Vector for `dot`, hex.
    #[arg(long)]
    y: Option<String>,
    /// Key for `index`.
    #[arg(long)]
    target: Option<String>,
    /// Modulus for `sum`.
    #[arg(long)]
    modulus: Option<String>,
    /// Base seed (default 24301).
    #[arg(long)]
    seed: Option<String>,
    /// Worker threads for `experiment`.
    #[arg(long)]
    jobs: Option<String>,
    /// Output file.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// `key=value` lines with `#` comments.
pub fn parse_param_file(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut map = BTreeMap::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Format(format!("line {}: expected key=value, got `{line}`", no + 1)))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

/// Exact rational from `a/b`, an integer or a decimal.
pub fn parse_ratio(s: &str) -> Result<Ratio<u64>, CliError> {
    let bad = || CliError::Usage(format!("`{s}` is not a non-negative rational"));
    let s = s.trim();
    if let Some((a, b)) = s.split_once('/') {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().parse().map_err(|_| bad())?;
        if b == 0 {
            return Err(bad());
        }
        return Ok(Ratio::new(a, b));
    }
    match s.split_once('.') {
        None => s.parse().map(Ratio::from_integer).map_err(|_| bad()),
        Some((int, frac)) => {
            if frac.len() > 18 || !frac.chars().all(|c| c.is_ascii_digit()) {
                return Err(bad());
            }
            let den = 10u64.pow(frac.len() as u32);
            let i: u64 = if int.is_empty() { 0 } else { int.parse().map_err(|_| bad())? };
            let f: u64 = if frac.is_empty() { 0 } else { frac.parse().map_err(|_| bad())? };
            i.checked_mul(den).and_then(|v| v.checked_add(f)).map(|num| Ratio::new(num, den)).ok_or_else(bad)
        }
    }
}

/// Hex (`c6a1`, `0xc6a1`) or binary (`0b1100`) into exactly `n` bits.
pub fn parse_bits(s: &str, n: usize) -> Result<Bits, CliError> {
    let s = s.trim();
    let bits = match s.strip_prefix("0b") {
        Some(b) => Bits::from_bit_str(b).filter(|b| b.len() == n as u64),
        None => {
            let digits = s.trim_start_matches("0x").chars().filter(|c| *c != '_').count();
            Bits::from_hex(s, n as u64).filter(|_| digits == (n).div_ceil(4))
        }
    };
    bits.ok_or_else(|| CliError::Usage(format!("`{s}` does not describe {n} bits (hex with {} digits, or 0b...)", n.div_ceil(4))))
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>, CliError> {
    s.split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| v.parse().map_err(|_| CliError::Usage(format!("bad {what} `{v}`"))))
        .collect()
}

/// Fully resolved settings shared by the subcommands.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub map: BTreeMap<String, String>,
    pub n: usize,
    pub r: u64,
    pub ell: u64,
    pub t: u64,
    pub mode: Mode,
    pub eps_budget: Ratio<u64>,
    pub eps_ldc: Ratio<i64>,
    pub overrides: LdcOverrides,
    pub algorithm: AlgorithmId,
    pub inputs: AlgorithmInputs,
    pub seed: u64,
    pub seed_is_default: bool,
    pub jobs: usize,
    pub out: Option<PathBuf>,
}

fn get<T: std::str::FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<Option<T>, CliError> {
    map.get(key)
        .map(|v| v.parse().map_err(|_| CliError::Usage(format!("bad value `{v}` for {key}"))))
        .transpose()
}

impl Common {
    fn into_map(self) -> Result<BTreeMap<String, String>, CliError> {
        let mut map = match &self.params {
            Some(p) => parse_param_file(&fs::read_to_string(p).map_err(|e| CliError::Infra(format!("{}: {e}", p.display())))?)?,
            None => BTreeMap::new(),
        };
        let flags = [
            ("n", self.n),
            ("r", self.r),
            ("ell", self.ell),
            ("T", self.t),
            ("k", self.k),
            ("eps", self.eps),
            ("eps_ldc", self.eps_ldc),
            ("d", self.d),
            ("nvars", self.nvars),
            ("w", self.w),
            ("mode", self.mode),
            ("algorithm", self.algorithm),
            ("y", self.y),
            ("target", self.target),
            ("modulus", self.modulus),
            ("seed", self.seed),
            ("jobs", self.jobs),
            ("out", self.out.map(|p| p.display().to_string())),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                map.insert(k.to_string(), v);
            }
        }
        Ok(map)
    }
}

/// Applies defaults to a parameter map.
pub fn resolve(map: BTreeMap<String, String>) -> Result<Resolved, CliError> {
    let mode: Mode = match map.get("mode") {
        Some(m) => m.parse().map_err(|_| CliError::Usage(format!("mode must be linear or general, got `{m}`")))?,
        None => Mode::Linear,
    };
    let n: usize = get(&map, "n")?.unwrap_or(16);
    let algorithm: AlgorithmId = match map.get("algorithm") {
        Some(a) => a.parse().map_err(|e: StreamError| CliError::Usage(e.to_string()))?,
        None if mode == Mode::General => AlgorithmId::Dfa,
        None => AlgorithmId::Parity,
    };
    let y = map.get("y").map(|y| parse_bits(y, n)).transpose()?;
    let desk = LdcOverrides::desk();
    let overrides = LdcOverrides {
        d: get(&map, "d")?.or(desk.d),
        nvars: get(&map, "nvars")?.or(desk.nvars),
        w: get(&map, "w")?.or(desk.w),
        k: get(&map, "k")?.or(desk.k),
        waive_q_range: get(&map, "waive_q_range")?.unwrap_or(false),
    };
    let eps_ldc = match map.get("eps_ldc") {
        Some(e) => {
            let e = parse_ratio(e)?;
            Ratio::new(*e.numer() as i64, *e.denom() as i64)
        }
        None => Ratio::new(DEFAULT_EPS_LDC.0, DEFAULT_EPS_LDC.1),
    };
    let seed: Option<u64> = get(&map, "seed")?;
    Ok(Resolved {
        n,
        r: get(&map, "r")?.unwrap_or(4),
        ell: get(&map, "ell")?.unwrap_or(mode.default_ell()),
        t: get(&map, "T")?.unwrap_or(4),
        mode,
        eps_budget: match map.get("eps") {
            Some(e) => parse_ratio(e)?,
            None => Ratio::new(DEFAULT_EPS_BUDGET.0, DEFAULT_EPS_BUDGET.1),
        },
        eps_ldc,
        overrides,
        algorithm,
        inputs: AlgorithmInputs { y, target: get(&map, "target")?, modulus: get(&map, "modulus")? },
        seed: seed.unwrap_or(DEFAULT_SEED),
        seed_is_default: seed.is_none(),
        jobs: get(&map, "jobs")?.unwrap_or(1),
        out: map.get("out").map(PathBuf::from),
        map,
    })
}

impl Resolved {
    pub fn stream_params(&self) -> Result<StreamParams, CliError> {
        Ok(StreamParams::build(self.n, self.r, self.ell, self.t, self.mode, self.eps_ldc, &self.overrides)?)
    }

    /// `key = value` lines describing every setting in force.
    pub fn echo(&self) -> String {
        let o = &self.overrides;
        let opt = |v: Option<u32>| v.map_or("auto".to_string(), |v| v.to_string());
        let mut s = String::new();
        s += &format!("n = {}\nr = {}\nell = {}\nT = {}\nmode = {}\n", self.n, self.r, self.ell, self.t, self.mode);
        s += &format!("eps = {} (budget: at most (1/4 - eps) m_len flips)\n", self.eps_budget);
        s += &format!("eps_ldc = {}\n", self.eps_ldc);
        s += &format!("d = {}\nnvars = {}\nw = {}\nk = {}\n", opt(o.d), opt(o.nvars), opt(o.w.map(u32::from)), opt(o.k));
        s += &format!("waive_q_range = {}\n", o.waive_q_range);
        s += &format!("algorithm = {}\n", self.algorithm);
        if let Some(y) = &self.inputs.y {
            s += &format!("y = 0b{}\n", y.iter().map(|b| if b { '1' } else { '0' }).collect::<String>());
        }
        if let Some(t) = self.inputs.target {
            s += &format!("target = {t}\n");
        }
        if let Some(m) = self.inputs.modulus {
            s += &format!("modulus = {m}\n");
        }
        s += &format!("seed = {}{}\n", self.seed, if self.seed_is_default { " (default)" } else { "" });
        s += &format!("jobs = {}\n", self.jobs);
        s
    }
}

fn echo_to_stderr(text: &str) {
    for line in text.lines() {
        eprintln!("# {line}");
    }
}

/// Derived quantities for `params`.
pub fn describe_params(sp: &StreamParams) -> String {
    let l = sp.ldc();
    let mut s = String::new();
    s += &format!("D = {}\n", sp.depth());
    s += &format!("q = {}\nn_outer = {}\nN_inner = {}\nN = {}\n", l.q(), l.n_outer(), l.n_inner(), sp.copy_bits());
    s += &format!("queries_per_decode = {}\n", l.queries_per_decode());
    s += &format!("M = (r*ell)^D = {}\n", sp.copies_per_iteration());
    s += &format!("total_copies = T*M = {}\n", sp.total_copies());
    s += &format!("m_len = T*M*N = {}\n", sp.m_len());
    s += &format!("leaf_conf_denominator = {}\n", l.conf_denominator());
    s
}

fn write_output(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| CliError::Infra(format!("{}: {e}", p.display()))),
        None => {
            io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn cmd_params(res: &Resolved) -> Result<(), CliError> {
    let sp = res.stream_params()?;
    write_output(res.out.as_deref(), &format!("{}{}", res.echo(), describe_params(&sp)))
}

fn read_input(x: Option<String>, input: Option<PathBuf>, n: usize) -> Result<Bits, CliError> {
    match (x, input) {
        (Some(x), None) => parse_bits(&x, n),
        (None, Some(p)) => {
            let text = fs::read_to_string(&p).map_err(|e| CliError::Infra(format!("{}: {e}", p.display())))?;
            parse_bits(text.trim(), n)
        }
        _ => Err(CliError::Usage("give exactly one of --x and --input".into())),
    }
}

fn cmd_encode(res: &Resolved, x: Option<String>, input: Option<PathBuf>) -> Result<(), CliError> {
    let sp = res.stream_params()?;
    let x = read_input(x, input, res.n)?;
    let out = res.out.as_deref().ok_or_else(|| CliError::Usage("encode needs --out".into()))?;
    let src = encode_source(&x, &sp)?;
    let file = fs::File::create(out).map_err(|e| CliError::Infra(format!("{}: {e}", out.display())))?;
    write_source(io::BufWriter::new(file), &sp, &src)?;
    println!("wrote {} ({} stream bits)", out.display(), sp.m_len());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_corrupt(
    res: &Resolved,
    stream: &Path,
    channel: &str,
    rho: &str,
    copies: Option<String>,
    symbols: Option<String>,
    pattern: Option<PathBuf>,
    pattern_out: Option<PathBuf>,
    over_budget: bool,
) -> Result<(), CliError> {
    let (sp, z) = read_stream_file(stream)?;
    let desc = match pattern {
        Some(p) => {
            let text = fs::read_to_string(&p).map_err(|e| CliError::Infra(format!("{}: {e}", p.display())))?;
            PatternDescriptor::from_text(&text)?
        }
        None => {
            let mut extras = PatternExtras::layout(sp.copy_bits(), sp.ldc().n_inner());
            if let Some(c) = copies {
                extras.copies = parse_list(&c, "copy index")?;
            }
            if let Some(s) = symbols {
                extras.symbols = parse_list(&s, "symbol")?;
            }
            PatternDescriptor {
                kind: channel.parse()?,
                seed: res.seed,
                rho: parse_ratio(rho)?,
                m_len: z.len(),
                eps_budget: (!over_budget).then_some(res.eps_budget),
                extras,
            }
        }
    };
    let pat = make_pattern(desc)?;
    let corrupted = apply_pattern(&z, &pat)?;
    let out = res.out.as_deref().ok_or_else(|| CliError::Usage("corrupt needs --out".into()))?;
    write_stream_file(out, &sp, &corrupted)?;
    if let Some(p) = pattern_out {
        fs::write(&p, pat.descriptor().to_text()).map_err(|e| CliError::Infra(format!("{}: {e}", p.display())))?;
    }
    let frac = pat.weight_fraction();
    println!("flips = {}\nweight_fraction = {} ({:.6})", pat.count(), frac, *frac.numer() as f64 / *frac.denom() as f64);
    Ok(())
}

fn cmd_decode(res: &Resolved, stream: &Path) -> Result<(), CliError> {
    let (file_sp, z) = read_stream_file(stream)?;
    // The stream header is authoritative; flags may only choose the algorithm.
    let sp = if res.map.contains_key("mode") { file_sp.with_mode(res.mode) } else { file_sp };
    let alg = build_algorithm(res.algorithm, sp.n(), &res.inputs)?;
    let mut bs = BitStream::instrumented(z);
    let rep = decode(&alg, &mut bs, &sp, &mut ChaCha8Rng::seed_from_u64(res.seed))?;
    let one_pass = bs
        .spans()
        .is_some_and(|s| s.windows(2).all(|w| w[0].1 == w[1].0) && s.last().is_some_and(|l| l.1 == sp.m_len()));
    let mut s = String::new();
    s += &format!("stream = n {} r {} ell {} T {} mode {}\n", sp.n(), sp.r(), sp.ell(), sp.t(), sp.mode());
    s += &format!("value = {}\nconf = {}\n", rep.value, rep.conf);
    for (i, (q, c)) in rep.estimates.iter().enumerate() {
        s += &format!("estimate[{i}] = {q} (conf {c})\n");
    }
    s += "metrics:\n";
    s += &format!("  bits_read = {}\n  m_len = {}\n  one_pass = {one_pass}\n", rep.bits_read, sp.m_len());
    s += &format!("  peak_registers = {}\n  peak_collected_bits = {}\n", rep.peak_registers, rep.peak_collected_bits);
    s += &format!("  leaves = {}\n  confidences_checked = {}\n", rep.leaves, rep.audit.checked);
    s += &format!("  denominator_violations = {}\n", rep.audit.violations);
    write_output(res.out.as_deref(), &s)
}

#[allow(clippy::too_many_arguments)]
fn cmd_experiment(
    res: &Resolved,
    channels: Option<String>,
    rhos: Option<String>,
    trials: Option<u64>,
    x: Option<String>,
    records: Option<PathBuf>,
    over_budget: bool,
) -> Result<(), CliError> {
    let sp = res.stream_params()?;
    let mut cfg = ExperimentConfig::new(sp, res.algorithm, res.inputs.clone());
    let channels = channels.or_else(|| res.map.get("channels").cloned()).unwrap_or_else(|| "random".into());
    cfg.channels = parse_list::<String>(&channels, "channel")?
        .iter()
        .map(|c| c.parse::<ChannelKind>().map(ChannelSpec::new))
        .collect::<Result<_, _>>()?;
    let rhos = rhos.or_else(|| res.map.get("rhos").cloned()).unwrap_or_else(|| "0".into());
    cfg.rhos = parse_list::<String>(&rhos, "rho")?.iter().map(|r| parse_ratio(r)).collect::<Result<_, _>>()?;
    cfg.trials = match trials {
        Some(t) => t,
        None => get(&res.map, "trials")?.unwrap_or(10),
    };
    cfg.x = x.or_else(|| res.map.get("x").cloned()).map(|x| parse_bits(&x, res.n)).transpose()?;
    cfg.seeds = SeedPlan::from_base(res.seed);
    cfg.eps_budget = res.eps_budget;
    cfg.over_budget = over_budget || get(&res.map, "over_budget")?.unwrap_or(false);
    cfg.jobs = res.jobs;
    eprintln!("# channels = {channels}\n# rhos = {rhos}\n# trials = {}\n# over_budget = {}", cfg.trials, cfg.over_budget);
    let result = run_experiment(&cfg)?;
    let mut csv = Vec::new();
    write_aggregates_csv(&result.aggregates, &mut csv)?;
    write_output(res.out.as_deref(), &String::from_utf8_lossy(&csv))?;
    if let Some(p) = records {
        let file = fs::File::create(&p).map_err(|e| CliError::Infra(format!("{}: {e}", p.display())))?;
        write_records_csv(&result.records, file)?;
    }
    let errors: u64 = result.aggregates.iter().map(|a| a.errors).sum();
    if errors > 0 {
        eprintln!("# {errors} trial(s) aborted by infrastructure errors; see the records file");
    }
    Ok(())
}

fn cmd_selftest() -> Result<(), CliError> {
    let suites = run_selftest();
    let mut failed = 0;
    for s in &suites {
        println!("{} {} ({:.2?}): {}", if s.passed { "PASS" } else { "FAIL" }, s.name, s.elapsed, s.detail);
        failed += usize::from(!s.passed);
    }
    if failed > 0 {
        return Err(CliError::Infra(format!("{failed} of {} self-test suites failed", suites.len())));
    }
    println!("all {} suites passed", suites.len());
    Ok(())
}

fn dispatch(cmd: Command) -> Result<(), CliError> {
    let prepare = |common: Common| -> Result<Resolved, CliError> {
        let res = resolve(common.into_map()?)?;
        echo_to_stderr(&res.echo());
        Ok(res)
    };
    match cmd {
        Command::Params(common) => cmd_params(&prepare(common)?),
        Command::Encode { common, x, input } => cmd_encode(&prepare(common)?, x, input),
        Command::Corrupt { common, stream, channel, rho, copies, symbols, pattern, pattern_out, over_budget } => {
            cmd_corrupt(&prepare(common)?, &stream, &channel, &rho, copies, symbols, pattern, pattern_out, over_budget)
        }
        Command::Decode { common, stream } => cmd_decode(&prepare(common)?, &stream),
        Command::Experiment { common, channels, rhos, trials, x, records, over_budget } => {
            cmd_experiment(&prepare(common)?, channels, rhos, trials, x, records, over_budget)
        }
        Command::Selftest => cmd_selftest(),
    }
}

/// Parses `args` (program name first) and runs; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.cmd) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratios() {
        assert_eq!(parse_ratio("3/20").unwrap(), Ratio::new(3, 20));
        assert_eq!(parse_ratio("0.15").unwrap(), Ratio::new(3, 20));
        assert_eq!(parse_ratio("2").unwrap(), Ratio::from_integer(2));
        assert_eq!(parse_ratio(".5").unwrap(), Ratio::new(1, 2));
        assert!(parse_ratio("1/0").is_err());
        assert!(parse_ratio("-1").is_err());
    }

    #[test]
    fn param_file_comments_and_overrides() {
        let map = parse_param_file("# desk\nn = 16\nr=4 # branching\n\nell=8\n").unwrap();
        assert_eq!(map.get("ell").map(String::as_str), Some("8"));
        assert!(parse_param_file("oops").is_err());
        let res = resolve(map).unwrap();
        assert_eq!((res.n, res.r, res.ell, res.t), (16, 4, 8, 4));
        assert!(res.seed_is_default);
        assert_eq!(res.eps_budget, Ratio::new(1, 8));
    }

    #[test]
    fn bit_literals() {
        assert_eq!(parse_bits("0b1010", 4).unwrap(), Bits::from_bit_str("1010").unwrap());
        assert_eq!(parse_bits("a", 4).unwrap(), Bits::from_bit_str("1010").unwrap());
        assert!(parse_bits("ab", 4).is_err());
        assert!(parse_bits("0b101", 4).is_err());
    }
}
