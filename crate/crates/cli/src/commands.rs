use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use searchlog::ingest::{generate_synthetic, parse_tsv, parse_tsv_str, write_log, SyntheticParams};
use searchlog::log_model::{ItemKind, SearchLog};
use searchlog::mechanisms::{
    k_anon_release, laplace_histogram_release, pdp_sanitize, threshold_release, token_hash_release, MechanismError,
    PdpAudit, PdpConfig, Release, ReleaseOutput, ThresholdCount, TimestampGranularity,
};
use searchlog::optimizer::{maximize_retention, Certificate, OptimizerError, RhoSearch};
use searchlog::privacy::{audit_probabilistic_dp, audit_pure_dp, AuditError, OutputDistribution, PrivacyParams};
use searchlog::utility::{evaluate as score, UtilityError, UtilityReport, UtilityWeights};

use crate::{
    AuditArgs, AuditedMechanism, CertificateArg, CompareArgs, EvaluateArgs, GenerateArgs, Granularity, Kind, Mechanism,
    SanitizeArgs,
};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("audit failed")]
    AuditFailed,
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Data(_) => 1,
            CliError::Usage(_) => 2,
            CliError::AuditFailed => 3,
        }
    }
}

fn usage(msg: impl std::fmt::Display) -> CliError {
    CliError::Usage(msg.to_string())
}

fn data(msg: impl std::fmt::Display) -> CliError {
    CliError::Data(msg.to_string())
}

impl From<MechanismError> for CliError {
    fn from(e: MechanismError) -> Self {
        usage(e)
    }
}

impl From<UtilityError> for CliError {
    fn from(e: UtilityError) -> Self {
        match e {
            UtilityError::InvalidWeights(_) => usage(e),
            _ => data(e),
        }
    }
}

fn read_log(path: &Path) -> Result<SearchLog, CliError> {
    let file = File::open(path).map_err(|e| data(format!("{}: {e}", path.display())))?;
    parse_tsv(BufReader::new(file)).map_err(|e| data(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| data(format!("{}: {e}", path.display())))
}

fn write_json(path: Option<&Path>, value: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(data)?;
    text.push('\n');
    match path {
        Some(p) => write_file(p, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn weights(arg: Option<&str>) -> Result<UtilityWeights, CliError> {
    arg.map_or(Ok(UtilityWeights::default()), |s| s.parse().map_err(|e| usage(format!("--weights: {e}"))))
}

fn privacy(
    epsilon: Option<f64>,
    delta: Option<f64>,
    cap: Option<usize>,
    mechanism: &str,
) -> Result<PrivacyParams, CliError> {
    let need = |flag: &str| usage(format!("--mechanism {mechanism} requires --{flag}"));
    let params = PrivacyParams::new(
        epsilon.ok_or_else(|| need("epsilon"))?,
        delta.unwrap_or(0.0),
        cap.ok_or_else(|| need("cap"))?,
    );
    params.map_err(usage)
}

fn optimizer_error(e: OptimizerError) -> CliError {
    usage(format!("cannot choose --rho automatically: {e}"))
}

pub fn generate(args: &GenerateArgs) -> Result<(), CliError> {
    let params = SyntheticParams {
        num_users: args.users,
        vocab_size: args.vocab,
        zipf_exponent: args.zipf,
        mean_activity: args.mean_activity,
        click_prob: args.click_prob,
        urls_per_query: args.urls_per_query,
        seed: args.seed,
    };
    params.validate().map_err(|field| {
        let flag = match field {
            "vocab_size" => "--vocab",
            "zipf_exponent" => "--zipf",
            "mean_activity" => "--mean-activity",
            "click_prob" => "--click-prob",
            _ => "--urls-per-query",
        };
        usage(format!("invalid value for {flag}"))
    })?;
    let log = generate_synthetic(&params);
    let file = File::create(&args.out).map_err(|e| data(format!("{}: {e}", args.out.display())))?;
    let mut sink = BufWriter::new(file);
    write_log(&log, &mut sink).map_err(data)?;
    sink.flush().map_err(data)?;
    println!("{} records, {} users", log.num_records(), log.num_users());
    Ok(())
}

fn pdp_config(
    log: &SearchLog,
    params: PrivacyParams,
    rho: Option<f64>,
    weights: UtilityWeights,
) -> Result<(PdpConfig, Option<Value>), CliError> {
    let (rho, plan) = match rho {
        Some(r) => (r, None),
        None => {
            let plan = maximize_retention(log, &params, &weights, &RhoSearch::default()).map_err(optimizer_error)?;
            (plan.rho, Some(plan.to_json()))
        }
    };
    let mut config = PdpConfig::new(params, rho)?;
    config.weights = weights;
    Ok((config, plan))
}

fn run_mechanism(
    log: &SearchLog,
    args: &SanitizeArgs,
    weights: UtilityWeights,
) -> Result<(ReleaseOutput, Option<Value>), CliError> {
    let name = args.mechanism.name();
    let out = match args.mechanism {
        Mechanism::Threshold => {
            let t = args.t.ok_or_else(|| usage("--mechanism threshold requires --t"))?;
            let count = if args.occurrences { ThresholdCount::Occurrences } else { ThresholdCount::DistinctUsers };
            threshold_release(log, t, count)?
        }
        Mechanism::Kanon => k_anon_release(log, args.k.ok_or_else(|| usage("--mechanism kanon requires --k"))?)?,
        Mechanism::TokenHash => token_hash_release(log, args.seed),
        Mechanism::LaplaceHist => {
            let p = privacy(args.privacy.epsilon, args.privacy.delta, args.privacy.cap, name)?;
            laplace_histogram_release(log, &p, args.tau, args.seed)?
        }
        Mechanism::Pdp => {
            let p = privacy(args.privacy.epsilon, args.privacy.delta, args.privacy.cap, name)?;
            let (mut config, plan) = pdp_config(log, p, args.rho, weights)?;
            config.pseudonymize = !args.no_pseudonymize;
            config.timestamps = match args.timestamps {
                Granularity::Exact => TimestampGranularity::Exact,
                Granularity::Day => TimestampGranularity::Day,
            };
            return Ok((pdp_sanitize(log, &config, args.seed)?, plan));
        }
    };
    Ok((out, None))
}

pub fn sanitize(args: &SanitizeArgs) -> Result<(), CliError> {
    let weights = weights(args.weights.as_deref())?;
    let raw = fs::read(&args.input).map_err(|e| data(format!("{}: {e}", args.input.display())))?;
    let text = std::str::from_utf8(&raw).map_err(|e| data(format!("{}: {e}", args.input.display())))?;
    let log = parse_tsv_str(text).map_err(|e| data(format!("{}: {e}", args.input.display())))?;
    let (output, plan) = run_mechanism(&log, args, weights)?;

    match &output.release {
        Release::SanitizedLog(out) => {
            let mut buf = Vec::new();
            write_log(out, &mut buf).map_err(data)?;
            write_file(&args.out, &buf)?;
        }
        other => write_json(Some(&args.out), &other.to_json().expect("aggregate release"))?,
    }

    let mut meta = output.metadata_json();
    meta["input_digest"] = json!(hex::encode(Sha256::digest(&raw)));
    if let Some(plan) = plan {
        meta["plan"] = plan;
    }
    write_json(Some(&sidecar(&args.out)), &meta)
}

/// `out.tsv` -> `out.tsv.meta.json`.
pub fn sidecar(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

fn read_release(path: &Path) -> Result<Release, CliError> {
    let text = fs::read_to_string(path).map_err(|e| data(format!("{}: {e}", path.display())))?;
    if text.trim_start().starts_with('[') {
        let value: Value = serde_json::from_str(&text).map_err(|e| data(format!("{}: {e}", path.display())))?;
        Release::from_json(&value).map_err(|e| data(format!("{}: {e}", path.display())))
    } else {
        parse_tsv_str(&text).map(Release::SanitizedLog).map_err(|e| data(format!("{}: {e}", path.display())))
    }
}

pub fn evaluate(args: &EvaluateArgs) -> Result<(), CliError> {
    let weights = weights(args.weights.as_deref())?;
    let original = read_log(&args.original)?;
    let release = read_release(&args.sanitized)?;
    let kind = match args.kind {
        Kind::Query => ItemKind::Query,
        Kind::Pair => ItemKind::QueryUrlPair,
    };
    let report = score(&original, &release, kind, &weights)?;
    write_json(args.out.as_deref(), &report)
}

fn deterministic(
    release: impl Fn(&SearchLog) -> Result<ReleaseOutput, MechanismError> + Sync,
) -> impl Fn(&SearchLog) -> Result<OutputDistribution, AuditError> + Sync {
    move |log: &SearchLog| {
        let out = release(log).map_err(|e| AuditError::Mechanism(e.to_string()))?;
        let encoding = match out.release {
            Release::SanitizedLog(l) => l.exact_encoding(),
            other => other.to_json().map(|v| v.to_string()).unwrap_or_default(),
        };
        Ok(OutputDistribution::certain(encoding))
    }
}

pub fn audit(args: &AuditArgs) -> Result<(), CliError> {
    let fixture = read_log(&args.fixture)?;
    let base = [fixture];
    // the outcome guard and other enumeration failures are usage errors
    let run = |mechanism: &dyn Fn(&[SearchLog]) -> Result<_, AuditError>| mechanism(&base).map_err(usage);
    let report = match args.mechanism {
        AuditedMechanism::Pdp => {
            let params = PrivacyParams::new(args.epsilon, args.delta, args.cap).map_err(usage)?;
            let mut config = PdpConfig::new(params, args.rho)?;
            config.pseudonymize = !args.no_pseudonymize;
            config.certificate = match args.certificate {
                CertificateArg::LeakBounded => Certificate::LeakBounded,
                CertificateArg::RatioOnly => Certificate::RatioOnly,
            };
            let mechanism = PdpAudit { config, disable_noise: args.disable_noise };
            run(&|b| audit_probabilistic_dp(&mechanism, b, args.epsilon, args.delta))?
        }
        AuditedMechanism::Threshold => {
            let t = args.t;
            let m = deterministic(move |l| threshold_release(l, t, ThresholdCount::DistinctUsers));
            run(&|b| audit_with(&m, b, args.epsilon, args.delta))?
        }
        AuditedMechanism::Kanon => {
            let k = args.k;
            let m = deterministic(move |l| k_anon_release(l, k));
            run(&|b| audit_with(&m, b, args.epsilon, args.delta))?
        }
    };
    write_json(args.out.as_deref(), &report)?;
    if report.pass {
        Ok(())
    } else {
        Err(CliError::AuditFailed)
    }
}

fn audit_with(
    m: &(impl Fn(&SearchLog) -> Result<OutputDistribution, AuditError> + Sync),
    base: &[SearchLog],
    epsilon: f64,
    delta: f64,
) -> Result<searchlog::privacy::AuditReport, AuditError> {
    if delta == 0.0 {
        audit_pure_dp(m, base, epsilon)
    } else {
        audit_probabilistic_dp(m, base, epsilon, delta)
    }
}

#[derive(Debug, Serialize)]
struct CompareRow {
    mechanism: &'static str,
    epsilon: f64,
    seed: u64,
    #[serde(flatten)]
    utility: UtilityReport,
}

pub fn compare(args: &CompareArgs) -> Result<(), CliError> {
    let weights = weights(args.weights.as_deref())?;
    let log = read_log(&args.input)?;
    let mut mechanisms = args.mechanisms.clone();
    mechanisms.sort();
    mechanisms.dedup();

    // one pdp configuration per epsilon, shared by all seeds
    let mut pdp = Vec::new();
    if mechanisms.contains(&Mechanism::Pdp) {
        for &eps in &args.epsilons {
            let p = PrivacyParams::new(eps, args.delta, args.cap).map_err(usage)?;
            pdp.push(pdp_config(&log, p, args.rho, weights)?.0);
        }
    }

    let cells: Vec<(Mechanism, usize, u64)> = mechanisms
        .iter()
        .flat_map(|&m| (0..args.epsilons.len()).flat_map(move |e| (0..args.seeds).map(move |s| (m, e, s))))
        .collect();
    let mut rows: Vec<CompareRow> = cells
        .par_iter()
        .map(|&(mechanism, e, seed)| {
            let epsilon = args.epsilons[e];
            let out = match mechanism {
                Mechanism::Threshold => threshold_release(&log, args.t, ThresholdCount::DistinctUsers)?,
                Mechanism::Kanon => k_anon_release(&log, args.k)?,
                Mechanism::TokenHash => token_hash_release(&log, seed),
                Mechanism::LaplaceHist => {
                    let p = PrivacyParams::new(epsilon, args.delta, args.cap).map_err(usage)?;
                    laplace_histogram_release(&log, &p, args.tau, seed)?
                }
                Mechanism::Pdp => pdp_sanitize(&log, &pdp[e], seed)?,
            };
            let utility = score(&log, &out.release, ItemKind::QueryUrlPair, &weights)?;
            Ok(CompareRow { mechanism: mechanism.name(), epsilon, seed, utility })
        })
        .collect::<Result<_, CliError>>()?;
    rows.sort_by(|a, b| a.mechanism.cmp(b.mechanism).then(a.epsilon.total_cmp(&b.epsilon)).then(a.seed.cmp(&b.seed)));
    write_json(Some(&args.out), &rows)
}
