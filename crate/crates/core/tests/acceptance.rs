//! Acceptance gate: one PASS/FAIL line per criterion.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use rand_distr::Distribution;
use serde_json::Value;

use searchlog::ingest::{
    generate_synthetic, harmonic_number, parse_tsv_str, query_token, write_log_string, SyntheticParams,
};
use searchlog::log_model::{build_log, cap_user_activity, ItemKind, QueryRecord, SearchLog};
use searchlog::mechanisms::{
    frequency_inversion_attack, k_anon_release, laplace_histogram_release, pdp_sanitize, recovery_rate,
    threshold_release, token_hash_release, PdpAudit, PdpConfig, Release, ThresholdCount, TimestampGranularity,
};
use searchlog::optimizer::{grid_search_oracle, maximize_retention, retention_bound, OracleGrid, RhoSearch};
use searchlog::privacy::reference::{IdentityRelease, RandomizedResponse, TwoBranchLeak};
use searchlog::privacy::{audit_probabilistic_dp, audit_pure_dp, geometric_noise_pmf, Laplace, PrivacyParams};
use searchlog::rng::{stream, Domain};
use searchlog::utility::{association_preservation, evaluate, session_linkage, tuple_retention, UtilityWeights};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_secs: f64) -> Result<(), String> {
    check(elapsed.as_secs_f64() < limit_secs, || format!("took {elapsed:?}, limit {limit_secs} s"))
}

fn audit_ground_truth() -> Outcome {
    let start = Instant::now();
    let base = vec![common::fixture("tiny_two_users")];
    for eps in [0.1, 1.0, 10.0] {
        let r = audit_pure_dp(&IdentityRelease, &base, eps).map_err(|e| e.to_string())?;
        check(r.max_ratio.is_infinite() && !r.pass, || format!("identity at eps={eps}: {r:?}"))?;
    }
    let mut worst = 0.0f64;
    for eps in [0.5, 1.0, 2.0] {
        let rr = RandomizedResponse { target_user: "1".into(), epsilon: eps };
        let at = audit_pure_dp(&rr, &base, eps).map_err(|e| e.to_string())?;
        let rel = (at.max_ratio - eps.exp()).abs() / eps.exp();
        worst = worst.max(rel);
        check(at.pass && rel < 1e-9, || format!("randomized response at eps={eps}: {at:?}"))?;
        let below = audit_pure_dp(&rr, &base, eps - 0.1).map_err(|e| e.to_string())?;
        check(!below.pass, || format!("randomized response passed at eps-0.1={}", eps - 0.1))?;
    }
    within(start.elapsed(), 1.0)?;
    Ok(format!("identity ratio inf at all eps; RR ratio rel err {worst:.1e}; {:?}", start.elapsed()))
}

const PDP_CONFIGS: [(f64, f64); 3] = [(0.5, 0.05), (1.0, 0.01), (2.0, 0.001)];

fn probabilistic_certification() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut audits = 0;
    for (name, log) in common::tiny_fixtures() {
        for (eps, delta) in PDP_CONFIGS {
            let config = PdpConfig::new(PrivacyParams::new(eps, delta, common::TINY_CAP).unwrap(), 0.5).unwrap();
            let r = audit_probabilistic_dp(&PdpAudit::new(config), std::slice::from_ref(&log), eps, delta)
                .map_err(|e| e.to_string())?;
            check(r.pass, || format!("{name} at ({eps}, {delta}): violating mass {}", r.violating_mass))?;
            worst = worst.max(r.violating_mass / delta);
            audits += 1;
        }
    }
    within(start.elapsed(), 30.0)?;
    Ok(format!("{audits} audits pass, worst mass/delta {worst:.3}; {:?}", start.elapsed()))
}

fn delta_direction() -> Outcome {
    let base = vec![common::fixture("tiny_two_users")];
    let leak = TwoBranchLeak { leak_prob: 0.01 };
    let r = audit_probabilistic_dp(&leak, &base, 1.0, 0.01).map_err(|e| e.to_string())?;
    check((r.violating_mass - 0.01).abs() <= 1e-12, || format!("violating mass {}", r.violating_mass))?;
    check(r.pass, || "fails at delta = 0.01".into())?;
    for delta in [0.02, 0.5] {
        let r = audit_probabilistic_dp(&leak, &base, 1.0, delta).map_err(|e| e.to_string())?;
        check(r.pass, || format!("fails at delta = {delta}"))?;
    }
    for delta in [0.0, 0.009, 0.0099] {
        let r = audit_probabilistic_dp(&leak, &base, 1.0, delta).map_err(|e| e.to_string())?;
        check(!r.pass, || format!("passes at delta = {delta}"))?;
    }
    Ok(format!("violating mass {:.15}", r.violating_mass))
}

fn sampler_moments() -> Outcome {
    let start = Instant::now();
    let lap = Laplace::new(2.0).unwrap();
    let mut rng = stream(7, Domain::Sampler, 0);
    let n = 1_000_000;
    let (mut sum, mut sum2) = (0.0, 0.0);
    for _ in 0..n {
        let x = lap.sample(&mut rng);
        sum += x;
        sum2 += x * x;
    }
    let mean = sum / n as f64;
    let var = (sum2 - n as f64 * mean * mean) / (n - 1) as f64;
    check(mean.abs() <= 0.02, || format!("mean {mean}"))?;
    check((var - 8.0).abs() <= 0.02 * 8.0, || format!("variance {var}"))?;
    let total: f64 = (-60..=60).map(|k| geometric_noise_pmf(k, 0.5)).sum();
    check((total - 1.0).abs() <= 1e-12, || format!("geometric mass {total}"))?;
    within(start.elapsed(), 5.0)?;
    Ok(format!("mean {mean:.4}, variance {var:.4}, geometric mass 1 - {:.1e}; {:?}", 1.0 - total, start.elapsed()))
}

fn optimizer_oracle() -> Outcome {
    let start = Instant::now();
    let weights = UtilityWeights::default();
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for (name, log) in common::tiny_fixtures() {
        for (eps, delta) in PDP_CONFIGS.into_iter().chain([(4.0, 0.3), (8.0, 0.5)]) {
            let privacy = PrivacyParams::new(eps, delta, common::TINY_CAP).unwrap();
            let plan =
                maximize_retention(&log, &privacy, &weights, &RhoSearch::default()).map_err(|e| e.to_string())?;
            let oracle =
                grid_search_oracle(&log, &privacy, &weights, &OracleGrid::default()).map_err(|e| e.to_string())?;
            let gap = (plan.expected_utility - oracle.expected_utility).abs();
            worst = worst.max(gap);
            check(gap < 1e-3, || {
                format!("{name} ({eps}, {delta}): plan {} vs oracle {}", plan.expected_utility, oracle.expected_utility)
            })?;
            let bound = retention_bound((1.0 - plan.rho) * eps, delta / 2.0, common::TINY_CAP);
            let slack = plan.items.iter().map(|it| bound - it.p).fold(f64::INFINITY, f64::min);
            check(slack >= -1e-12, || format!("{name} ({eps}, {delta}): slack {slack}"))?;
            cases += 1;
        }
    }
    within(start.elapsed(), 10.0)?;
    Ok(format!("{cases} cases, worst gap {worst:.2e}; {:?}", start.elapsed()))
}

fn monotone_tradeoff() -> Outcome {
    let start = Instant::now();
    let log = common::fixture("synthetic_1000");
    let (delta, cap) = (0.3, 3);
    let weights = UtilityWeights::default();
    let capped = cap_user_activity(&log, cap);
    let mut previous = f64::NEG_INFINITY;
    let mut summary = Vec::new();
    for eps in [0.25, 0.5, 1.0, 2.0, 4.0] {
        let privacy = PrivacyParams::new(eps, delta, cap).unwrap();
        let plan = maximize_retention(&log, &privacy, &weights, &RhoSearch::default()).map_err(|e| e.to_string())?;
        check(plan.expected_utility >= previous, || format!("expected utility dropped at eps={eps}"))?;
        previous = plan.expected_utility;

        let config = PdpConfig::new(privacy, plan.rho).unwrap();
        let runs: Vec<f64> = (0..20)
            .map(|seed| {
                let out = pdp_sanitize(&log, &config, seed).unwrap();
                evaluate(&capped, &out.release, ItemKind::QueryUrlPair, &weights).unwrap().composite
            })
            .collect();
        let mean = runs.iter().sum::<f64>() / 20.0;
        let var = runs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 19.0;
        let se = (var / 20.0).sqrt();
        let z = (mean - plan.expected_utility) / se;
        check(z.abs() <= 3.0, || {
            format!("eps={eps}: empirical {mean} vs expected {} (z={z:.2})", plan.expected_utility)
        })?;
        summary.push(format!("{eps}:{:.4}(z={z:+.2})", plan.expected_utility));
    }
    within(start.elapsed(), 60.0)?;
    Ok(format!("{}; {:?}", summary.join(" "), start.elapsed()))
}

fn critique_metrics() -> Outcome {
    let start = Instant::now();
    let mut logs: Vec<SearchLog> = common::tiny_fixtures().into_iter().map(|(_, l)| l).collect();
    logs.push(common::fixture("synthetic_1000"));
    let mut checked = 0;
    for log in &logs {
        for seed in 0..5 {
            for eps in [0.1, 1.0, 1e6] {
                let privacy = PrivacyParams::new(eps, 0.0, 2).unwrap();
                let out = laplace_histogram_release(log, &privacy, 0.0, seed).map_err(|e| e.to_string())?;
                let link = session_linkage(log, &out.release).map_err(|e| e.to_string())?;
                let ret = tuple_retention(log, &out.release).map_err(|e| e.to_string())?;
                check(link == 0.0 && ret == 0.0, || format!("linkage {link}, retention {ret}"))?;
                checked += 1;
            }
        }
        for t in [1, 2] {
            let out = threshold_release(log, t, ThresholdCount::DistinctUsers).map_err(|e| e.to_string())?;
            let assoc = association_preservation(log, &out.release).map_err(|e| e.to_string())?;
            check(assoc == 0.0, || format!("query set association {assoc}"))?;
        }
    }
    within(start.elapsed(), 1.0)?;
    Ok(format!("{checked} histogram releases with zero linkage and retention; {:?}", start.elapsed()))
}

fn attack_demonstration() -> Outcome {
    // distinct frequencies: token i appears 11 - i times
    let mut records = Vec::new();
    let mut public = BTreeMap::new();
    for i in 1..=10 {
        let token = format!("tok{i:02}");
        for j in 0..(11 - i) {
            records.push(QueryRecord::no_click(format!("{}", i * 100 + j), &token, j as i64).unwrap());
        }
        public.insert(token, (11 - i) as f64);
    }
    let log = build_log(records).unwrap();
    let tokens: Vec<String> = public.keys().cloned().collect();
    let targets: Vec<&str> = tokens.iter().map(String::as_str).collect();
    for seed in 0..5 {
        let Release::TokenStream(pairs) = token_hash_release(&log, seed).release else { unreachable!() };
        let rate = recovery_rate(&frequency_inversion_attack(&pairs, &public), seed, &targets);
        check(rate == 1.0, || format!("distinct-frequency recovery {rate} at seed {seed}"))?;
    }

    let golden: Value = serde_json::from_str(include_str!("golden/attack_recovery.json")).unwrap();
    let corpus = &golden["corpus"];
    let vocab = corpus["vocab_size"].as_u64().unwrap() as usize;
    let h = harmonic_number(vocab, 1.0);
    let zipf: BTreeMap<String, f64> = (1..=vocab).map(|r| (query_token(r, vocab), 1.0 / (r as f64 * h))).collect();
    let top: Vec<String> = (1..=10).map(|r| query_token(r, vocab)).collect();
    let top: Vec<&str> = top.iter().map(String::as_str).collect();
    let mut above = 0;
    for run in golden["runs"].as_array().unwrap() {
        let seed = run["seed"].as_u64().unwrap();
        let log = generate_synthetic(&SyntheticParams {
            num_users: corpus["num_users"].as_u64().unwrap() as usize,
            vocab_size: vocab,
            zipf_exponent: corpus["zipf_exponent"].as_f64().unwrap(),
            mean_activity: corpus["mean_activity"].as_f64().unwrap(),
            click_prob: corpus["click_prob"].as_f64().unwrap(),
            urls_per_query: corpus["urls_per_query"].as_u64().unwrap() as usize,
            seed,
        });
        let Release::TokenStream(pairs) = token_hash_release(&log, seed).release else { unreachable!() };
        check(pairs.len() as u64 == run["tokens"].as_u64().unwrap(), || format!("token count drifted at seed {seed}"))?;
        let rate = recovery_rate(&frequency_inversion_attack(&pairs, &zipf), seed, &top);
        let frozen = run["top10_recovery"].as_f64().unwrap();
        check((rate - frozen).abs() < 1e-12, || format!("seed {seed}: recovery {rate}, golden {frozen}"))?;
        if rate > 0.5 {
            above += 1;
        }
    }
    check(above as u64 == golden["seeds_strictly_above_half"].as_u64().unwrap(), || "golden margin drifted".into())?;
    check(above >= 18, || format!("only {above} of 20 seeds above 50%"))?;
    Ok(format!("distinct fixture 100%; Zipf top-10 > 50% in {above}/20 seeds"))
}

fn schema_preservation() -> Outcome {
    let mut checked = 0;
    for case in 0..200u64 {
        let log = common::random_log(case);
        let eps = [0.5, 2.0, 50.0][case as usize % 3];
        let delta = [0.05, 0.4, 1.0][case as usize / 3 % 3];
        let cap = 1 + case as usize % 4;
        let mut config = PdpConfig::new(PrivacyParams::new(eps, delta, cap).unwrap(), 0.3).unwrap();
        config.timestamps = if case % 2 == 0 { TimestampGranularity::Day } else { TimestampGranularity::Exact };
        let outputs =
            [k_anon_release(&log, 1 + case as usize % 3).unwrap(), pdp_sanitize(&log, &config, case).unwrap()];
        for out in outputs {
            let sanitized = out.release.as_log().expect("schema-preserving");
            sanitized.check_invariants().map_err(|e| format!("case {case}: {e}"))?;
            let text = write_log_string(sanitized).map_err(|e| e.to_string())?;
            let back = parse_tsv_str(&text).map_err(|e| format!("case {case}: {e}"))?;
            check(&back == sanitized, || format!("case {case}: round trip changed the log"))?;
            checked += 1;
        }
    }
    Ok(format!("{checked} sanitized logs from 200 random cases round-trip"))
}

fn identity_limits() -> Outcome {
    let mut logs: Vec<SearchLog> = common::tiny_fixtures().into_iter().map(|(_, l)| l).collect();
    logs.push(common::fixture("synthetic_1000"));
    for log in &logs {
        let queries: BTreeSet<String> = log.records().map(|r| r.query.clone()).collect();
        let t1 = threshold_release(log, 1, ThresholdCount::DistinctUsers).unwrap();
        check(t1.release == Release::QuerySet(queries), || "threshold t=1 dropped queries".into())?;

        let k1 = k_anon_release(log, 1).unwrap();
        check(k1.release.as_log() == Some(log), || "kanon k=1 changed the log".into())?;

        for cap in [1, 3] {
            let capped = cap_user_activity(log, cap);
            let mut config = PdpConfig::new(PrivacyParams::new(1.0, 1.0, cap).unwrap(), 0.5).unwrap();
            config.timestamps = TimestampGranularity::Exact;
            let out = pdp_sanitize(log, &config, 11).unwrap();
            let out = out.release.as_log().unwrap();
            check(out.anonymous_encoding() == capped.anonymous_encoding(), || "vacuous pdp altered records".into())?;
            let mut ids: Vec<usize> = out.users().keys().map(|u| u.parse().unwrap()).collect();
            ids.sort_unstable();
            check(ids == (1..=capped.num_users()).collect::<Vec<_>>(), || "pseudonyms are not 1..k".into())?;
        }
    }
    Ok(format!("threshold t=1, kanon k=1 and vacuous pdp reproduce {} logs", logs.len()))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("audit ground truth", audit_ground_truth),
        ("probabilistic DP certification", probabilistic_certification),
        ("delta-direction check", delta_direction),
        ("sampler moments", sampler_moments),
        ("optimizer-oracle equivalence", optimizer_oracle),
        ("monotone tradeoff", monotone_tradeoff),
        ("critique metrics", critique_metrics),
        ("attack demonstration", attack_demonstration),
        ("schema preservation", schema_preservation),
        ("identity limits", identity_limits),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
