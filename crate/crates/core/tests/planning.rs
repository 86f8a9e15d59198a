mod common;

use searchlog::log_model::{cap_user_activity, ItemKind};
use searchlog::mechanisms::{pdp_sanitize, PdpAudit, PdpConfig};
use searchlog::optimizer::{maximize_retention, retention_bound, Certificate, RhoSearch};
use searchlog::privacy::{audit_probabilistic_dp, PrivacyParams};
use searchlog::utility::{evaluate, UtilityWeights};

#[test]
fn empirical_utility_matches_expected_on_tiny_fixtures() {
    let weights = UtilityWeights::default();
    for (name, log) in common::tiny_fixtures() {
        let capped = cap_user_activity(&log, common::TINY_CAP);
        for (eps, delta) in [(1.0, 0.05), (4.0, 0.3)] {
            let privacy = PrivacyParams::new(eps, delta, common::TINY_CAP).unwrap();
            let plan = maximize_retention(&log, &privacy, &weights, &RhoSearch::default()).unwrap();
            let config = PdpConfig::new(privacy, plan.rho).unwrap();
            let runs: Vec<f64> = (0..100)
                .map(|seed| {
                    let out = pdp_sanitize(&log, &config, seed).unwrap();
                    evaluate(&capped, &out.release, ItemKind::QueryUrlPair, &weights).unwrap().composite
                })
                .collect();
            let mean = runs.iter().sum::<f64>() / 100.0;
            let var = runs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 99.0;
            let se = (var / 100.0).sqrt();
            // rare-event plans can show zero sample variance; a [0, 1] variable
            // has variance at most E(1 - E), so use that as the floor
            let e = plan.expected_utility;
            let tol = 3.0 * se.max((e * (1.0 - e) / 100.0).sqrt()) + 1e-12;
            assert!(
                (mean - plan.expected_utility).abs() <= tol,
                "{name} ({eps}, {delta}): empirical {mean}, expected {}, se {se}",
                plan.expected_utility
            );
        }
    }
}

#[test]
fn ratio_only_certificate_is_refuted() {
    let log = common::fixture("tiny_shared_item");
    let privacy = PrivacyParams::new(2.0, 0.001, common::TINY_CAP).unwrap();
    let mut config = PdpConfig::new(privacy, 0.5).unwrap();
    config.certificate = Certificate::RatioOnly;
    let report =
        audit_probabilistic_dp(&PdpAudit::new(config.clone()), std::slice::from_ref(&log), 2.0, 0.001).unwrap();
    assert!(!report.pass, "mass {}", report.violating_mass);

    config.certificate = Certificate::LeakBounded;
    let report = audit_probabilistic_dp(&PdpAudit::new(config), &[log], 2.0, 0.001).unwrap();
    assert!(report.pass, "mass {}", report.violating_mass);
}

#[test]
fn default_bound_never_exceeds_ratio_only() {
    for eps_b in [0.05, 0.5, 1.0, 4.0] {
        for delta_b in [0.0, 0.005, 0.15, 0.5] {
            for m in 1..5 {
                let tight = retention_bound(eps_b, delta_b, m);
                let loose = Certificate::RatioOnly.bound(eps_b, delta_b, m);
                assert!(tight <= loose + 1e-15, "eps_b {eps_b}, delta_b {delta_b}, m {m}");
            }
        }
    }
}

#[test]
fn disabled_noise_fails_the_audit() {
    let log = common::fixture("tiny_two_users");
    let privacy = PrivacyParams::new(1.0, 0.05, common::TINY_CAP).unwrap();
    let mut audit = PdpAudit::new(PdpConfig::new(privacy, 0.5).unwrap());
    audit.disable_noise = true;
    let report = audit_probabilistic_dp(&audit, &[log], 1.0, 0.05).unwrap();
    assert!(!report.pass);
    assert!(report.violating_mass > 0.05);
}
