use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::dist::DiscreteDist;
use crate::error::Result;
use crate::theory::{
    check_prop1_bound, check_prop2, check_prop3, derivative_limit, gaussian_gap, prop3_instance,
    random_kernel, random_uncertainty, random_visited, richardson_derivative, uniform_curriculum,
    vu_curriculum, LogConcaveFamily, OutcomeKernel, Verdict,
};

pub const DERIVATIVE_REL_TOL: f64 = 1e-5;
pub const CLOSED_FORM_TOL: f64 = 1e-10;
pub const GAUSSIAN_GAP_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SuiteConfig {
    pub seed: u64,
    pub derivative_instances: usize,
    pub exploit_instances: usize,
    pub tagged_instances: usize,
    pub max_states: usize,
    /// Flip the sign of the informative-goal offset before checking tagged
    /// instances; the suite must then report a structural error.
    pub inject_fault: bool,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            derivative_instances: 100,
            exploit_instances: 1000,
            tagged_instances: 100,
            max_states: 32,
            inject_fault: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckVerdict {
    Pass,
    Fail,
    Error,
}

/// One line of the verification report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckLine {
    pub name: String,
    pub inputs_hash: String,
    pub values: Value,
    pub verdict: CheckVerdict,
}

impl CheckLine {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("check line serializes")
    }
}

type CheckFn = fn(&SuiteConfig, &mut ChaCha8Rng) -> Result<(Value, bool)>;

const CHECKS: &[(&str, CheckFn)] = &[
    ("worked_example", worked_example),
    ("derivative_identity", derivative_identity),
    ("exploit_kernel_sign", exploit_kernel_sign),
    ("tagged_instances", tagged_instances),
    ("entropy_variance_bound", entropy_variance_bound),
    ("gaussian_gap", gaussian_gap_check),
];

pub fn registered_checks() -> Vec<&'static str> {
    CHECKS.iter().map(|(n, _)| *n).collect()
}

fn inputs_hash(name: &str, cfg: &SuiteConfig) -> String {
    let text = serde_json::to_string(&json!({ "check": name, "suite": cfg })).expect("json");
    hex::encode(&Sha256::digest(text.as_bytes())[..8])
}

/// Runs every registered check, each on its own seeded stream. Errors
/// inside a check become an `error` verdict rather than aborting the suite.
pub fn verify_theory(cfg: &SuiteConfig) -> Vec<CheckLine> {
    CHECKS
        .iter()
        .enumerate()
        .map(|(i, (name, check))| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(i as u64);
            let (values, verdict) = match check(cfg, &mut rng) {
                Ok((v, true)) => (v, CheckVerdict::Pass),
                Ok((v, false)) => (v, CheckVerdict::Fail),
                Err(e) => (json!({ "error": e.to_string() }), CheckVerdict::Error),
            };
            CheckLine {
                name: name.to_string(),
                inputs_hash: inputs_hash(name, cfg),
                values,
                verdict,
            }
        })
        .collect()
}

pub fn all_passed(lines: &[CheckLine]) -> bool {
    lines.iter().all(|l| l.verdict == CheckVerdict::Pass)
}

fn worked_example(_: &SuiteConfig, _: &mut ChaCha8Rng) -> Result<(Value, bool)> {
    let p = DiscreteDist::new(vec![0.75, 0.25])?;
    let r = check_prop2(&p, &[1.0, 3.0])?;
    let expected_cov = -0.5 * 3f64.ln();
    let ok = r.verdict == Verdict::Pass
        && (r.covariance - expected_cov).abs() < 1e-12
        && r.derivative_limit > 0.0
        && r.identity_holds;
    Ok((
        json!({
            "covariance": r.covariance,
            "derivative": r.derivative_limit,
            "verdict": r.verdict,
        }),
        ok,
    ))
}

fn state_count(cfg: &SuiteConfig, rng: &mut ChaCha8Rng) -> usize {
    rng.random_range(2..=cfg.max_states.max(2))
}

fn derivative_identity(cfg: &SuiteConfig, rng: &mut ChaCha8Rng) -> Result<(Value, bool)> {
    let mut worst: f64 = 0.0;
    for i in 0..cfg.derivative_instances {
        let n = state_count(cfg, rng);
        let p = random_visited(n, true, rng)?;
        let u = random_uncertainty(&p, rng);
        let kernel = if i % 2 == 0 {
            OutcomeKernel::exploit(n)?
        } else {
            random_kernel(&p, rng)?
        };
        let limit = derivative_limit(&p, &uniform_curriculum(&p)?, &vu_curriculum(&p, &u)?, &kernel)?;
        let fd = richardson_derivative(&p, &u, &kernel)?;
        let rel = (limit - fd).abs() / limit.abs().max(f64::MIN_POSITIVE);
        worst = worst.max(rel);
    }
    Ok((
        json!({ "instances": cfg.derivative_instances, "max_relative_error": worst }),
        worst < DERIVATIVE_REL_TOL,
    ))
}

fn exploit_kernel_sign(cfg: &SuiteConfig, rng: &mut ChaCha8Rng) -> Result<(Value, bool)> {
    let (mut negative, mut sign_checked, mut violations) = (0usize, 0usize, 0usize);
    for _ in 0..cfg.exploit_instances {
        let n = state_count(cfg, rng);
        let p = random_visited(n, true, rng)?;
        let u = random_uncertainty(&p, rng);
        let r = check_prop2(&p, &u)?;
        if r.covariance < 0.0 {
            negative += 1;
            if !(r.derivative_limit > 0.0) {
                violations += 1;
            }
        }
        if r.covariance != 0.0 {
            sign_checked += 1;
            if r.derivative_limit.signum() != -r.covariance.signum() {
                violations += 1;
            }
        }
        if r.verdict == Verdict::Fail {
            violations += 1;
        }
    }
    Ok((
        json!({
            "instances": cfg.exploit_instances,
            "negative_covariance": negative,
            "sign_checked": sign_checked,
            "violations": violations,
        }),
        violations == 0,
    ))
}

fn tagged_instances(cfg: &SuiteConfig, rng: &mut ChaCha8Rng) -> Result<(Value, bool)> {
    let (mut passes, mut worst) = (0usize, 0f64);
    for _ in 0..cfg.tagged_instances {
        let n = rng.random_range(4..=cfg.max_states.max(4));
        let inst = prop3_instance(n, rng.random())?;
        let delta_info = if cfg.inject_fault {
            -inst.delta_info
        } else {
            inst.delta_info
        };
        let r = check_prop3(&inst.visited, &inst.uncertainty, &inst.kernel, inst.delta_uninfo, delta_info)?;
        if r.verdict == Verdict::Pass && r.derivative_limit > 0.0 {
            passes += 1;
        }
        worst = worst.max((r.three_term - r.derivative_limit).abs());
    }
    Ok((
        json!({
            "instances": cfg.tagged_instances,
            "passes": passes,
            "max_closed_form_error": worst,
        }),
        passes == cfg.tagged_instances && worst <= CLOSED_FORM_TOL,
    ))
}

fn entropy_variance_bound(_: &SuiteConfig, _: &mut ChaCha8Rng) -> Result<(Value, bool)> {
    let mut rows = Vec::new();
    let mut ok = true;
    for name in ["gaussian", "uniform", "exponential", "laplace"] {
        for sigma in [0.01, 1.0, 100.0] {
            let r = check_prop1_bound(&LogConcaveFamily::from_name(name, sigma)?)?;
            ok &= r.holds;
            rows.push(json!({ "family": name, "scale": sigma, "gap": r.gap, "holds": r.holds }));
        }
    }
    Ok((Value::Array(rows), ok))
}

fn gaussian_gap_check(_: &SuiteConfig, _: &mut ChaCha8Rng) -> Result<(Value, bool)> {
    let mut worst: f64 = 0.0;
    for sigma in [0.01, 1.0, 100.0] {
        let r = check_prop1_bound(&LogConcaveFamily::Gaussian { sigma })?;
        worst = worst.max((r.gap - gaussian_gap()).abs());
    }
    Ok((
        json!({ "gap": gaussian_gap(), "max_deviation": worst }),
        worst < GAUSSIAN_GAP_TOL,
    ))
}
