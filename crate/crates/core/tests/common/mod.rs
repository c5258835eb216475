#![allow(dead_code)]

use intent_core::harness::{run_scenario, RunResult, ScenarioScript, SystemConfig};
use intent_core::messaging::{Envelope, Lifecycle, MessageKind, Payload, Role};

/// Two-sided acceptance region for Binomial(n, p) with at most `tail` mass
/// excluded on each side, from exact log-pmf sums.
pub fn binomial_region(n: u32, p: f64, tail: f64) -> (u32, u32) {
    let mut ln_fact = vec![0.0f64; n as usize + 1];
    for k in 1..=n as usize {
        ln_fact[k] = ln_fact[k - 1] + (k as f64).ln();
    }
    let pmf = |k: u32| -> f64 {
        if p == 0.0 {
            return if k == 0 { 1.0 } else { 0.0 };
        }
        if p == 1.0 {
            return if k == n { 1.0 } else { 0.0 };
        }
        let (k_, n_) = (k as usize, n as usize);
        (ln_fact[n_] - ln_fact[k_] - ln_fact[n_ - k_] + k as f64 * p.ln() + (n - k) as f64 * (1.0 - p).ln()).exp()
    };
    let mut cdf = 0.0;
    let mut lo = n;
    for k in 0..=n {
        cdf += pmf(k);
        if cdf > tail {
            lo = k;
            break;
        }
    }
    let mut sf = 0.0;
    let mut hi = 0;
    for k in (0..=n).rev() {
        sf += pmf(k);
        if sf > tail {
            hi = k;
            break;
        }
    }
    (lo, hi)
}

/// 99% region: half a percent per tail.
pub fn ci99(n: u32, p: f64) -> (u32, u32) {
    binomial_region(n, p, 0.005)
}

pub fn shipped_script(name: &str) -> (String, ScenarioScript) {
    let path = format!("{}/data/scenarios/{name}.txt", env!("CARGO_MANIFEST_DIR"));
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"));
    let script = text.parse().unwrap_or_else(|e| panic!("{path}: {e}"));
    (text, script)
}

pub fn run_shipped(name: &str, seed: u64) -> RunResult {
    run_scenario(&shipped_script(name).1, SystemConfig::shipped(), seed).unwrap()
}

pub fn run_text(text: &str, seed: u64) -> RunResult {
    run_scenario(&text.parse().unwrap(), SystemConfig::shipped(), seed).unwrap()
}

pub fn kinds(trace: &[Envelope]) -> Vec<MessageKind> {
    trace.iter().map(Envelope::kind).collect()
}

pub fn involves(e: &Envelope, role: Role) -> bool {
    e.src.role() == role || e.dst.role() == role
}

pub fn is_spawn(e: &Envelope) -> bool {
    matches!(e.payload, Payload::LifecycleCommand(Lifecycle::Spawn { .. }))
}

pub fn is_terminate(e: &Envelope) -> bool {
    matches!(e.payload, Payload::LifecycleCommand(Lifecycle::Terminate { .. }))
}

/// `(kind, src, dst)` triples in "Role/name" text form.
pub fn routes(trace: &[Envelope]) -> Vec<(String, String, String)> {
    trace.iter().map(|e| (e.kind().to_string(), e.src.to_string(), e.dst.to_string())).collect()
}

pub fn shipped_scenarios() -> Vec<String> {
    let dir = format!("{}/data/scenarios", env!("CARGO_MANIFEST_DIR"));
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .filter_map(|e| e.ok()?.file_name().into_string().ok()?.strip_suffix(".txt").map(str::to_owned))
        .collect();
    names.sort();
    names
}
