//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use common::{ci99, involves, is_spawn, is_terminate, routes, run_shipped, run_text, shipped_scenarios};
use intent_core::core_agent::Pose;
use intent_core::dynamic_agent::{Action, FsmDefinition, NavTarget, State, Step};
use intent_core::harmoniser::{DecisionKind, Reason};
use intent_core::harness::{
    render_csv, run_keyword_experiment, run_scenario, ExperimentConfig, Mic, ScenarioScript, System, SystemConfig,
};
use intent_core::messaging::{Ack, Envelope, Lifecycle, MessageKind, Payload, RequestMsg, Role, Tick};
use intent_core::store::{PackageDocument, Store, TaskPackage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = fn() -> Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let held: bool = $cond;
        if !held {
            return Err(format!($($msg)+));
        }
    };
}

const SEED: u64 = 2024;

fn main() {
    let checks: [(&str, Check); 8] = [
        ("single-slot scheduling", single_slot_scheduling),
        ("voice call flow", voice_call_flow),
        ("failure notice and speech cache", failure_and_cache),
        ("conversation round trip", conversation_round_trip),
        ("keyword-spotting simulation", keyword_spotting),
        ("multimodal fallback", multimodal_fallback),
        ("store round trip and tamper detection", store_tamper),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS {name}: {detail} ({secs:.2} s)"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why} ({secs:.2} s)");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}

fn ack_outcome(e: &Envelope) -> Option<&str> {
    match &e.payload {
        Payload::Ack(Ack::Outcome { outcome }) => Some(outcome),
        _ => None,
    }
}

fn single_slot_scheduling() -> Result<String, String> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let names = ["call_robot", "guard", "medicine_reminder", "dance", "fly_kite"];
    let mut requests: Vec<(Tick, &str, i64)> = (0..1000)
        .map(|_| (rng.random_range(0..4000), names[rng.random_range(0..names.len())], rng.random_range(0..10)))
        .collect();
    requests.sort_by_key(|r| r.0);

    let mut sys = System::new(SystemConfig::shipped(), SEED);
    let horizon = requests.last().unwrap().0 + 200;
    let mut next = 0;
    let mut max_running = 0;
    while sys.now() <= horizon {
        while next < requests.len() && requests[next].0 == sys.now() {
            let (_, task, prio) = requests[next];
            sys.operator_submit(task, prio, BTreeMap::new()).map_err(|e| e.to_string())?;
            next += 1;
        }
        sys.step();
        let on_bus = sys.bus().registered_with_role(Role::DynamicAgent);
        let hosted = usize::from(sys.runtime().current().is_some());
        max_running = max_running.max(on_bus).max(hosted);
        ensure!(on_bus <= 1 && hosted <= 1, "{on_bus} agents registered at tick {}", sys.now() - 1);
    }
    let r = sys.into_result();
    ensure!(r.decisions.len() == requests.len(), "{} of {} requests decided", r.decisions.len(), requests.len());

    // priority dominance, checked against the spawn commands in the trace
    let mut dominated = 0;
    for d in r.decisions.iter().filter(|d| d.reason == Reason::HigherPriorityRunning) {
        let notice = r
            .trace
            .iter()
            .position(|e| matches!(&e.payload, Payload::FailureNotice(n) if n.request_id == d.request_id))
            .ok_or(format!("no failure notice for request {}", d.request_id))?;
        let spawned = r.trace[..notice].iter().rev().find(|e| is_spawn(e)).ok_or("rejection before any spawn")?;
        let Payload::LifecycleCommand(Lifecycle::Spawn { priority, .. }) = spawned.payload else { unreachable!() };
        let snapshot = d.running_at_decision.as_ref().ok_or("rejection without a running agent")?;
        ensure!(
            priority >= d.priority && snapshot.priority == priority,
            "request {} (priority {}) rejected while {} ran at {priority}",
            d.request_id,
            d.priority,
            spawned.dst
        );
        dominated += 1;
    }

    // every spawn comes after the previous agent reported its end or was removed
    let mut preemptions = 0;
    let spawns: Vec<(usize, &Envelope)> = r.trace.iter().enumerate().filter(|(_, e)| is_spawn(e)).collect();
    for pair in spawns.windows(2) {
        let (prev_at, prev) = pair[0];
        let (at, spawn) = pair[1];
        let ended = r.trace[prev_at..at].iter().any(|e| e.src == prev.dst && ack_outcome(e).is_some());
        let forced = r.terminations.iter().any(|t| t.agent == prev.dst && t.forced && t.tick <= spawn.ts);
        ensure!(ended || forced, "{} spawned before {} ended", spawn.dst, prev.dst);
        if r.trace[prev_at..at].iter().any(|e| is_terminate(e) && e.dst == prev.dst) {
            let term = r.trace[prev_at..at].iter().position(|e| is_terminate(e) && e.dst == prev.dst).unwrap();
            let ack = r.trace[prev_at..at].iter().position(|e| e.src == prev.dst && ack_outcome(e).is_some());
            ensure!(ack.is_none_or(|a| a > term) || forced, "ack before terminate for {}", prev.dst);
            preemptions += 1;
        }
    }
    let preempt_decisions = r.decisions.iter().filter(|d| d.kind == DecisionKind::PreemptedAndAccepted).count();
    ensure!(preemptions >= preempt_decisions, "{preempt_decisions} preemptions but {preemptions} ordered terminations");

    let rejected = r.decisions.iter().filter(|d| d.kind == DecisionKind::Rejected).count();
    let notices = r.trace.iter().filter(|e| e.kind() == MessageKind::FailureNotice).count();
    ensure!(rejected == notices, "{rejected} rejections but {notices} failure notices");
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    Ok(format!(
        "1000 requests, max {max_running} running, {dominated} dominance rejections, {preempt_decisions} preemptions ordered, {rejected} notices"
    ))
}

fn voice_call_flow() -> Result<String, String> {
    let r = run_shipped("voice_call", SEED);
    let expected = [
        ("SttRequest", "CoreAgent/robot", "PlatformAgent/apl"),
        ("SttResponse", "PlatformAgent/apl", "CoreAgent/robot"),
        ("IntentMsg", "CoreAgent/robot", "TaskRequester/robot"),
        ("TaskRequestMsg", "TaskRequester/robot", "TaskHarmoniser/robot"),
        ("DownloadRequest", "TaskHarmoniser/robot", "StoreAgent/ars"),
        ("DownloadResponse", "StoreAgent/ars", "TaskHarmoniser/robot"),
        ("LifecycleCommand", "TaskHarmoniser/robot", "DynamicAgent/call_robot"),
    ];
    let got = routes(&r.trace);
    let expected: Vec<(String, String, String)> =
        expected.iter().map(|(k, s, d)| (k.to_string(), s.to_string(), d.to_string())).collect();
    ensure!(got.len() >= 7 && got[..7] == expected[..], "prefix was {:?}", &got[..got.len().min(7)]);
    ensure!(is_spawn(&r.trace[6]), "seventh envelope is not a spawn");

    let th_or_store: Vec<&Envelope> =
        r.trace.iter().filter(|e| involves(e, Role::TaskHarmoniser) || involves(e, Role::StoreAgent)).collect();
    let extra: Vec<String> = th_or_store
        .iter()
        .filter(|e| !(e.id <= 7 || (e.src.role() == Role::DynamicAgent && ack_outcome(e) == Some("succeeded"))))
        .map(|e| format!("{} {}->{}", e.kind(), e.src, e.dst))
        .collect();
    ensure!(extra.is_empty(), "extraneous harmoniser/store traffic: {extra:?}");
    ensure!(th_or_store.len() == 5, "{} harmoniser/store envelopes", th_or_store.len());
    ensure!(r.finished.len() == 1 && r.finished[0].outcome == "succeeded", "agent did not succeed");
    Ok(format!("7-step prefix exact, {} harmoniser/store envelopes, task succeeded", th_or_store.len()))
}

fn failure_and_cache() -> Result<String, String> {
    let r = run_shipped("failure_cache", SEED);
    let notices = r.trace.iter().filter(|e| e.kind() == MessageKind::FailureNotice).count();
    let tts = r.trace.iter().filter(|e| e.kind() == MessageKind::TtsRequest).count();
    ensure!(notices == 2, "{notices} failure notices");
    ensure!(
        tts == 1 && r.platform_calls.tts == 1,
        "{tts} TtsRequest envelopes, {} platform calls",
        r.platform_calls.tts
    );
    ensure!(r.playback.len() == 2, "{} playback events", r.playback.len());
    ensure!(r.playback[0].text == r.playback[1].text, "different texts played");
    ensure!(
        r.decisions.iter().all(|d| d.kind == DecisionKind::Rejected && d.reason == Reason::NotACreationIntent),
        "unexpected decisions {:?}",
        r.decisions
    );
    Ok(format!("{notices} notices, {tts} synthesis request, {} playbacks", r.playback.len()))
}

type Step3 = (&'static str, &'static str, &'static str, Tick);

const DA: &str = "DynamicAgent/medicine_reminder";
const CORE: &str = "CoreAgent/robot";
const APL: &str = "PlatformAgent/apl";
const TH: &str = "TaskHarmoniser/robot";
const ARS: &str = "StoreAgent/ars";

const REPLY_REFERENCE: [Step3; 18] = [
    ("TaskRequestMsg", "TaskRequester/smart_home", TH, 0),
    ("DownloadRequest", TH, ARS, 1),
    ("DownloadResponse", ARS, TH, 2),
    ("LifecycleCommand", TH, DA, 3),
    ("AskCommand", DA, CORE, 4),
    ("Ack", DA, TH, 4),
    ("TtsRequest", CORE, APL, 5),
    ("TtsResponse", APL, CORE, 6),
    ("SttRequest", CORE, APL, 10),
    ("SttResponse", APL, CORE, 11),
    ("IntentMsg", CORE, "TaskRequester/robot", 12),
    ("TaskRequestMsg", "TaskRequester/robot", TH, 13),
    ("IntentMsg", TH, DA, 14),
    ("SayCommand", DA, CORE, 15),
    ("TtsRequest", CORE, APL, 16),
    ("TtsResponse", APL, CORE, 17),
    ("Ack", CORE, DA, 18),
    ("Ack", DA, TH, 19),
];

// question plays at tick 7, so the 20-tick prompt expires at 27
const TIMEOUT_REFERENCE: [Step3; 15] = [
    ("TaskRequestMsg", "TaskRequester/smart_home", TH, 0),
    ("DownloadRequest", TH, ARS, 1),
    ("DownloadResponse", ARS, TH, 2),
    ("LifecycleCommand", TH, DA, 3),
    ("AskCommand", DA, CORE, 4),
    ("Ack", DA, TH, 4),
    ("TtsRequest", CORE, APL, 5),
    ("TtsResponse", APL, CORE, 6),
    ("Ack", CORE, DA, 27),
    ("Ack", DA, TH, 28),
    ("SayCommand", DA, CORE, 28),
    ("TtsRequest", CORE, APL, 29),
    ("TtsResponse", APL, CORE, 30),
    ("Ack", CORE, DA, 31),
    ("Ack", DA, TH, 32),
];

fn matches_reference(trace: &[Envelope], reference: &[Step3]) -> Result<(), String> {
    let got: Vec<(String, String, String, Tick)> =
        trace.iter().map(|e| (e.kind().to_string(), e.src.to_string(), e.dst.to_string(), e.ts)).collect();
    let want: Vec<(String, String, String, Tick)> =
        reference.iter().map(|(k, s, d, t)| (k.to_string(), s.to_string(), d.to_string(), *t)).collect();
    if got == want {
        return Ok(());
    }
    let first = got.iter().zip(&want).position(|(a, b)| a != b).unwrap_or(got.len().min(want.len()));
    Err(format!("trace diverges at step {}: got {:?}, want {:?}", first + 1, got.get(first), want.get(first)))
}

fn conversation_round_trip() -> Result<String, String> {
    let r = run_shipped("conversation_reply", SEED);
    matches_reference(&r.trace, &REPLY_REFERENCE)?;
    let relayed = &r.trace[12];
    let Payload::IntentMsg(msg) = &relayed.payload else { return Err("step 13 is not an intent".into()) };
    ensure!(msg.intent.name == "confirm", "relayed {}", msg.intent.name);
    ensure!(r.trace[5].payload == Payload::Ack(Ack::ConversationOpen), "step 6 is not ConversationOpen");
    ensure!(ack_outcome(&r.trace[17]) == Some("succeeded"), "final outcome {:?}", ack_outcome(&r.trace[17]));
    ensure!(r.finished[0].visited == ["ask", "praise"], "visited {:?}", r.finished[0].visited);
    ensure!(r.decisions.len() == 1, "the reply was treated as a request");

    let t = run_shipped("conversation_timeout", SEED);
    matches_reference(&t.trace, &TIMEOUT_REFERENCE)?;
    ensure!(ack_outcome(&t.trace[8]) == Some("timeout"), "core did not report a timeout");
    ensure!(t.trace[9].payload == Payload::Ack(Ack::ConversationClosed), "conversation not closed");
    ensure!(t.finished[0].outcome == "aborted", "timeout branch ended {}", t.finished[0].outcome);
    Ok("reply branch 18/18 steps, timeout branch 15/15 steps".into())
}

fn keyword_spotting() -> Result<String, String> {
    let start = Instant::now();
    let cfg = ExperimentConfig::shipped(SEED);
    let grid = run_keyword_experiment(&cfg);
    let elapsed = start.elapsed();
    ensure!(grid.total_trials() == 1200, "{} trials", grid.total_trials());
    ensure!(grid.cells.len() == 24, "{} cells", grid.cells.len());
    for c in &grid.cells {
        let p = cfg.model.channel(c.spot_id, c.mic).unwrap();
        let (lo, hi) = ci99(c.trials, p);
        ensure!(c.trials == 50, "spot {} {} has {} trials", c.spot_id, c.mic, c.trials);
        ensure!(
            (lo..=hi).contains(&c.successes),
            "spot {} {}: {} outside [{lo}, {hi}] for p={p}",
            c.spot_id,
            c.mic,
            c.successes
        );
    }
    for spot in 1..=12 {
        let int = grid.cell(spot, Mic::Internal).unwrap().accuracy();
        let ext = grid.cell(spot, Mic::External).unwrap().accuracy();
        ensure!(ext >= int, "spot {spot}: external {ext} < internal {int}");
    }
    ensure!(elapsed < Duration::from_secs(5), "took {elapsed:?}");

    // coverage across many seeds stays near the nominal 99%
    let seeds = 200;
    let mut inside = 0;
    for seed in 0..seeds {
        let g = run_keyword_experiment(&ExperimentConfig::shipped(seed));
        inside += g
            .cells
            .iter()
            .filter(|c| {
                let (lo, hi) = ci99(c.trials, cfg.model.channel(c.spot_id, c.mic).unwrap());
                (lo..=hi).contains(&c.successes)
            })
            .count();
    }
    let coverage = inside as f64 / (seeds as f64 * 24.0);
    ensure!(coverage >= 0.98, "coverage over {seeds} seeds was {coverage:.4}");
    Ok(format!("1200 trials, 24/24 cells in 99% CI, external >= internal at 12/12 spots, coverage {coverage:.4} over {seeds} seeds"))
}

fn multimodal_fallback() -> Result<String, String> {
    let mut config = SystemConfig::shipped();
    config.mic = Mic::Internal;
    let worst = config.acoustic.worst_spot(Mic::Internal);
    let p = config.acoustic.channel(worst, Mic::Internal).unwrap();
    let n = 50;
    let mut text = String::new();
    for k in 0..n {
        text.push_str(&format!("{} utterance {worst} user{} call robot\n", 4 * k, k % 5));
        text.push_str(&format!("{} button call_button_kitchen\n", 4 * k + 2));
    }
    let script: ScenarioScript = text.parse().map_err(|e| format!("{e}"))?;
    let r = run_scenario(&script, config, SEED).map_err(|e| e.to_string())?;
    let submitted = |from: &str| {
        r.trace
            .iter()
            .filter(|e| {
                e.src.to_string() == from && matches!(e.payload, Payload::TaskRequestMsg(RequestMsg::Submit(_)))
            })
            .count() as u32
    };
    let buttons = submitted("TaskRequester/smart_home");
    let voice = submitted("TaskRequester/robot");
    ensure!(buttons == n, "{buttons} of {n} button requests delivered");
    let (lo, hi) = ci99(n, p);
    ensure!((lo..=hi).contains(&voice), "{voice} voice requests outside [{lo}, {hi}] for p={p}");
    Ok(format!("spot {worst} internal mic p={p}: buttons {buttons}/{n} = 1.0, voice {voice}/{n} in [{lo}, {hi}]"))
}

fn random_fsm(rng: &mut ChaCha8Rng) -> FsmDefinition {
    let n = rng.random_range(1..6);
    let names: Vec<String> = (0..n).map(|i| format!("s{i}")).collect();
    let terminals: BTreeSet<String> = ["succeeded", "aborted", "preempted"].map(str::to_owned).into();
    let mut states = BTreeMap::new();
    for name in &names {
        let action = match rng.random_range(0..5) {
            0 => Action::Say { text: format!("line {}", rng.random_range(0..1000)) },
            1 => Action::Wait { ticks: rng.random_range(1..20) },
            2 => Action::SetBody {
                torso_height: f64::from(rng.random_range(0..=35u32)) / 100.0,
                pan: f64::from(rng.random_range(-5..6i32)) * 0.25,
                tilt: f64::from(rng.random_range(-3..3i32)) * 0.25,
            },
            3 => match rng.random_range(0..2) {
                0 => Action::NavigateTo(NavTarget::Location(
                    ["kitchen", "hall", "bedroom"][rng.random_range(0..3)].into(),
                )),
                _ => Action::NavigateTo(NavTarget::Pose(Pose::new(
                    f64::from(rng.random_range(-20..20i32)) * 0.5,
                    f64::from(rng.random_range(-20..20i32)) * 0.5,
                    0.0,
                ))),
            },
            _ => Action::Ask {
                text: "Is that all?".into(),
                expected: vec!["confirm".into(), "deny".into()],
                timeout: rng.random_range(1..30),
            },
        };
        let step = Step::Action(action);
        let transitions = step
            .outcomes()
            .into_iter()
            .map(|o| {
                let pick = rng.random_range(0..n + 2);
                let target = if pick < n { names[pick].clone() } else { ["succeeded", "aborted"][pick - n].to_owned() };
                (o, target)
            })
            .collect();
        states.insert(name.clone(), State { step, transitions });
    }
    FsmDefinition { initial: names[0].clone(), terminals, states }
}

fn tampered_is_flagged(bytes: &[u8]) -> Option<&'static str> {
    match serde_json::from_slice::<TaskPackage>(bytes) {
        Err(_) => Some("unparseable"),
        Ok(p) if !p.verify() => Some("checksum"),
        Ok(_) => None,
    }
}

fn store_tamper() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut store = Store::new();
    let mut published = Vec::new();
    for i in 0..20 {
        let doc = PackageDocument {
            name: format!("task_{i}"),
            version: rng.random_range(1..50),
            default_priority: rng.random_range(0..10),
            fsm: random_fsm(&mut rng),
        };
        let pkg = TaskPackage::new(doc);
        store.publish(pkg.clone()).map_err(|e| e.to_string())?;
        published.push(pkg);
    }
    let (mut mutations, mut by_checksum) = (0, 0);
    for pkg in &published {
        let down = store.download(pkg.name()).map_err(|e| e.to_string())?;
        ensure!(&down == pkg, "{} changed in the store", pkg.name());
        let wire = serde_json::to_vec(&down).unwrap();
        ensure!(tampered_is_flagged(&wire).is_none(), "pristine {} flagged", pkg.name());
        for i in 0..wire.len() {
            let mut candidates = vec![wire[i] ^ (1 << rng.random_range(0..8)), rng.random()];
            if wire[i].is_ascii_alphabetic() {
                candidates.push(wire[i] ^ 0x20);
            }
            for b in candidates.into_iter().filter(|b| *b != wire[i]) {
                let mut bad = wire.clone();
                bad[i] = b;
                mutations += 1;
                match tampered_is_flagged(&bad) {
                    Some("checksum") => by_checksum += 1,
                    Some(_) => {}
                    None => {
                        return Err(format!(
                            "{}: byte {i} {:?} -> {:?} not flagged",
                            pkg.name(),
                            wire[i] as char,
                            b as char
                        ))
                    }
                }
            }
        }
    }
    Ok(format!("20 packages round-tripped, {mutations} single-byte mutations all flagged ({by_checksum} by checksum)"))
}

fn determinism() -> Result<String, String> {
    let names = shipped_scenarios();
    for name in &names {
        let a = run_shipped(name, SEED);
        let b = run_shipped(name, SEED);
        ensure!(a.trace_jsonl() == b.trace_jsonl(), "{name}: traces differ");
        ensure!(a.decisions_jsonl() == b.decisions_jsonl(), "{name}: decision logs differ");
        ensure!(!a.trace.is_empty(), "{name}: empty trace");
    }
    let multimodal = "0 utterance 7 a call robot\n2 button call_button_kitchen\n4 utterance 1 b remind me\n";
    ensure!(run_text(multimodal, 9).trace_jsonl() == run_text(multimodal, 9).trace_jsonl(), "ad hoc script differs");
    let csv = |seed| render_csv(&run_keyword_experiment(&ExperimentConfig::shipped(seed)));
    ensure!(csv(SEED) == csv(SEED), "experiment CSV differs");
    Ok(format!("{} scenarios and the experiment reproduced byte for byte", names.len()))
}
