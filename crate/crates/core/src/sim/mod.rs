//! Deterministic discrete-event simulation of one server and many
//! participants, with optional adversaries.
//!
//! Events are ordered by `(tick, insertion order)`. All randomness derives from
//! the run seed, so a run is a pure function of `(scenario, seed)`. Server keys
//! are provisioned separately from `key_seed` and shared between runs.

mod bus;
mod linkage;
mod scenario;

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use num_bigint::BigUint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::codec::put_uint;
use crate::crypto::prime::random_below;
use crate::crypto::{Digest, Timestamp};
use crate::participant::{DepositGaps, Participant, ParticipantSnapshot, Secrets};
use crate::protocol::{Request, Response, Sender, ServerError, ServerPort};
use crate::server::{
    ConstantPolicy, Faults, Server, ServerConfig, ServerKeys, StorageMetrics, Transcript,
    WindowParams,
};
use crate::token::{CreditToken, Pseudonym};

pub use bus::{Bus, Envelope};
pub use linkage::{linkage_analysis, structural_signature, LinkageReport};
pub use scenario::{Attack, Scenario, ScenarioError};

/// Expected server reaction to an injected message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Expect {
    /// Rejection, optionally with a specific error.
    Reject(Option<&'static str>),
    /// Accepted with a response identical to the original.
    SameResponse,
    /// Anything that grants nothing new.
    NoValue,
}

/// One injected message and how the server answered it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AttackRecord {
    pub label: String,
    pub kind: String,
    pub tick: u64,
    pub expected: Expect,
    pub outcome: String,
    /// The server accepted something that grants value.
    pub breach: bool,
    /// The outcome is exactly the expected one.
    pub matched: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ForgeryOutcome {
    pub strategy: String,
    pub trials: u64,
    pub rejected: u64,
    pub outcomes: BTreeMap<String, u64>,
}

impl ForgeryOutcome {
    fn new(strategy: &str) -> Self {
        Self {
            strategy: strategy.to_string(),
            trials: 0,
            rejected: 0,
            outcomes: BTreeMap::new(),
        }
    }

    fn tally(&mut self, resp: &Response) {
        self.trials += 1;
        if !resp.is_accepted() {
            self.rejected += 1;
        }
        *self.outcomes.entry(resp.outcome().to_string()).or_default() += 1;
    }

    pub fn rejection_rate(&self) -> f64 {
        if self.trials == 0 {
            1.0
        } else {
            self.rejected as f64 / self.trials as f64
        }
    }
}

/// Knobs that are not part of a scenario file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RunOptions {
    pub faults: Faults,
    /// Exchange the secrets of two participants before the run.
    pub swap_secrets: Option<(usize, usize)>,
}

/// Facts only the simulator knows. Never visible to the server.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub rids: Vec<Vec<u8>>,
    pub secrets: Vec<Secrets>,
    pub pseudonyms: Vec<Vec<Pseudonym>>,
}

/// Everything a run produced.
pub struct TranscriptBundle {
    pub scenario: Scenario,
    pub seed: u64,
    pub server: Server,
    pub envelopes: Vec<Envelope>,
    pub participants: Vec<ParticipantSnapshot>,
    pub granted: BTreeMap<String, u64>,
    pub balances: BTreeMap<String, u64>,
    pub storage: StorageMetrics,
    pub attacks: Vec<AttackRecord>,
    pub forgeries: Vec<ForgeryOutcome>,
    pub failures: Vec<String>,
    pub traffic: (u64, u64),
    pub truth: GroundTruth,
}

#[derive(Debug, Clone, Serialize)]
pub struct BundleSummary {
    pub seed: u64,
    pub transcript_hash: String,
    pub transcript_entries: usize,
    pub participants: Vec<ParticipantSnapshot>,
    pub granted: BTreeMap<String, u64>,
    pub balances: BTreeMap<String, u64>,
    pub storage: StorageMetrics,
    pub attacks: Vec<AttackRecord>,
    pub forgeries: Vec<ForgeryOutcome>,
    pub linkage: LinkageReport,
    pub failures: Vec<String>,
    pub violations: Vec<String>,
    pub bytes_to_server: u64,
    pub bytes_from_server: u64,
}

impl TranscriptBundle {
    pub fn transcript(&self) -> &Transcript {
        self.server.transcript()
    }

    pub fn transcript_hash(&self) -> Digest {
        self.transcript().digest()
    }

    /// Line-delimited envelope records: id, tick, sender, phase, adversarial
    /// flag, payload and response in hex.
    pub fn envelope_lines(&self) -> String {
        let mut out = String::new();
        for e in &self.envelopes {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                e.id,
                e.tick,
                e.from,
                e.phase.tag(),
                u8::from(e.adversarial),
                hex::encode(&e.payload),
                hex::encode(&e.response)
            ));
        }
        out
    }

    pub fn linkage(&self) -> LinkageReport {
        linkage_analysis(self.transcript())
    }

    /// Attack records whose outcome differs from the precise expectation.
    pub fn mismatches(&self) -> Vec<&AttackRecord> {
        self.attacks.iter().filter(|a| !a.matched).collect()
    }

    /// Invariant breaches: honest-path failures, accepted attacks and
    /// balances above what was granted. Empty for a correct server.
    pub fn violations(&self) -> Vec<String> {
        let mut v: Vec<String> = self
            .failures
            .iter()
            .map(|f| format!("failure: {f}"))
            .collect();
        for a in self.attacks.iter().filter(|a| a.breach) {
            v.push(format!(
                "attack accepted: {} ({}) -> {}",
                a.label, a.kind, a.outcome
            ));
        }
        for f in &self.forgeries {
            if f.rejected < f.trials {
                v.push(format!(
                    "forgery accepted: {} {}/{} trials",
                    f.strategy,
                    f.trials - f.rejected,
                    f.trials
                ));
            }
        }
        for (rid, bal) in &self.balances {
            let granted = self.granted.get(rid).copied().unwrap_or(0);
            if *bal > granted {
                v.push(format!("{rid} balance {bal} exceeds granted {granted}"));
            }
            if self.scenario.attack == Attack::None && *bal != granted {
                v.push(format!(
                    "{rid} balance {bal} differs from granted {granted}"
                ));
            }
        }
        if self.scenario.attack == Attack::None {
            for p in &self.participants {
                if p.wallet != 0 {
                    v.push(format!(
                        "{} ends with {} undeposited tokens",
                        p.rid, p.wallet
                    ));
                }
            }
        }
        v
    }

    pub fn summary(&self) -> BundleSummary {
        BundleSummary {
            seed: self.seed,
            transcript_hash: self.transcript_hash().to_hex(),
            transcript_entries: self.transcript().len(),
            participants: self.participants.clone(),
            granted: self.granted.clone(),
            balances: self.balances.clone(),
            storage: self.storage,
            attacks: self.attacks.clone(),
            forgeries: self.forgeries.clone(),
            linkage: self.linkage(),
            failures: self.failures.clone(),
            violations: self.violations(),
            bytes_to_server: self.traffic.0,
            bytes_from_server: self.traffic.1,
        }
    }
}

enum Event {
    OpenWindow(u32),
    CloseWindow(u32),
    Work { sp: usize, task: u64 },
    Deposit { sp: usize, token: CreditToken },
    CompleteTask(u64),
    Inject(Injection),
    Forge { tokens: Vec<CreditToken>, task: u64 },
}

struct Injection {
    from: Sender,
    payload: Vec<u8>,
    original: Vec<u8>,
    label: String,
    expect: Expect,
}

struct Scheduled {
    tick: u64,
    seq: u64,
    event: Event,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        (self.tick, self.seq) == (other.tick, other.seq)
    }
}

impl Eq for Scheduled {}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scheduled {
    // Reversed: BinaryHeap is a max-heap and the earliest event runs first.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.tick, other.seq).cmp(&(self.tick, self.seq))
    }
}

const MALLORY: &[u8] = b"mallory";

struct Sim {
    sc: Scenario,
    bus: Bus,
    queue: BinaryHeap<Scheduled>,
    seq: u64,
    sps: Vec<Participant>,
    sched_rngs: Vec<ChaCha20Rng>,
    mallory: Participant,
    adv: ChaCha20Rng,
    pending: Vec<Vec<u64>>,
    reports: BTreeMap<u64, u32>,
    attacks: Vec<AttackRecord>,
    forgeries: Vec<ForgeryOutcome>,
    failures: Vec<String>,
    seen: usize,
    replayed: BTreeSet<&'static str>,
    next_window_replays: Vec<Envelope>,
    forged: bool,
}

/// Runs `scenario` with `seed`.
pub fn run(scenario: &Scenario, seed: u64) -> Result<TranscriptBundle, ScenarioError> {
    run_with(scenario, seed, RunOptions::default())
}

pub fn run_with(
    scenario: &Scenario,
    seed: u64,
    options: RunOptions,
) -> Result<TranscriptBundle, ScenarioError> {
    scenario.validate()?;
    let keys = ServerKeys::cached(scenario.key_bits, scenario.key_seed)
        .map_err(|e| ScenarioError::Keys(e.to_string()))?;
    let mut server = Server::new(
        keys,
        ServerConfig {
            ts_tolerance: scenario.ts_tolerance,
        },
        Box::new(ConstantPolicy(scenario.policy_c)),
    );
    server.set_faults(options.faults);

    let mut root = ChaCha20Rng::seed_from_u64(seed);
    let n = scenario.n_participants as usize;
    let mut sps: Vec<Participant> = (0..n)
        .map(|p| Participant::new(format!("sp-{p:03}"), root.random()))
        .collect();
    if let Some((a, b)) = options.swap_secrets {
        if a >= n || b >= n {
            return Err(ScenarioError::Invalid(format!(
                "cannot swap participants {a} and {b}"
            )));
        }
        let (sa, sb) = (sps[a].secrets().clone(), sps[b].secrets().clone());
        let (ra, rb) = (sps[a].rid().to_vec(), sps[b].rid().to_vec());
        sps[a] = Participant::with_secrets(ra, sb, root.random());
        sps[b] = Participant::with_secrets(rb, sa, root.random());
    }
    let sched_rngs = (0..n)
        .map(|_| ChaCha20Rng::seed_from_u64(root.random()))
        .collect();
    let mallory = Participant::new(MALLORY, root.random());
    let adv = ChaCha20Rng::seed_from_u64(root.random());

    let mut sim = Sim {
        sc: scenario.clone(),
        bus: Bus::new(server),
        queue: BinaryHeap::new(),
        seq: 0,
        sps,
        sched_rngs,
        mallory,
        adv,
        pending: vec![Vec::new(); n],
        reports: BTreeMap::new(),
        attacks: Vec::new(),
        forgeries: Vec::new(),
        failures: Vec::new(),
        seen: 0,
        replayed: BTreeSet::new(),
        next_window_replays: Vec::new(),
        forged: false,
    };
    if n > 0 && scenario.windows > 0 {
        sim.schedule(0, Event::OpenWindow(0));
    }
    while let Some(Scheduled { tick, event, .. }) = sim.queue.pop() {
        sim.bus.server_mut().advance_to(tick);
        sim.step(tick, event);
        sim.observe(tick);
    }
    Ok(sim.finish(seed))
}

impl Sim {
    fn schedule(&mut self, tick: u64, event: Event) {
        self.queue.push(Scheduled {
            tick,
            seq: self.seq,
            event,
        });
        self.seq += 1;
    }

    fn uses_mallory(&self) -> bool {
        matches!(self.sc.attack, Attack::Theft | Attack::Forgery)
    }

    fn step(&mut self, tick: u64, event: Event) {
        match event {
            Event::OpenWindow(k) => self.open_window(k),
            Event::CloseWindow(k) => {
                if let Err(e) = self.bus.server_mut().expire_window(k as u64) {
                    self.failures.push(format!("closing window {k}: {e}"));
                }
                if k + 1 < self.sc.windows {
                    self.schedule(tick + 1, Event::OpenWindow(k + 1));
                }
            }
            Event::Work { sp, task } => self.work(tick, sp, task),
            Event::Deposit { sp, token } => {
                if let Err(e) = self.sps[sp].deposit_one(&token, &mut self.bus) {
                    self.failures
                        .push(format!("sp {sp} deposit at tick {tick}: {e}"));
                }
            }
            Event::CompleteTask(i) => {
                if let Err(e) = self.bus.server_mut().complete_task(i) {
                    self.failures.push(format!("completing task {i}: {e}"));
                }
            }
            Event::Inject(inj) => self.inject(tick, inj),
            Event::Forge { tokens, task } => self.forge(tokens, task),
        }
    }

    fn open_window(&mut self, k: u32) {
        let params = WindowParams {
            c_min: self.sc.c_min,
            c_max: self.sc.c_max,
            horizon: self.sc.horizon,
        };
        let window = match self
            .bus
            .server_mut()
            .publish_window(self.sc.m, params, b"sdr-query")
        {
            Ok(w) => w,
            Err(e) => {
                self.failures.push(format!("publishing window {k}: {e}"));
                return;
            }
        };
        if k == 0 && self.uses_mallory() {
            if let Err(e) = self.mallory.acquire_identity_signature(&mut self.bus) {
                self.failures.push(format!("mallory identity: {e}"));
            }
        }
        let tasks: Vec<u64> = window.task_indexes().collect();
        for sp in 0..self.sps.len() {
            self.pending[sp] = tasks.iter().rev().copied().collect();
            let start = window.opened_at + self.sched_rngs[sp].random_range(1..=self.sc.gap_max);
            if let Some(first) = self.pending[sp].pop() {
                self.schedule(start, Event::Work { sp, task: first });
            }
        }
        self.schedule(window.closes_at, Event::CloseWindow(k));
        for env in std::mem::take(&mut self.next_window_replays) {
            let req = env.request();
            let expect = match req {
                Request::Deposit { .. } => Expect::Reject(Some("ExpiredTimestamp")),
                Request::Identity { .. } => Expect::SameResponse,
                _ => Expect::Reject(None),
            };
            let label = format!("next-window replay of {}", req.kind());
            self.schedule(
                window.opened_at + 1,
                Event::Inject(replay_of(&env, label, expect)),
            );
        }
    }

    fn work(&mut self, tick: u64, sp: usize, task: u64) {
        let reading: u32 = self.sched_rngs[sp].random_range(0..1000);
        let report = format!("task={task} reading={reading}");
        let before = self.sps[sp].wallet().len();
        let outcome = (|| {
            let p = &mut self.sps[sp];
            p.acquire_identity_signature(&mut self.bus)?;
            p.request_task(task, &mut self.bus)?;
            p.submit_report(task, report.as_bytes(), &mut self.bus)
        })();
        let mut next_at = tick + 1;
        match outcome {
            Ok(_) => {
                let count = self.reports.entry(task).or_default();
                *count += 1;
                if *count == self.sc.n_participants {
                    self.schedule(tick + self.sc.complete_delay, Event::CompleteTask(task));
                }
                let gaps = DepositGaps {
                    min: self.sc.gap_min,
                    max: self.sc.gap_max,
                };
                match self.sps[sp].schedule_deposits(
                    task,
                    Timestamp(tick),
                    gaps,
                    &mut self.sched_rngs[sp],
                ) {
                    Ok(plan) => {
                        if let Some((last, _)) = plan.last() {
                            next_at = last + 1;
                        }
                        for (t, token) in plan {
                            self.schedule(t, Event::Deposit { sp, token });
                        }
                    }
                    Err(e) => self
                        .failures
                        .push(format!("sp {sp} scheduling task {task}: {e}")),
                }
                let fresh: Vec<CreditToken> = self.sps[sp].wallet()[before..]
                    .iter()
                    .map(|w| w.token.clone())
                    .collect();
                self.after_grant(tick, sp, task, fresh);
            }
            Err(e) => self.failures.push(format!("sp {sp} task {task}: {e}")),
        }
        if let Some(next) = self.pending[sp].pop() {
            let at = if self.sc.interleave {
                tick + self.sched_rngs[sp].random_range(self.sc.gap_min..=self.sc.gap_max)
            } else {
                next_at
            };
            self.schedule(at, Event::Work { sp, task: next });
        }
    }

    /// Adversary reactions to a participant receiving credit tokens.
    fn after_grant(&mut self, tick: u64, sp: usize, task: u64, tokens: Vec<CreditToken>) {
        if sp != 0 || tokens.is_empty() {
            return;
        }
        match self.sc.attack {
            Attack::Theft => {
                for token in tokens {
                    let inj = deposit_injection(
                        MALLORY,
                        &token,
                        "stolen token under attacker identity",
                        Expect::Reject(Some("IdentityMismatch")),
                    );
                    self.schedule(tick + 1, Event::Inject(inj));
                }
            }
            Attack::Forgery if !self.forged => {
                self.forged = true;
                self.schedule(tick + 1, Event::Forge { tokens, task });
            }
            _ => {}
        }
    }

    /// Adversary reactions to newly delivered honest envelopes.
    fn observe(&mut self, tick: u64) {
        let fresh: Vec<Envelope> = self.bus.log()[self.seen..]
            .iter()
            .filter(|e| !e.adversarial && e.accepted())
            .cloned()
            .collect();
        self.seen = self.bus.log().len();
        match self.sc.attack {
            Attack::Replay => {
                for env in fresh {
                    let req = env.request();
                    if !self.replayed.insert(req.kind()) {
                        continue;
                    }
                    let expect = match req {
                        Request::TaskRequest { .. } => Expect::Reject(Some("ReusedRequestToken")),
                        Request::Report { .. } => Expect::Reject(Some("ReusedReportToken")),
                        Request::Deposit { .. } => Expect::Reject(Some("DoubleDeposit")),
                        _ => Expect::SameResponse,
                    };
                    let label = format!("in-window replay of {}", req.kind());
                    self.schedule(tick + 1, Event::Inject(replay_of(&env, label, expect)));
                    if !matches!(req, Request::Identity { .. }) {
                        self.next_window_replays.push(env);
                    }
                }
            }
            Attack::RandomReplay => {
                for env in fresh {
                    if self.adv.random_bool(0.3) {
                        let delay = self.adv.random_range(1..=self.sc.horizon);
                        let label = format!("random replay of {}", env.request().kind());
                        self.schedule(
                            tick + delay,
                            Event::Inject(replay_of(&env, label, Expect::NoValue)),
                        );
                    }
                    if matches!(env.request(), Request::Deposit { .. }) && self.adv.random_bool(0.2)
                    {
                        self.steal_random(tick);
                    }
                }
            }
            _ => {}
        }
    }

    /// Copies a random wallet token and deposits it under another
    /// participant's identity.
    fn steal_random(&mut self, tick: u64) {
        let n = self.sps.len();
        let victim = self.adv.random_range(0..n);
        let wallet = self.sps[victim].wallet();
        if wallet.is_empty() {
            return;
        }
        let token = wallet[self.adv.random_range(0..wallet.len())].token.clone();
        let thief = (victim + self.adv.random_range(1..n)) % n;
        let rid = self.sps[thief].rid().to_vec();
        let inj = deposit_injection(&rid, &token, "stolen token", Expect::Reject(None));
        let delay = self.adv.random_range(1..=self.sc.gap_max);
        self.schedule(tick + delay, Event::Inject(inj));
    }

    fn inject(&mut self, tick: u64, inj: Injection) {
        let resp = self.bus.inject(&inj.from, &inj.payload);
        let kind = Request::from_bytes(&inj.payload)
            .map(|r| r.kind().to_string())
            .unwrap_or_else(|_| "malformed".into());
        let value_kind = matches!(kind.as_str(), "task-request" | "report" | "deposit");
        let same = resp.to_bytes() == inj.original;
        let (breach, matched) = match &inj.expect {
            Expect::Reject(want) => (
                resp.is_accepted(),
                match (want, resp.error()) {
                    (Some(w), Some(e)) => e.name() == *w,
                    (None, Some(_)) => true,
                    _ => false,
                },
            ),
            Expect::SameResponse => (resp.is_accepted() && !same, same),
            Expect::NoValue => {
                let breach = resp.is_accepted() && (value_kind || !same);
                (breach, !breach)
            }
        };
        self.attacks.push(AttackRecord {
            label: inj.label,
            kind,
            tick,
            expected: inj.expect,
            outcome: resp.outcome().to_string(),
            breach,
            matched,
        });
    }

    fn forge(&mut self, tokens: Vec<CreditToken>, task: u64) {
        let trials = self.sc.forgery_trials as usize;
        let n = self.bus.public_params().rsa.n;
        let now = self.bus.now();
        let mallory_sig = self
            .mallory
            .identity()
            .rid_signature
            .clone()
            .unwrap_or_default();
        let victim_rid = self.sps[0].rid().to_vec();
        let victim_sig = self.sps[0]
            .identity()
            .rid_signature
            .clone()
            .unwrap_or_default();

        let mut random_sig = ForgeryOutcome::new("random-signature");
        let mut real_sig = ForgeryOutcome::new("random-preimage-with-real-sig");
        let mut reflection = ForgeryOutcome::new("modulus-reflection");
        for t in 0..trials {
            let m = random_preimage(&mut self.adv, &mallory_sig);
            let s = random_below(&n, &mut self.adv);
            let resp = self.deposit_as(MALLORY, now, m, s);
            random_sig.tally(&resp);

            if let Some(token) = tokens.get(t % tokens.len().max(1)) {
                let m = random_preimage(&mut self.adv, &mallory_sig);
                let resp = self.deposit_as(MALLORY, token.timestamp, m, token.signature.clone());
                real_sig.tally(&resp);

                let reflected = &n - &token.signature;
                let resp = self.deposit_as(
                    &victim_rid,
                    token.timestamp,
                    token.preimage.clone(),
                    reflected,
                );
                reflection.tally(&resp);
            }
        }

        // Tokens honestly issued to the attacker but carrying the victim's
        // identity signature, deposited under the attacker's identity.
        let mut borrowed = ForgeryOutcome::new("borrowed-identity");
        self.mallory.embed_rid_signature(victim_sig);
        let issued = (|| {
            self.mallory.request_task(task, &mut self.bus)?;
            self.mallory
                .submit_report(task, b"fabricated reading", &mut self.bus)
        })();
        match issued {
            Ok(_) => {
                let wallet: Vec<CreditToken> = self
                    .mallory
                    .wallet()
                    .iter()
                    .map(|w| w.token.clone())
                    .collect();
                for token in wallet {
                    let resp = self.deposit_as(
                        MALLORY,
                        token.timestamp,
                        token.preimage.clone(),
                        token.signature.clone(),
                    );
                    borrowed.tally(&resp);
                }
            }
            Err(e) => self.failures.push(format!("attacker token issuance: {e}")),
        }
        self.forgeries
            .extend([random_sig, real_sig, reflection, borrowed]);
    }

    fn deposit_as(
        &mut self,
        rid: &[u8],
        ts: Timestamp,
        preimage: Vec<u8>,
        signature: BigUint,
    ) -> Response {
        let req = Request::Deposit {
            rid: rid.to_vec(),
            timestamp: ts,
            preimage,
            signature,
        };
        self.bus
            .inject(&Sender::Real(rid.to_vec()), &req.to_bytes())
    }

    fn finish(self, seed: u64) -> TranscriptBundle {
        let Sim {
            sc,
            mut bus,
            sps,
            mallory,
            attacks,
            forgeries,
            failures,
            ..
        } = self;
        let traffic = bus.traffic();
        let envelopes = bus.take_log();
        let server = bus.into_server();
        let name = |rid: &[u8]| String::from_utf8_lossy(rid).into_owned();
        let mut granted: BTreeMap<String, u64> =
            sps.iter().map(|p| (name(p.rid()), p.granted())).collect();
        let mut balances: BTreeMap<String, u64> = sps
            .iter()
            .map(|p| (name(p.rid()), server.balance(p.rid())))
            .collect();
        if sc.attack != Attack::None || server.balance(MALLORY) > 0 {
            // The attacker's own tokens carry a borrowed identity signature,
            // so nothing it was issued counts as its due.
            granted.insert(name(MALLORY), 0);
            balances.insert(name(MALLORY), server.balance(MALLORY));
        }
        TranscriptBundle {
            participants: sps.iter().map(Participant::snapshot).collect(),
            truth: GroundTruth {
                rids: sps.iter().map(|p| p.rid().to_vec()).collect(),
                secrets: sps.iter().map(|p| p.secrets().clone()).collect(),
                pseudonyms: sps
                    .iter()
                    .chain(std::iter::once(&mallory))
                    .map(|p| p.pseudonyms().to_vec())
                    .collect(),
            },
            storage: server.storage_metrics(),
            scenario: sc,
            seed,
            server,
            envelopes,
            granted,
            balances,
            attacks,
            forgeries,
            failures,
            traffic,
        }
    }
}

fn replay_of(env: &Envelope, label: String, expect: Expect) -> Injection {
    Injection {
        from: env.from.clone(),
        payload: env.payload.clone(),
        original: env.response.clone(),
        label,
        expect,
    }
}

fn deposit_injection(rid: &[u8], token: &CreditToken, label: &str, expect: Expect) -> Injection {
    let req = Request::Deposit {
        rid: rid.to_vec(),
        timestamp: token.timestamp,
        preimage: token.preimage.clone(),
        signature: token.signature.clone(),
    };
    Injection {
        from: Sender::Real(rid.to_vec()),
        payload: req.to_bytes(),
        original: Response::Deposited.to_bytes(),
        label: label.to_string(),
        expect,
    }
}

/// A well-framed credit preimage with a random digest.
fn random_preimage<R: Rng>(rng: &mut R, rid_sig: &BigUint) -> Vec<u8> {
    let mut m = vec![0u8; Digest::LEN];
    rng.fill_bytes(&mut m);
    put_uint(&mut m, rid_sig);
    m
}

/// True if `err` is one of the used-token rejections.
pub fn is_ledger_error(err: &ServerError) -> bool {
    matches!(
        err,
        ServerError::ReusedRequestToken
            | ServerError::ReusedReportToken
            | ServerError::DoubleDeposit
    )
}
