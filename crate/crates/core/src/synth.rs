//! Synthetic domains with a known graph, and a simulator that produces
//! dialogues consistent with it.
//!
//! Roles are read from labels: `USER ...` and `SYSTEM ...` acts belong to
//! those speakers, anything else is a database result.
//!
//! Simulation, per trajectory `i` (ChaCha8 seeded with `seed`, stream `i`):
//! speakers alternate starting with the user. On a speaker's turn the
//! allowed acts are that speaker's acts whose can/should-not condition holds.
//! Every allowed act whose should condition fires is executed; each other
//! allowed act is executed with probability 0.5, and if that leaves nothing
//! one allowed act is picked uniformly. A speaker with nothing allowed passes
//! the turn; when neither speaker can act the dialogue ends early. After a
//! system turn, if any database act is allowed, one is drawn uniformly and
//! recorded as a db turn. Annotation noise touches only the recorded labels:
//! each user/system act occurrence is, with probability `annotation_noise_p`,
//! dropped or (equally likely) replaced by another act of the same speaker.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{ActConditions, TodFlowGraph};
use crate::learn::dnf::{Clause, DnfCondition, Literal};
use crate::types::{ActVocabulary, ActionSet, CompletionVector, Speaker, Trajectory, TurnRecord};

const GRAPH_STREAM: u64 = u64::MAX;
const MAX_RETRIES: usize = 100;
/// Largest vocabulary for which reachable completions are enumerated.
pub const REACHABILITY_LIMIT: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Car-rental slot filling: the system may query only once all four
    /// slots are informed, and may request a slot only after the intent and
    /// before that slot is informed or requested.
    RentalCars,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub domain: String,
    pub n_acts: usize,
    pub max_clause_literals: usize,
    pub clauses_per_condition: usize,
    pub shd_fraction: f64,
    pub n_trajectories: usize,
    pub max_turns: usize,
    pub annotation_noise_p: f64,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<Preset>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            domain: "synth".into(),
            n_acts: 8,
            max_clause_literals: 3,
            clauses_per_condition: 1,
            shd_fraction: 0.25,
            n_trajectories: 500,
            max_turns: 20,
            annotation_noise_p: 0.0,
            seed: 0,
            preset: None,
        }
    }
}

impl SynthConfig {
    pub fn rental_cars() -> Self {
        Self {
            domain: "RentalCars".into(),
            preset: Some(Preset::RentalCars),
            n_acts: 12,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.preset.is_none() {
            if self.n_acts < 2 {
                return bad(format!("n_acts = {} must be at least 2", self.n_acts));
            }
            if self.max_clause_literals < 1 || self.max_clause_literals > self.n_acts - 1 {
                return bad(format!(
                    "max_clause_literals = {} must be in [1, n_acts - 1]",
                    self.max_clause_literals
                ));
            }
            if self.clauses_per_condition < 1 {
                return bad("clauses_per_condition must be at least 1".into());
            }
        }
        for (name, p) in [
            ("shd_fraction", self.shd_fraction),
            ("annotation_noise_p", self.annotation_noise_p),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} = {p} outside [0, 1]"));
            }
        }
        if self.max_turns < 1 {
            return bad("max_turns must be at least 1".into());
        }
        Ok(())
    }
}

pub fn role_of(label: &str) -> Speaker {
    if label.starts_with("USER ") {
        Speaker::User
    } else if label.starts_with("SYSTEM ") {
        Speaker::System
    } else {
        Speaker::Db
    }
}

pub fn roles(vocab: &ActVocabulary) -> Vec<Speaker> {
    vocab.labels().iter().map(|l| role_of(l)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulatedDialogue {
    pub trajectory: Trajectory,
    /// The dialogue stopped before `max_turns` because no speaker could act.
    pub terminated_early: bool,
    /// Recorded act occurrences dropped or replaced by annotation noise.
    pub perturbations: usize,
    /// Act occurrences actually executed (before noise).
    pub occurrences: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthDomain {
    pub truth_graph: TodFlowGraph,
    pub dialogues: Vec<SimulatedDialogue>,
}

impl SynthDomain {
    pub fn trajectories(&self) -> Vec<Trajectory> {
        self.dialogues.iter().map(|d| d.trajectory.clone()).collect()
    }
}

pub fn synthesize(cfg: &SynthConfig) -> Result<SynthDomain> {
    let truth_graph = gen_ground_truth_graph(cfg)?;
    let dialogues = simulate_dialogues(&truth_graph, cfg)?;
    Ok(SynthDomain { truth_graph, dialogues })
}

// ---------------------------------------------------------------------------
// ground-truth graphs

pub fn gen_ground_truth_graph(cfg: &SynthConfig) -> Result<TodFlowGraph> {
    cfg.validate()?;
    if let Some(Preset::RentalCars) = cfg.preset {
        return Ok(rental_cars_graph(&cfg.domain));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(GRAPH_STREAM);
    for _ in 0..MAX_RETRIES {
        let g = random_graph(cfg, &mut rng)?;
        if all_acts_reachable(&g, cfg.max_turns)? {
            return Ok(g);
        }
    }
    Err(Error::Synth(format!(
        "no graph with every act reachable after {MAX_RETRIES} attempts"
    )))
}

fn synth_vocabulary(n_acts: usize) -> Result<(ActVocabulary, Vec<Speaker>)> {
    let n_db = n_acts / 8;
    let n_user = (n_acts - n_db).div_ceil(2);
    let n_system = n_acts - n_db - n_user;
    let labels = (0..n_user)
        .map(|i| format!("USER u{i}"))
        .chain((0..n_system).map(|i| format!("SYSTEM s{i}")))
        .chain((0..n_db).map(|i| format!("DB d{i}")));
    let vocab = ActVocabulary::from_labels(labels)?;
    let r = roles(&vocab);
    Ok((vocab, r))
}

fn random_graph(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<TodFlowGraph> {
    let n = cfg.n_acts;
    let (vocab, roles) = synth_vocabulary(n)?;

    // topological order: dialog acts shuffled, each db act placed somewhere
    // after the first system act
    let mut order: Vec<usize> = (0..n).filter(|&i| roles[i] != Speaker::Db).collect();
    order.shuffle(rng);
    for db in (0..n).filter(|&i| roles[i] == Speaker::Db) {
        let first_sys = order
            .iter()
            .position(|&a| roles[a] == Speaker::System)
            .expect("at least one system act");
        let at = rng.random_range(first_sys + 1..=order.len());
        order.insert(at, db);
    }
    let mut position = vec![0; n];
    for (p, &a) in order.iter().enumerate() {
        position[a] = p;
    }
    let earlier = |x: usize| -> Vec<usize> { order[..position[x]].to_vec() };

    let mut entries = vec![ActConditions::default(); n];
    for x in 0..n {
        let before = earlier(x);
        let can_shdnt = if roles[x] == Speaker::Db {
            let systems: Vec<usize> = before.iter().copied().filter(|&a| roles[a] == Speaker::System).collect();
            let trigger = systems[rng.random_range(0..systems.len())];
            let mut lits = vec![Literal::pos(trigger), Literal::neg(x)];
            lits.extend(
                (0..n)
                    .filter(|&d| d != x && roles[d] == Speaker::Db)
                    .map(Literal::neg),
            );
            DnfCondition::conjunction(lits)
        } else {
            let clauses: Vec<Clause> = (0..cfg.clauses_per_condition)
                .map(|_| random_clause(x, &before, n, cfg.max_clause_literals, rng))
                .collect();
            DnfCondition::from_clauses(clauses)
        };
        entries[x].can_shdnt = can_shdnt;
    }

    for x in (0..n).filter(|&i| roles[i] != Speaker::Db) {
        if !rng.random_bool(cfg.shd_fraction) {
            continue;
        }
        let triggers: Vec<usize> = earlier(x)
            .into_iter()
            .filter(|&a| roles[a] != Speaker::Db && roles[a] != roles[x])
            .collect();
        if triggers.is_empty() {
            continue;
        }
        let t = triggers[rng.random_range(0..triggers.len())];
        entries[x].shd = DnfCondition::conjunction([Literal::pos(t), Literal::neg(x)]);
    }

    TodFlowGraph::from_parts(cfg.domain.clone(), vocab, entries, Default::default())
}

/// Conjunction of 1..=`max_literals` literals: optionally `¬x`, positive
/// literals only on acts earlier in the order, negative literals on any
/// other act.
fn random_clause(x: usize, before: &[usize], n: usize, max_literals: usize, rng: &mut ChaCha8Rng) -> Clause {
    let k = rng.random_range(1..=max_literals);
    let mut lits: Vec<Literal> = Vec::new();
    if rng.random_bool(0.5) {
        lits.push(Literal::neg(x));
    }
    let mut attempts = 0;
    while lits.len() < k && attempts < 8 * max_literals {
        attempts += 1;
        let lit = if !before.is_empty() && rng.random_bool(0.7) {
            Literal::pos(before[rng.random_range(0..before.len())])
        } else {
            let mut other = rng.random_range(0..n - 1);
            if other >= x {
                other += 1;
            }
            Literal::neg(other)
        };
        if !lits.iter().any(|l| l.act == lit.act) {
            lits.push(lit);
        }
    }
    Clause::new(lits)
}

/// The hand-coded car-rental schema.
pub fn rental_cars_graph(domain: &str) -> TodFlowGraph {
    const SLOTS: [&str; 4] = ["pickup_location", "pickup_date", "dropoff_date", "car_type"];
    let mut labels = vec!["USER inform_intent GetCarsAvailable".to_string()];
    labels.extend(SLOTS.iter().map(|s| format!("USER inform {s}")));
    labels.extend(SLOTS.iter().map(|s| format!("SYSTEM request {s}")));
    labels.push("SYSTEM query GetCarsAvailable".into());
    labels.push("query_success".into());
    labels.push("SYSTEM offer car_name".into());
    let vocab = ActVocabulary::from_labels(&labels).expect("distinct labels");

    let intent = 0;
    let inform = |s: usize| 1 + s;
    let request = |s: usize| 5 + s;
    let (query, success, offer) = (9, 10, 11);

    let mut entries = vec![ActConditions::default(); vocab.len()];
    entries[intent].can_shdnt = DnfCondition::literal(Literal::neg(intent));
    for s in 0..4 {
        entries[inform(s)] = ActConditions {
            can_shdnt: DnfCondition::conjunction([Literal::pos(intent), Literal::neg(inform(s))]),
            shd: DnfCondition::conjunction([Literal::pos(request(s)), Literal::neg(inform(s))]),
            can_only: None,
        };
        entries[request(s)].can_shdnt = DnfCondition::conjunction([
            Literal::pos(intent),
            Literal::neg(inform(s)),
            Literal::neg(request(s)),
        ]);
    }
    let query_can = DnfCondition::conjunction((0..4).map(|s| Literal::pos(inform(s))).chain([Literal::neg(query)]));
    entries[query] = ActConditions {
        can_shdnt: query_can.clone(),
        shd: query_can,
        can_only: None,
    };
    entries[success].can_shdnt = DnfCondition::conjunction([Literal::pos(query), Literal::neg(success)]);
    let offer_can = DnfCondition::conjunction([Literal::pos(success), Literal::neg(offer)]);
    entries[offer] = ActConditions {
        can_shdnt: offer_can.clone(),
        shd: offer_can,
        can_only: None,
    };
    TodFlowGraph::from_parts(domain, vocab, entries, Default::default()).expect("indices in range")
}

// ---------------------------------------------------------------------------
// simulation

struct Sim<'a> {
    truth: &'a TodFlowGraph,
    roles: Vec<Speaker>,
    by_role: [Vec<usize>; 3],
}

fn role_slot(s: Speaker) -> usize {
    match s {
        Speaker::User => 0,
        Speaker::System => 1,
        Speaker::Db => 2,
    }
}

impl<'a> Sim<'a> {
    fn new(truth: &'a TodFlowGraph) -> Self {
        let roles = roles(truth.vocabulary());
        let mut by_role: [Vec<usize>; 3] = Default::default();
        for (i, r) in roles.iter().enumerate() {
            by_role[role_slot(*r)].push(i);
        }
        Self { truth, roles, by_role }
    }

    fn allowed(&self, role: Speaker, holds: impl Fn(&DnfCondition) -> bool) -> Vec<usize> {
        self.by_role[role_slot(role)]
            .iter()
            .copied()
            .filter(|&a| holds(&self.truth.entries()[a].can_shdnt))
            .collect()
    }

    fn should(&self, acts: &[usize], holds: impl Fn(&DnfCondition) -> bool) -> Vec<usize> {
        acts.iter()
            .copied()
            .filter(|&a| holds(&self.truth.entries()[a].shd))
            .collect()
    }
}

fn other(role: Speaker) -> Speaker {
    match role {
        Speaker::User => Speaker::System,
        _ => Speaker::User,
    }
}

pub fn simulate_dialogues(truth: &TodFlowGraph, cfg: &SynthConfig) -> Result<Vec<SimulatedDialogue>> {
    cfg.validate()?;
    let sim = Sim::new(truth);
    if sim.by_role[0].is_empty() || sim.by_role[1].is_empty() {
        return Err(Error::Synth("the graph needs both user and system acts".into()));
    }
    Ok((0..cfg.n_trajectories)
        .into_par_iter()
        .map(|i| simulate_one(&sim, cfg, i))
        .collect())
}

fn simulate_one(sim: &Sim<'_>, cfg: &SynthConfig, index: usize) -> SimulatedDialogue {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64);
    let vocab = sim.truth.vocabulary();
    let n = vocab.len();
    let mut c = CompletionVector::zeros(n);
    let mut turns = Vec::new();
    let mut terminated_early = false;
    let (mut perturbations, mut occurrences) = (0, 0);

    for t in 0..cfg.max_turns {
        let role = if t % 2 == 0 { Speaker::User } else { Speaker::System };
        let allowed = sim.allowed(role, |cond| cond.holds(&c));
        if allowed.is_empty() {
            if sim.allowed(other(role), |cond| cond.holds(&c)).is_empty() {
                terminated_early = true;
                break;
            }
            continue;
        }
        let should = sim.should(&allowed, |cond| cond.holds(&c));
        let mut executed: Vec<usize> = Vec::new();
        for &a in &allowed {
            if should.contains(&a) || rng.random_bool(0.5) {
                executed.push(a);
            }
        }
        if executed.is_empty() {
            executed.push(allowed[rng.random_range(0..allowed.len())]);
        }
        occurrences += executed.len();

        let same_role = &sim.by_role[role_slot(role)];
        let mut record = TurnRecord::new(role, Vec::<String>::new());
        for &a in &executed {
            let mut label = Some(a);
            if cfg.annotation_noise_p > 0.0 && rng.random_bool(cfg.annotation_noise_p) {
                perturbations += 1;
                label = if rng.random_bool(0.5) || same_role.len() < 2 {
                    None
                } else {
                    let mut k = rng.random_range(0..same_role.len() - 1);
                    if same_role[k] == a {
                        k = same_role.len() - 1;
                    }
                    Some(same_role[k])
                };
            }
            if let Some(l) = label {
                record.push_act(vocab.label(l).expect("index in range").to_string());
            }
        }
        turns.push(record);
        for &a in &executed {
            c.insert(a);
        }

        if role == Speaker::System {
            let dbs = sim.allowed(Speaker::Db, |cond| cond.holds(&c));
            if !dbs.is_empty() {
                let d = dbs[rng.random_range(0..dbs.len())];
                turns.push(TurnRecord::db(vocab.label(d).expect("index in range")));
                c.insert(d);
            }
        }
    }

    SimulatedDialogue {
        trajectory: Trajectory {
            id: format!("{}-{index:05}", cfg.domain),
            domain: cfg.domain.clone(),
            turns,
        },
        terminated_early,
        perturbations,
        occurrences,
    }
}

// ---------------------------------------------------------------------------
// reachability

/// Completions (as bit masks) at which each speaker takes a recorded turn in
/// some noise-free simulated dialogue of at most `max_turns` turns.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Reachability {
    pub user: BTreeSet<u64>,
    pub system: BTreeSet<u64>,
    /// Completions right after a system turn, where db results are drawn.
    pub db: BTreeSet<u64>,
    roles: Vec<Speaker>,
}

impl Reachability {
    pub fn for_role(&self, role: Speaker) -> &BTreeSet<u64> {
        match role {
            Speaker::User => &self.user,
            Speaker::System => &self.system,
            Speaker::Db => &self.db,
        }
    }

    /// Completions at which `act` could be observed.
    pub fn for_act(&self, act: usize) -> &BTreeSet<u64> {
        self.for_role(self.roles[act])
    }

    pub fn role_of_act(&self, act: usize) -> Speaker {
        self.roles[act]
    }
}

/// Exact forward search over the simulator's transition structure.
pub fn reachable_completions(truth: &TodFlowGraph, max_turns: usize) -> Result<Reachability> {
    let n = truth.n_acts();
    if n > REACHABILITY_LIMIT {
        return Err(Error::Config(format!(
            "reachability enumeration supports at most {REACHABILITY_LIMIT} acts, got {n}"
        )));
    }
    let sim = Sim::new(truth);
    let mut reach = Reachability {
        roles: sim.roles.clone(),
        ..Reachability::default()
    };
    let holds_at = |mask: u64| move |cond: &DnfCondition| cond.holds_mask(mask);

    let mut layer: BTreeSet<u64> = BTreeSet::from([0]);
    for t in 0..max_turns {
        let role = if t % 2 == 0 { Speaker::User } else { Speaker::System };
        let mut next = BTreeSet::new();
        for &c in &layer {
            let allowed = sim.allowed(role, holds_at(c));
            if allowed.is_empty() {
                if !sim.allowed(other(role), holds_at(c)).is_empty() {
                    next.insert(c);
                }
                continue;
            }
            match role {
                Speaker::User => reach.user.insert(c),
                _ => reach.system.insert(c),
            };
            let should = sim.should(&allowed, holds_at(c));
            let must: u64 = should.iter().map(|&a| 1u64 << a).sum();
            let free: Vec<usize> = allowed.iter().copied().filter(|a| !should.contains(a)).collect();
            for subset in 0u64..(1 << free.len()) {
                let mut executed = must;
                for (k, &a) in free.iter().enumerate() {
                    if subset >> k & 1 == 1 {
                        executed |= 1 << a;
                    }
                }
                if executed == 0 {
                    continue;
                }
                let c2 = c | executed;
                if role == Speaker::System {
                    reach.db.insert(c2);
                    let dbs = sim.allowed(Speaker::Db, holds_at(c2));
                    if dbs.is_empty() {
                        next.insert(c2);
                    }
                    for d in dbs {
                        next.insert(c2 | 1 << d);
                    }
                } else {
                    next.insert(c2);
                }
            }
        }
        layer = next;
        if layer.is_empty() {
            break;
        }
    }
    Ok(reach)
}

/// Every act is allowed at some completion where its speaker can act.
fn all_acts_reachable(g: &TodFlowGraph, max_turns: usize) -> Result<bool> {
    if g.n_acts() <= REACHABILITY_LIMIT {
        let reach = reachable_completions(g, max_turns)?;
        return Ok((0..g.n_acts()).all(|a| {
            let cond = &g.entries()[a].can_shdnt;
            reach.for_act(a).iter().any(|&m| cond.holds_mask(m))
        }));
    }
    // too large to enumerate: check that a noise-free sample executes every act
    let cfg = SynthConfig {
        n_trajectories: 200,
        max_turns,
        annotation_noise_p: 0.0,
        ..SynthConfig::default()
    };
    let seen: BTreeSet<&str> = BTreeSet::new();
    let dialogues = simulate_dialogues(g, &cfg)?;
    let mut seen = seen;
    for d in &dialogues {
        for turn in &d.trajectory.turns {
            seen.extend(turn.acts.iter().map(String::as_str));
            if let Some(r) = &turn.db_result {
                seen.insert(r.as_str());
            }
        }
    }
    Ok(seen.len() == g.n_acts())
}

/// Acts of the given speaker.
pub fn acts_of_role(vocab: &ActVocabulary, role: Speaker) -> ActionSet {
    roles(vocab)
        .into_iter()
        .enumerate()
        .filter(|(_, r)| *r == role)
        .map(|(i, _)| i)
        .collect()
}
