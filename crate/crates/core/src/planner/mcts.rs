//! UCT search over the decision process, with greedy rollouts.
//!
//! In deterministic mode each tree node caches its snapshot, so repeated descents cost
//! nothing but the rollout at the new leaf. In stochastic mode the tree is open-loop:
//! nodes are action sequences, the world is re-sampled on every descent, and only
//! children whose action is legal in the sampled snapshot compete.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{greedy_policy, PlanError};
use crate::simkit::{Event, Policy};
use crate::smdp::{self, build_mission, DispatchAction, MeanService};
use crate::world::{ms_to_secs, WorldState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    pub iterations: usize,
    pub exploration_c: f64,
    /// Decisions simulated by a rollout before it is cut off and valued at zero.
    pub max_rollout_depth: usize,
    pub seed: u64,
    /// Sample service-time noise inside the search.
    pub stochastic: bool,
    /// Root-parallel workers; 1 is the reproducible configuration.
    pub workers: usize,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            iterations: 1000,
            exploration_c: 1.4,
            max_rollout_depth: 30,
            seed: 0,
            stochastic: false,
            workers: 1,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<(), PlanError> {
        if self.iterations == 0 {
            return Err(PlanError::InvalidConfig("iterations must be at least 1".into()));
        }
        if !(self.exploration_c > 0.0 && self.exploration_c.is_finite()) {
            return Err(PlanError::InvalidConfig("exploration_c must be positive".into()));
        }
        if self.workers == 0 {
            return Err(PlanError::InvalidConfig("workers must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineEntry {
    pub event: String,
    /// Seconds.
    pub time: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aircraft: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub watercraft: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub facility: Option<String>,
}

impl From<&Event> for TimelineEntry {
    fn from(e: &Event) -> Self {
        TimelineEntry {
            event: e.kind.name().to_string(),
            time: ms_to_secs(e.t_ms),
            aircraft: e.aircraft.clone(),
            watercraft: e.watercraft.clone(),
            facility: e.facility.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionVisits {
    pub action: DispatchAction,
    pub visits: u64,
    pub mean_return: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub action: DispatchAction,
    /// Mean return observed under the chosen action; seconds of weighted patient wait, negated.
    pub estimated_return: f64,
    /// Root actions in legal-action order.
    pub visit_counts: Vec<ActionVisits>,
    /// Deterministic event sequence the chosen action sets in motion.
    pub predicted_timeline: Vec<TimelineEntry>,
}

struct Node {
    action: Option<DispatchAction>,
    children: Vec<usize>,
    visits: u64,
    total: f64,
    best: f64,
    // deterministic mode only
    state: Option<WorldState>,
    reward: f64,
    legal: Option<Vec<DispatchAction>>,
}

impl Node {
    fn new(action: Option<DispatchAction>) -> Self {
        Node {
            action,
            children: Vec::new(),
            visits: 0,
            total: 0.0,
            best: f64::NEG_INFINITY,
            state: None,
            reward: 0.0,
            legal: None,
        }
    }
}

struct Search<'a> {
    cfg: &'a PlannerConfig,
    root_filter: &'a (dyn Fn(&DispatchAction) -> bool + Sync),
    nodes: Vec<Node>,
    rng: ChaCha8Rng,
}

fn rollout(mut s: WorldState, rng: &mut ChaCha8Rng, depth: usize) -> f64 {
    let mut g = 0.0;
    for _ in 0..depth {
        if smdp::is_terminal(&s) {
            return g;
        }
        let a = greedy_policy(&s).unwrap_or_else(|_| DispatchAction::hold(s.clock));
        let tr = smdp::step_unchecked(&s, &a, rng);
        g += tr.reward;
        s = tr.next_state;
    }
    // truncated: remaining cost counted as zero
    g
}

impl Search<'_> {
    fn deterministic(&self) -> bool {
        !self.cfg.stochastic
    }

    fn legal_at(&mut self, idx: usize, s: &WorldState) -> Vec<DispatchAction> {
        if let Some(l) = &self.nodes[idx].legal {
            return l.clone();
        }
        let mut legal = smdp::legal_actions(s);
        if idx == 0 {
            legal.retain(|a| a.is_hold() || (self.root_filter)(a));
        }
        if self.deterministic() {
            self.nodes[idx].legal = Some(legal.clone());
        }
        legal
    }

    /// Exploitation value of a child. Deterministic trees cache exact transitions, so
    /// the best backed-up return is a reachable lower bound on the child's value; the
    /// mean would keep charging it for exploratory descendants.
    fn value(&self, c: usize) -> f64 {
        let n = &self.nodes[c];
        if self.deterministic() {
            n.best
        } else {
            n.total / n.visits as f64
        }
    }

    fn uct_pick(&self, parent: usize, candidates: &[usize]) -> usize {
        let ln_n = (self.nodes[parent].visits.max(1) as f64).ln();
        // normalize over the siblings so c is on the scale of their spread
        let (lo, hi) = candidates
            .iter()
            .map(|&c| self.value(c))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
        let span = hi - lo;
        let mut best = candidates[0];
        let mut best_score = f64::NEG_INFINITY;
        for &c in candidates {
            let n = &self.nodes[c];
            let q = if span > 0.0 { (self.value(c) - lo) / span } else { 0.5 };
            let score = q + self.cfg.exploration_c * (ln_n / n.visits as f64).sqrt();
            if score > best_score {
                best_score = score;
                best = c;
            }
        }
        best
    }

    fn iterate(&mut self, root: &WorldState) {
        let mut path = vec![0usize];
        let mut rewards: Vec<f64> = Vec::new();
        let mut cur = 0usize;
        let mut s = root.clone();
        let mut leaf = 0.0;
        loop {
            if smdp::is_terminal(&s) {
                break;
            }
            let legal = self.legal_at(cur, &s);
            let children = self.nodes[cur].children.clone();
            let untried = legal
                .iter()
                .find(|a| !children.iter().any(|&c| self.nodes[c].action.as_ref() == Some(*a)));
            if let Some(a) = untried {
                let tr = smdp::step_unchecked(&s, a, &mut self.rng);
                let mut node = Node::new(Some(a.clone()));
                node.reward = tr.reward;
                let child = self.nodes.len();
                leaf = if tr.terminal {
                    0.0
                } else {
                    rollout(tr.next_state.clone(), &mut self.rng, self.cfg.max_rollout_depth)
                };
                if self.deterministic() {
                    node.state = Some(tr.next_state);
                }
                self.nodes.push(node);
                self.nodes[cur].children.push(child);
                path.push(child);
                rewards.push(tr.reward);
                break;
            }
            let candidates: Vec<usize> = if self.deterministic() {
                children
            } else {
                children
                    .into_iter()
                    .filter(|&c| self.nodes[c].action.as_ref().is_some_and(|a| legal.contains(a)))
                    .collect()
            };
            let next = self.uct_pick(cur, &candidates);
            if self.deterministic() {
                s = self.nodes[next].state.clone().expect("deterministic nodes cache their state");
                rewards.push(self.nodes[next].reward);
            } else {
                let a = self.nodes[next].action.clone().expect("child has an action");
                let tr = smdp::step_unchecked(&s, &a, &mut self.rng);
                rewards.push(tr.reward);
                s = tr.next_state;
            }
            path.push(next);
            cur = next;
        }

        let mut g = leaf;
        for i in (1..path.len()).rev() {
            g += rewards[i - 1];
            let n = &mut self.nodes[path[i]];
            n.visits += 1;
            n.total += g;
            n.best = n.best.max(g);
        }
        self.nodes[0].visits += 1;
    }
}

fn search(
    root: &WorldState,
    cfg: &PlannerConfig,
    iterations: usize,
    seed: u64,
    filter: &(dyn Fn(&DispatchAction) -> bool + Sync),
) -> Vec<(DispatchAction, u64, f64)> {
    let mut st = Search {
        cfg,
        root_filter: filter,
        nodes: vec![Node::new(None)],
        rng: ChaCha8Rng::seed_from_u64(seed),
    };
    for _ in 0..iterations {
        st.iterate(root);
    }
    let order = st.legal_at(0, root);
    order
        .into_iter()
        .map(|a| {
            let stats = st.nodes[0]
                .children
                .iter()
                .map(|&c| &st.nodes[c])
                .find(|n| n.action.as_ref() == Some(&a))
                .map(|n| (n.visits, n.total))
                .unwrap_or((0, 0.0));
            (a, stats.0, stats.1)
        })
        .collect()
}

fn worker_seed(seed: u64, worker: usize) -> u64 {
    seed.wrapping_add((worker as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Recommends an action for `s`. Reproducible for identical `(s, cfg)` when
/// `cfg.workers == 1`.
pub fn plan(s: &WorldState, cfg: &PlannerConfig) -> Result<Recommendation, PlanError> {
    plan_filtered(s, cfg, &|_| true)
}

/// As [`plan`], with the root restricted to dispatches accepted by `filter`; holding
/// is always allowed.
pub fn plan_filtered(
    s: &WorldState,
    cfg: &PlannerConfig,
    filter: &(dyn Fn(&DispatchAction) -> bool + Sync),
) -> Result<Recommendation, PlanError> {
    cfg.validate()?;
    if smdp::is_terminal(s) {
        return Err(PlanError::TerminalState);
    }
    let mut root = s.clone();
    if root.params.stochastic != cfg.stochastic {
        let mut p = (*root.params).clone();
        p.stochastic = cfg.stochastic;
        root.params = Arc::new(p);
    }

    let workers = cfg.workers.min(cfg.iterations);
    let merged: Vec<(DispatchAction, u64, f64)> = if workers <= 1 {
        search(&root, cfg, cfg.iterations, cfg.seed, filter)
    } else {
        let per: Vec<Vec<(DispatchAction, u64, f64)>> = (0..workers)
            .into_par_iter()
            .map(|w| {
                let n = cfg.iterations / workers + usize::from(w < cfg.iterations % workers);
                search(&root, cfg, n, worker_seed(cfg.seed, w), filter)
            })
            .collect();
        let mut acc = per[0].clone();
        for other in &per[1..] {
            for (a, v, t) in other {
                match acc.iter_mut().find(|(b, _, _)| b == a) {
                    Some(slot) => {
                        slot.1 += v;
                        slot.2 += t;
                    }
                    None => acc.push((a.clone(), *v, *t)),
                }
            }
        }
        acc
    };

    let (best, visits, total) = merged
        .iter()
        .fold(None::<&(DispatchAction, u64, f64)>, |best, cand| match best {
            Some(b) if b.1 >= cand.1 => Some(b),
            _ => Some(cand),
        })
        .cloned()
        .expect("hold is always legal");
    let predicted_timeline = if best.is_hold() {
        Vec::new()
    } else {
        build_mission(s, &best, &mut MeanService)
            .map(|m| m.events.iter().map(|e| TimelineEntry::from(&e.event)).collect())
            .unwrap_or_default()
    };
    Ok(Recommendation {
        estimated_return: if visits > 0 { total / visits as f64 } else { 0.0 },
        visit_counts: merged
            .into_iter()
            .map(|(action, visits, total)| ActionVisits {
                action,
                visits,
                mean_return: if visits > 0 { total / visits as f64 } else { 0.0 },
            })
            .collect(),
        action: best,
        predicted_timeline,
    })
}

/// Re-plans at every epoch. The search seed is derived from the configured seed and
/// the epoch time, so a whole episode is reproducible.
#[derive(Debug, Clone)]
pub struct MctsPolicy {
    pub cfg: PlannerConfig,
}

impl MctsPolicy {
    pub fn new(cfg: PlannerConfig) -> Self {
        MctsPolicy { cfg }
    }
}

impl Policy for MctsPolicy {
    fn name(&self) -> &str {
        "mcts"
    }

    fn decide(&mut self, s: &WorldState) -> DispatchAction {
        let mut cfg = self.cfg.clone();
        cfg.seed = worker_seed(self.cfg.seed ^ s.clock as u64, 0x5EED);
        plan(s, &cfg)
            .map(|r| r.action)
            .unwrap_or_else(|_| DispatchAction::hold(s.clock))
    }
}
