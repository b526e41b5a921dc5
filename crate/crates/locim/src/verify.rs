//! Brute-force oracles and empirical checks of the mathematical claims:
//! joint optimal values, cutoff decomposition equivalence, dependence time
//! lemmas, performance bounds, consistent-performance conditions, and the
//! group-count bound.

use serde::Serialize;
use smallvec::SmallVec;
use std::collections::HashMap;

use crate::geometry::{Partition, Pos, SpaceKind};
use crate::model::{
    ActionChoice, ActionId, AgentClass, AgentMatcher, AgentState, DynRule, Effect, EnvSpec,
    GroupKernel, JointState, Mode, Model, ModelConstants, PairRule, SelfRule,
};
use crate::solver::{cutoff_reward, cutoff_successors, CutoffState};
use crate::LocimError;

/// One checked inequality.
#[derive(Clone, Debug, Serialize)]
pub struct BoundReport {
    pub quantity: String,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub pass: bool,
    pub instance: String,
}

impl BoundReport {
    pub fn check(quantity: &str, lhs: f64, rhs: f64, instance: &str) -> Self {
        Self {
            quantity: quantity.into(),
            lhs,
            rhs,
            margin: rhs - lhs,
            pass: lhs <= rhs + 1e-9,
            instance: instance.into(),
        }
    }
}

// ---------------------------------------------------------------------------
// joint optimal oracle

pub struct JointSolution {
    pub states: Vec<JointState>,
    pub index: HashMap<JointState, u32>,
    pub values: Vec<f64>,
    /// greedy deterministic joint action per state
    pub policy: Vec<Vec<ActionId>>,
}

impl JointSolution {
    pub fn value(&self, s: &JointState) -> Option<f64> {
        self.index.get(s).map(|&i| self.values[i as usize])
    }
    pub fn action(&self, s: &JointState) -> Option<&[ActionId]> {
        self.index.get(s).map(|&i| self.policy[i as usize].as_slice())
    }
}

fn joint_actions(model: &Model, s: &JointState) -> Vec<Vec<ActionId>> {
    let counts: Vec<usize> = (0..model.n()).map(|i| model.n_actions(i, s[i])).collect();
    let mut out = Vec::with_capacity(counts.iter().product());
    let mut cur = vec![0u8; model.n()];
    loop {
        out.push(cur.clone());
        let mut k = model.n();
        loop {
            if k == 0 {
                return out;
            }
            k -= 1;
            cur[k] += 1;
            if (cur[k] as usize) < counts[k] {
                break;
            }
            cur[k] = 0;
        }
    }
}

/// Infinite-horizon discounted value iteration over the reachable joint
/// space, run to a residual guaranteeing sup-norm value error <= tol.
pub fn solve_joint_optimal(model: &Model, tol: f64) -> Result<JointSolution, LocimError> {
    let budget = crate::state_budget();
    let gamma = model.consts().gamma;
    // reachable closure
    let mut states: Vec<JointState> = Vec::new();
    let mut index: HashMap<JointState, u32> = HashMap::new();
    let mut frontier = vec![model.initial()];
    index.insert(model.initial(), 0);
    states.push(model.initial());
    while let Some(s) = frontier.pop() {
        for a in joint_actions(model, &s) {
            for (s2, _) in model.joint_transition_dist(&s, &a) {
                if !index.contains_key(&s2) {
                    if states.len() >= budget.min(1_000_000) {
                        return Err(LocimError::BudgetExceeded {
                            what: "joint state space".into(),
                            count: states.len(),
                        });
                    }
                    index.insert(s2.clone(), states.len() as u32);
                    states.push(s2.clone());
                    frontier.push(s2);
                }
            }
        }
    }
    // precompute transitions
    struct Entry {
        reward: f64,
        succ: SmallVec<[(u32, f64); 4]>,
    }
    let per_state: Vec<Vec<Entry>> = states
        .iter()
        .map(|s| {
            joint_actions(model, s)
                .into_iter()
                .map(|a| {
                    let reward = model.joint_reward(s, &a);
                    let succ = model
                        .joint_transition_dist(s, &a)
                        .into_iter()
                        .map(|(s2, p)| (index[&s2], p))
                        .collect();
                    Entry { reward, succ }
                })
                .collect()
        })
        .collect();
    let residual_target = tol * (1.0 - gamma) / (2.0 * gamma);
    let mut values = vec![0.0f64; states.len()];
    loop {
        let mut residual = 0.0f64;
        let next: Vec<f64> = per_state
            .iter()
            .zip(values.iter())
            .map(|(entries, _)| {
                entries
                    .iter()
                    .map(|e| {
                        e.reward
                            + gamma
                                * e.succ.iter().map(|&(i, p)| p * values[i as usize]).sum::<f64>()
                    })
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
        for (old, new) in values.iter().zip(&next) {
            residual = residual.max((old - new).abs());
        }
        values = next;
        if residual <= residual_target {
            break;
        }
    }
    let policy: Vec<Vec<ActionId>> = states
        .iter()
        .zip(&per_state)
        .map(|(_, entries)| {
            let mut best = f64::NEG_INFINITY;
            let mut best_a = 0usize;
            for (ai, e) in entries.iter().enumerate() {
                let q = e.reward
                    + gamma * e.succ.iter().map(|&(i, p)| p * values[i as usize]).sum::<f64>();
                if q > best + 1e-12 {
                    best = q;
                    best_a = ai;
                }
            }
            best_a
        })
        .zip(states.iter())
        .map(|(ai, s)| {
            // re-expand the flat index into the per-agent action vector
            let mut a = Vec::with_capacity(model.n());
            let counts: Vec<usize> = (0..model.n()).map(|i| model.n_actions(i, s[i])).collect();
            let mut rem = ai;
            for &c in counts.iter().rev() {
                a.push((rem % c) as ActionId);
                rem /= c;
            }
            a.reverse();
            a
        })
        .collect();
    Ok(JointSolution { states, index, values, policy })
}

// ---------------------------------------------------------------------------
// brute-force cutoff oracle

/// All partitions finer than Z (every block of the result is a subset of a
/// block of Z; blocks need not be chain-connected themselves).
pub fn partitions_finer_than(z: &Partition) -> Vec<Partition> {
    fn set_partitions(items: &[usize]) -> Vec<Vec<Vec<usize>>> {
        if items.is_empty() {
            return vec![vec![]];
        }
        let first = items[0];
        let rest = &items[1..];
        let mut out = Vec::new();
        for sub in set_partitions(rest) {
            // first in its own block
            let mut with_own = sub.clone();
            with_own.push(vec![first]);
            out.push(with_own);
            // first joined to each existing block
            for k in 0..sub.len() {
                let mut joined = sub.clone();
                joined[k].push(first);
                out.push(joined);
            }
        }
        out
    }
    let mut result = vec![Vec::<Vec<usize>>::new()];
    for block in &z.blocks {
        let subs = set_partitions(block);
        let mut next = Vec::with_capacity(result.len() * subs.len());
        for r in &result {
            for s in &subs {
                let mut combined = r.clone();
                combined.extend(s.clone());
                next.push(combined);
            }
        }
        result = next;
    }
    result.into_iter().map(|blocks| Partition::new(blocks).unwrap()).collect()
}

pub struct CutoffOracle {
    pub v_comp: f64,
    pub horizon: usize,
    pub states: Vec<CutoffState>,
    pub index: HashMap<(JointState, Partition), u32>,
    /// values[h][idx]
    pub values: Vec<Vec<f64>>,
    pub actions: Vec<Vec<Vec<ActionId>>>,
}

impl CutoffOracle {
    pub fn value(&self, s: &JointState, p: &Partition, h: usize) -> Option<f64> {
        if h > self.horizon {
            return Some(0.0);
        }
        self.index.get(&(s.clone(), p.clone())).map(|&i| self.values[h][i as usize])
    }
}

/// Direct backward induction over the complete (s, P) cutoff space built
/// from the per-agent state products. No group decomposition.
pub fn brute_force_cutoff(
    model: &Model,
    v_comp: f64,
    horizon: usize,
) -> Result<CutoffOracle, LocimError> {
    let budget = crate::state_budget();
    // full product of per-agent reachable states
    let mut joints: Vec<JointState> = vec![Vec::new()];
    for i in 0..model.n() {
        let class_states = model.states_of_class(model.class_of(i));
        let mut next = Vec::with_capacity(joints.len() * class_states.len());
        for j in &joints {
            for &s in class_states {
                let mut j2 = j.clone();
                j2.push(s);
                next.push(j2);
            }
        }
        joints = next;
        if joints.len() > budget.min(2_000_000) {
            return Err(LocimError::BudgetExceeded {
                what: "brute-force cutoff joint product".into(),
                count: joints.len(),
            });
        }
    }
    let mut states: Vec<CutoffState> = Vec::new();
    let mut index: HashMap<(JointState, Partition), u32> = HashMap::new();
    for s in &joints {
        let z = model.communication_partition(s, v_comp)?;
        for p in partitions_finer_than(&z) {
            index.insert((s.clone(), p.clone()), states.len() as u32);
            states.push(CutoffState { s: s.clone(), p });
            if states.len() > budget.min(4_000_000) {
                return Err(LocimError::BudgetExceeded {
                    what: "brute-force cutoff space".into(),
                    count: states.len(),
                });
            }
        }
    }
    // precompute per (state, action): reward and successor indices
    struct Entry {
        reward: f64,
        succ: SmallVec<[(u32, f64); 4]>,
    }
    let entries: Vec<Vec<Entry>> = states
        .iter()
        .map(|cs| {
            joint_actions(model, &cs.s)
                .into_iter()
                .map(|a| {
                    let reward = cutoff_reward(model, cs, &a);
                    let succ = cutoff_successors(model, v_comp, cs, &a)
                        .expect("valid successors")
                        .into_iter()
                        .map(|(cs2, p)| (index[&(cs2.s, cs2.p)], p))
                        .collect();
                    Entry { reward, succ }
                })
                .collect()
        })
        .collect();
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); horizon + 1];
    let mut actions: Vec<Vec<Vec<ActionId>>> = vec![Vec::new(); horizon + 1];
    let gamma = model.consts().gamma;
    let mut next: Option<Vec<f64>> = None;
    for h in (0..=horizon).rev() {
        let mut layer = vec![0.0f64; states.len()];
        let mut layer_actions: Vec<Vec<ActionId>> = vec![Vec::new(); states.len()];
        for (idx, cs) in states.iter().enumerate() {
            let acts = joint_actions(model, &cs.s);
            let mut best = f64::NEG_INFINITY;
            let mut best_a = 0usize;
            for (ai, e) in entries[idx].iter().enumerate() {
                let mut q = e.reward;
                if let Some(ref nv) = next {
                    q += gamma * e.succ.iter().map(|&(i, p)| p * nv[i as usize]).sum::<f64>();
                }
                if q > best + 1e-12 {
                    best = q;
                    best_a = ai;
                }
            }
            layer[idx] = best;
            layer_actions[idx] = acts[best_a].clone();
        }
        next = Some(layer.clone());
        values[h] = layer;
        actions[h] = layer_actions;
    }
    Ok(CutoffOracle { v_comp, horizon, states, index, values, actions })
}

// ---------------------------------------------------------------------------
// dependence time lemma

/// Check the dependence-time properties on one local-movement trajectory:
/// for every T and delta <= c, D(s(T+delta)) is finer than Z(s(T)), the
/// reward regroups over Z(s(T)), and (generalized mode) the transition
/// factorizes over Z(s(T)) blocks.
pub fn check_dependence_time_lemma(
    model: &Model,
    trajectory: &[(JointState, Vec<ActionId>)],
    v: f64,
    delta_max: usize,
) -> Result<BoundReport, LocimError> {
    // reject non-local trajectories
    for w in trajectory.windows(2) {
        for i in 0..model.n() {
            if model.space.distance(w[0].0[i].pos, w[1].0[i].pos) > 1.0 + 1e-9 {
                return Err(LocimError::InvalidInput(
                    "trajectory violates the unit-speed movement limit".into(),
                ));
            }
        }
    }
    let mut worst = 0.0f64;
    for t_base in 0..trajectory.len() {
        let z = model.communication_partition(&trajectory[t_base].0, v)?;
        for delta in 0..=delta_max {
            let t = t_base + delta;
            if t >= trajectory.len() {
                break;
            }
            let (s, a) = &trajectory[t];
            let d = model.dependence_partition(s);
            if !d.is_finer(&z)? {
                return Ok(BoundReport {
                    quantity: "dependence-time: D(s(T+delta)) finer than Z(s(T))".into(),
                    lhs: 1.0,
                    rhs: 0.0,
                    margin: -1.0,
                    pass: false,
                    instance: format!("T={t_base} delta={delta}"),
                });
            }
            // reward regrouping
            let full = model.joint_reward(s, a);
            let mut regrouped = 0.0;
            for block in &z.blocks {
                let states: Vec<AgentState> = block.iter().map(|&i| s[i]).collect();
                let actions: Vec<ActionId> = block.iter().map(|&i| a[i]).collect();
                regrouped += model.block_reward(block, &states, &actions);
            }
            worst = worst.max((full - regrouped).abs());
            // transition factorization (meaningful in generalized mode)
            if model.mode() == Mode::Generalized {
                let joint = model.joint_transition_dist(s, a);
                let mut factored: Vec<(JointState, f64)> = vec![(s.clone(), 1.0)];
                for block in &z.blocks {
                    let states: Vec<AgentState> = block.iter().map(|&i| s[i]).collect();
                    let actions: Vec<ActionId> = block.iter().map(|&i| a[i]).collect();
                    let dist = model.block_step_dist(block, &states, &actions);
                    let mut nxt = Vec::with_capacity(factored.len() * dist.len());
                    for (joint_s, p) in &factored {
                        for (succ, q) in &dist {
                            let mut j2 = joint_s.clone();
                            for (slot, &i) in block.iter().enumerate() {
                                j2[i] = succ[slot];
                            }
                            nxt.push((j2, p * q));
                        }
                    }
                    factored = nxt;
                }
                let mut jm: HashMap<JointState, f64> = HashMap::new();
                for (s2, p) in joint {
                    *jm.entry(s2).or_insert(0.0) += p;
                }
                let mut fm: HashMap<JointState, f64> = HashMap::new();
                for (s2, p) in factored {
                    *fm.entry(s2).or_insert(0.0) += p;
                }
                for (k2, p) in &jm {
                    worst = worst.max((p - fm.get(k2).copied().unwrap_or(0.0)).abs());
                }
                for (k2, p) in &fm {
                    worst = worst.max((p - jm.get(k2).copied().unwrap_or(0.0)).abs());
                }
            }
        }
    }
    Ok(BoundReport::check("dependence-time identity", worst, 0.0, "trajectory"))
}

// ---------------------------------------------------------------------------
// theorem constants

/// The beta factor of the optimality bound for extracted policies.
pub fn beta_constants(gamma: f64, c: usize, c_prime: usize, eta: usize, n: usize, mode: Mode) -> f64 {
    let g = gamma;
    match mode {
        Mode::Standard => {
            g.powi((c_prime - c + 1) as i32)
                + g * g
                + g.powi(eta as i32 + 1)
                + (4.0 + g + 5.0 * g * g) / (1.0 - g)
        }
        Mode::Generalized => {
            2.0 * g.powi((c_prime - c + 1) as i32)
                + 2.0 * g * g
                + g.powi(eta as i32 + 1)
                + (2.0 * g * (1.0 + g) + 4.0 * n as f64 * (1.0 + g * g)) / (1.0 - g)
        }
    }
}

/// The beta' factor of the extraction-consistency bound.
pub fn beta_prime_constants(gamma: f64, eta: usize, n: usize, mode: Mode) -> f64 {
    let g = gamma;
    match mode {
        Mode::Standard => g * g + g.powi(eta as i32 + 1) + (4.0 + g + 5.0 * g * g) / (1.0 - g),
        Mode::Generalized => {
            2.0 * g * g
                + g.powi(eta as i32 + 1)
                + (2.0 * g * (1.0 + g) + 4.0 * n as f64 * (1.0 + g * g)) / (1.0 - g)
        }
    }
}

// ---------------------------------------------------------------------------
// group-count bound

/// The binomial-sum and closed-form bounds on the number of group states in
/// an L x L Chebyshev grid with M = L^2 cells and n agents at visibility v.
pub fn group_count_bound(l: u64, n: u64, v: f64) -> (f64, f64) {
    let m_cells = (l * l) as f64;
    let mut sum = 0.0f64;
    for k in 0..n {
        let choose = binomial(n - 1, k);
        sum += choose * (2.0 * k as f64 * v + 1.0).powi(2 * k as i32);
    }
    let bound_sum = n as f64 * m_cells * sum;
    let ell = 2.0 * (n as f64 - 1.0) * v + 1.0;
    let m_small = ell * ell;
    let closed = m_cells * (m_small + 1.0).powi(n as i32);
    (bound_sum, closed)
}

fn binomial(n: u64, k: u64) -> f64 {
    if k > n {
        return 0.0;
    }
    let mut r = 1.0f64;
    for i in 0..k {
        r = r * (n - i) as f64 / (i + 1) as f64;
    }
    r
}

// ---------------------------------------------------------------------------
// random small instances

#[derive(Clone, Copy, Debug)]
pub struct RandomModelParams {
    pub seed: u64,
    pub generalized: bool,
}

/// Seeded random small instance: 2-3 agents on a line or ring of 4-7 cells,
/// at most two internal states and three actions, rewards in {-5..5}
/// respecting locality, deterministic or two-support kernels.
pub fn random_small_model(params: RandomModelParams) -> Result<Model, LocimError> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(params.seed);
    let n_agents = if rng.gen_bool(0.7) { 2 } else { 3 };
    let cells: u16 = rng.gen_range(4..=7);
    let ring = rng.gen_bool(0.3);
    let metric = if ring {
        let edges: Vec<(u16, u16)> = (0..cells).map(|i| (i, (i + 1) % cells)).collect();
        SpaceKind::Graph { nodes: cells, edges }
    } else {
        SpaceKind::Line { len: cells }
    };
    let r = if rng.gen_bool(0.5) { 0.0 } else { 1.0 };
    let v_exec = r + rng.gen_range(1..=3) as f64;
    let gamma = [0.7, 0.8, 0.9][rng.gen_range(0..3)];
    let n_internal: u8 = if rng.gen_bool(0.5) { 1 } else { 2 };

    // movement choices; stochastic moves slip back to staying
    let mut choices = vec![ActionChoice::det("stay", vec![Effect::Stay])];
    let stochastic = rng.gen_bool(0.4);
    for (name, dx) in [("west", -1), ("east", 1)] {
        if rng.gen_bool(0.85) {
            let mv = Effect::MoveDelta { dx, dy: 0 };
            if stochastic && rng.gen_bool(0.5) {
                let p = 0.75;
                choices.push(ActionChoice {
                    name: name.into(),
                    branches: vec![(vec![mv], p), (vec![Effect::Stay], 1.0 - p)],
                });
            } else {
                choices.push(ActionChoice::det(name, vec![mv]));
            }
        }
    }
    if n_internal == 2 && choices.len() < 3 {
        choices.push(ActionChoice::det("flip", vec![Effect::SetInternal(1)]));
    }
    let choices = choices.into_iter().take(3).collect::<Vec<_>>();
    let class = AgentClass {
        name: "walker".into(),
        rules: vec![DynRule { when: AgentMatcher::any(), choices }],
        inert_internals: vec![],
        internal_count: n_internal,
    };
    let mut agents = Vec::new();
    for _ in 0..n_agents {
        let pos = Pos::Cell(rng.gen_range(0..cells));
        let y = rng.gen_range(0..n_internal);
        agents.push((0usize, AgentState::new(pos, y)));
    }
    let mut self_rewards = Vec::new();
    for _ in 0..rng.gen_range(1..=3) {
        self_rewards.push(SelfRule {
            agents: None,
            when: AgentMatcher {
                pos: Some(vec![rng.gen_range(0..cells)]),
                internal: Some(vec![rng.gen_range(0..n_internal)]),
                ..Default::default()
            },
            value: rng.gen_range(-5..=5) as f64,
        });
    }
    let mut pair_rewards = Vec::new();
    for _ in 0..rng.gen_range(1..=2) {
        let max_dist = if params.generalized {
            // extended reward dependence: may exceed R (fires within D-groups)
            rng.gen_range(0..=(v_exec as i64)) as f64
        } else {
            rng.gen_range(0..=(r as i64)) as f64
        };
        pair_rewards.push(PairRule {
            i_agents: None,
            j_agents: None,
            when_i: AgentMatcher::any(),
            when_j: AgentMatcher::any(),
            max_dist,
            same_internal: rng.gen_bool(0.3),
            value: rng.gen_range(-5..=5) as f64,
        });
    }
    let spec = EnvSpec {
        name: format!("random-{}", params.seed),
        metric,
        constants: ModelConstants { r, v_exec, gamma },
        mode: if params.generalized { Mode::Generalized } else { Mode::Standard },
        classes: vec![class],
        agents,
        self_rewards,
        pair_rewards,
        group_kernel: if params.generalized { Some(GroupKernel::CollisionBlock) } else { None },
        homogeneous: false,
        translation_invariant: false,
    };
    Model::compile(spec)
}

/// Random local-movement trajectory sampled with uniformly random actions.
pub fn random_trajectory(
    model: &Model,
    len: usize,
    seed: u64,
) -> Vec<(JointState, Vec<ActionId>)> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(len);
    let mut s = model.initial();
    for _ in 0..len {
        let a: Vec<ActionId> = (0..model.n())
            .map(|i| rng.gen_range(0..model.n_actions(i, s[i])) as ActionId)
            .collect();
        out.push((s.clone(), a.clone()));
        s = model.joint_transition_sample(&s, &a, &mut rng);
    }
    out
}

/// Adversarial negative control for the dependence time lemma: two agents
/// starting at distance V+1 closing at full speed break the reward
/// regrouping identity at delta = c+1.
pub fn negative_control_model(v: f64, r: f64) -> Result<(Model, Vec<(JointState, Vec<ActionId>)>), LocimError> {
    let span = (v as u16) + 6;
    let spec = EnvSpec {
        name: "dtl-negative-control".into(),
        metric: SpaceKind::Line { len: span },
        constants: ModelConstants { r, v_exec: v, gamma: 0.9 },
        mode: Mode::Standard,
        classes: vec![AgentClass {
            name: "walker".into(),
            rules: vec![DynRule {
                when: AgentMatcher::any(),
                choices: vec![
                    ActionChoice::det("stay", vec![Effect::Stay]),
                    ActionChoice::det("west", vec![Effect::MoveDelta { dx: -1, dy: 0 }]),
                    ActionChoice::det("east", vec![Effect::MoveDelta { dx: 1, dy: 0 }]),
                ],
            }],
            inert_internals: vec![],
            internal_count: 1,
        }],
        agents: vec![
            (0, AgentState::new(Pos::Cell(0), 0)),
            (0, AgentState::new(Pos::Cell((v as u16) + 1), 0)),
        ],
        self_rewards: vec![],
        pair_rewards: vec![PairRule {
            i_agents: None,
            j_agents: None,
            when_i: AgentMatcher::any(),
            when_j: AgentMatcher::any(),
            max_dist: r,
            same_internal: false,
            value: 3.0,
        }],
        group_kernel: None,
        homogeneous: true,
        translation_invariant: false,
    };
    let model = Model::compile(spec)?;
    // both agents close at max speed for c+2 steps
    let c = crate::solver::c_of(v, r)?;
    let mut traj = Vec::new();
    let mut s = model.initial();
    for _ in 0..(c + 2) {
        let a = vec![2u8, 1u8]; // east, west
        traj.push((s.clone(), a.clone()));
        let dist = model.joint_transition_dist(&s, &a);
        s = dist[0].0.clone();
    }
    traj.push((s, vec![0, 0]));
    Ok((model, traj))
}

// ---------------------------------------------------------------------------
// performance-bound checks (the extracted-policy optimality inequalities)

pub struct TheoremChecks {
    pub optimality: BoundReport,
    pub consistency: BoundReport,
}

/// Check the extracted-policy bounds for one model and extraction method:
/// V*(s0) - V^exec(s0) <= beta gamma^(c-1)/(1-gamma) r̃ and
/// |V^comp_0(s0, Z_comp(s0)) - V^exec(s0)| <= beta' gamma^(c-1)/(1-gamma) r̃.
/// The executed value is an exact expectation up to a reported tail, which
/// is folded into the left-hand sides conservatively.
pub fn check_theorem_bounds(
    model: &Model,
    v_comp: f64,
    eta: usize,
    method: crate::extraction::ExtractionMethod,
    instance: &str,
) -> Result<TheoremChecks, LocimError> {
    use crate::extraction::Executor;
    use crate::rollout::{rollout, RolloutConfig, RolloutPolicy};
    use crate::solver::{c_of, solve_finite_horizon, SolverConfig};

    let consts = model.consts();
    let gamma = consts.gamma;
    let c = c_of(consts.v_exec, consts.r)?;
    let c_prime = c_of(v_comp, consts.r)?;
    let r_tilde = model.r_tilde();
    let n = model.n();
    let horizon = c + eta;
    let tables = solve_finite_horizon(model, SolverConfig::identity(v_comp, horizon, n))?;

    let joint = solve_joint_optimal(model, 1e-7)?;
    let v_star = joint
        .value(&model.initial())
        .ok_or_else(|| LocimError::Internal("initial state missing".into()))?;

    // exact expected executed value to a horizon with a small tail
    let t_exec = {
        let target = 1e-6 * (1.0 - gamma) / r_tilde.max(1e-9);
        (target.ln() / gamma.ln()).ceil().max(8.0) as usize
    };
    let executor = Executor::new(model, &tables, method);
    let res = rollout(
        model,
        &RolloutPolicy::Extracted(&executor),
        &model.initial(),
        &RolloutConfig {
            horizon: t_exec,
            seed: 0,
            record_trace: false,
            detect_cycles: false,
            exact_expectation: true,
            repetitions: 1,
        },
    )?;
    let v_exec = res.ret;
    let tail = res.tail_bound;

    let factor = gamma.powi(c as i32 - 1) / (1.0 - gamma) * r_tilde;
    let beta = beta_constants(gamma, c, c_prime, eta, n, model.mode());
    let optimality = BoundReport::check(
        "theorem-1 optimality gap",
        v_star - v_exec + tail,
        beta * factor,
        instance,
    );
    let z_comp = model.communication_partition(&model.initial(), v_comp)?;
    let v_comp0 = tables.value_of(model, &model.initial(), &z_comp, 0)?;
    let beta_p = beta_prime_constants(gamma, eta, n, model.mode());
    let consistency = BoundReport::check(
        "theorem-2 extraction consistency",
        (v_comp0 - v_exec).abs() - tail,
        beta_p * factor,
        instance,
    );
    Ok(TheoremChecks { optimality, consistency })
}

// ---------------------------------------------------------------------------
// consistent performance policy conditions

/// Worst violation per condition over the enumerated instances; each passes
/// when at most 1e-9.
#[derive(Clone, Debug, Serialize)]
pub struct CppReport {
    pub constructive: f64,
    pub deconstructive: f64,
    pub displaced: f64,
    pub contracted: f64,
    pub states_checked: usize,
}

impl CppReport {
    pub fn pass(&self) -> bool {
        self.constructive <= 1e-9
            && self.deconstructive <= 1e-9
            && self.displaced <= 1e-9
            && self.contracted <= 1e-9
    }
}

/// A finite-horizon proper cutoff policy realized by the brute-force oracle
/// plus a stationary one-step-greedy policy appended past the horizon.
pub struct CutoffPolicyView<'a> {
    oracle: &'a CutoffOracle,
    model: &'a Model,
    /// overrides for the negative control
    pub overrides: HashMap<(usize, u32), Vec<ActionId>>,
}

impl<'a> CutoffPolicyView<'a> {
    pub fn new(model: &'a Model, oracle: &'a CutoffOracle) -> Self {
        Self { oracle, model, overrides: HashMap::new() }
    }

    fn action(&self, cs: &CutoffState, t: usize) -> Vec<ActionId> {
        let idx = self.oracle.index[&(cs.s.clone(), cs.p.clone())];
        if let Some(a) = self.overrides.get(&(t, idx)) {
            return a.clone();
        }
        if t <= self.oracle.horizon {
            return self.oracle.actions[t][idx as usize].clone();
        }
        // appended stationary policy: one-step greedy on the cutoff reward
        let mut best = f64::NEG_INFINITY;
        let mut best_a = Vec::new();
        for a in joint_actions(self.model, &cs.s) {
            let r = cutoff_reward(self.model, cs, &a);
            if r > best + 1e-12 {
                best = r;
                best_a = a;
            }
        }
        best_a
    }
}

/// Exact evaluation of [V^{pi |^{act}}_{h..h_end}]_g (s, true_p): the policy
/// acts as if the partition chain had started at `act_p` while rewards and
/// transitions follow the true chain, restricted to the agents in `g`.
#[allow(clippy::too_many_arguments)]
fn eval_mismatched(
    model: &Model,
    v_comp: f64,
    policy: &CutoffPolicyView,
    s: &JointState,
    true_p: &Partition,
    act_p: &Partition,
    t: usize,
    t_end: usize,
    g: &[usize],
) -> Result<f64, LocimError> {
    let a = policy.action(&CutoffState { s: s.clone(), p: act_p.clone() }, t);
    // r^C_g: rewards of true-partition blocks intersected with g
    let mut r = 0.0;
    for block in &true_p.restrict(g).blocks {
        let states: Vec<AgentState> = block.iter().map(|&i| s[i]).collect();
        let actions: Vec<ActionId> = block.iter().map(|&i| a[i]).collect();
        r += model.block_reward(block, &states, &actions);
    }
    if t == t_end {
        return Ok(r);
    }
    let gamma = model.consts().gamma;
    let mut exp = 0.0;
    for (succ, p) in cutoff_successors(model, v_comp, &CutoffState { s: s.clone(), p: true_p.clone() }, &a)? {
        let act_next = crate::solver::blockwise_split(model, v_comp, &succ.s, act_p)?;
        exp += p * eval_mismatched(
            model, v_comp, policy, &succ.s, &succ.p, &act_next, t + 1, t_end, g,
        )?;
    }
    Ok(r + gamma * exp)
}

/// Enumerate the four consistent-performance conditions over the complete
/// small cutoff space for the policy (optimal unless overridden).
pub fn check_consistent_performance(
    model: &Model,
    v_comp: f64,
    horizon: usize,
    policy: &CutoffPolicyView,
) -> Result<CppReport, LocimError> {
    let oracle = policy.oracle;
    let mut report = CppReport {
        constructive: f64::NEG_INFINITY,
        deconstructive: f64::NEG_INFINITY,
        displaced: f64::NEG_INFINITY,
        contracted: f64::NEG_INFINITY,
        states_checked: 0,
    };
    for cs in &oracle.states {
        report.states_checked += 1;
        let finer = partitions_finer_than(&cs.p);
        for h in 0..=1usize {
            if h > horizon {
                continue;
            }
            let v_plain: HashMap<Vec<usize>, f64> = cs
                .p
                .blocks
                .iter()
                .map(|b| {
                    let v = eval_mismatched(
                        model, v_comp, policy, &cs.s, &cs.p, &cs.p, h, horizon, b,
                    )
                    .unwrap();
                    (b.clone(), v)
                })
                .collect();
            for pf in &finer {
                if pf == &cs.p {
                    continue;
                }
                // constructive: act as if the partition were finer
                for (block, &v_ref) in &v_plain {
                    let lhs = eval_mismatched(
                        model, v_comp, policy, &cs.s, &cs.p, pf, h, horizon, block,
                    )?;
                    report.constructive = report.constructive.max(lhs - v_ref);
                }
                // deconstructive: true partition finer, policy acts coarser
                for block in &pf.blocks {
                    let rhs = eval_mismatched(
                        model, v_comp, policy, &cs.s, pf, pf, h, horizon, block,
                    )?;
                    let lhs = eval_mismatched(
                        model, v_comp, policy, &cs.s, pf, &cs.p, h, horizon, block,
                    )?;
                    report.deconstructive = report.deconstructive.max(lhs - rhs);
                }
            }
        }
        // displaced: start the policy clock at 1 with the appended step
        for block in &cs.p.blocks {
            let v0 = eval_mismatched(
                model, v_comp, policy, &cs.s, &cs.p, &cs.p, 0, horizon, block,
            )?;
            let lhs = eval_displaced(model, v_comp, policy, cs, block, horizon)?;
            report.displaced = report.displaced.max(lhs - v0);
            // contracted: truncate the final step
            if horizon >= 1 {
                let v1 = eval_mismatched(
                    model, v_comp, policy, &cs.s, &cs.p, &cs.p, 1, horizon, block,
                )?;
                let short = eval_truncated(model, v_comp, policy, cs, block, horizon - 1)?;
                report.contracted = report.contracted.max(short - v1);
            }
        }
    }
    Ok(report)
}

/// [V^{pi'}_{1, H+1}]_g: run from policy step 1 through the appended
/// stationary step at H+1.
fn eval_displaced(
    model: &Model,
    v_comp: f64,
    policy: &CutoffPolicyView,
    cs: &CutoffState,
    g: &[usize],
    horizon: usize,
) -> Result<f64, LocimError> {
    eval_from(model, v_comp, policy, cs, g, 1, horizon + 1)
}

/// [V^pi_{0, H-1}]_g: the plain policy truncated one step early.
fn eval_truncated(
    model: &Model,
    v_comp: f64,
    policy: &CutoffPolicyView,
    cs: &CutoffState,
    g: &[usize],
    h_end: usize,
) -> Result<f64, LocimError> {
    eval_from(model, v_comp, policy, cs, g, 0, h_end)
}

fn eval_from(
    model: &Model,
    v_comp: f64,
    policy: &CutoffPolicyView,
    cs: &CutoffState,
    g: &[usize],
    t: usize,
    t_end: usize,
) -> Result<f64, LocimError> {
    eval_mismatched(model, v_comp, policy, &cs.s, &cs.p, &cs.p, t, t_end, g)
}

// ---------------------------------------------------------------------------
// property suites (shared by the verify subcommand and the acceptance tests)

#[derive(Clone, Debug, Serialize)]
pub struct PropertyOutcome {
    pub name: String,
    pub checked: usize,
    pub failures: usize,
    pub worst_margin: f64,
    pub failing_seeds: Vec<u64>,
    pub pass: bool,
    pub note: String,
}

impl PropertyOutcome {
    fn new(name: &str) -> Self {
        Self {
            name: name.into(),
            checked: 0,
            failures: 0,
            worst_margin: f64::INFINITY,
            failing_seeds: Vec::new(),
            pass: true,
            note: String::new(),
        }
    }
    fn record(&mut self, seed: u64, pass: bool, margin: f64) {
        self.checked += 1;
        self.worst_margin = self.worst_margin.min(margin);
        if !pass {
            self.failures += 1;
            self.pass = false;
            if self.failing_seeds.len() < 16 {
                self.failing_seeds.push(seed);
            }
        }
    }
}

/// Decomposition oracle equivalence: on seeded random small instances the
/// group-state solver matches the brute-force cutoff induction on every
/// (s, P, h) whose blocks are chain-connected (the decomposable domain).
pub fn suite_decomposition(instances: usize, seed0: u64) -> Result<PropertyOutcome, LocimError> {
    use crate::solver::{solve_finite_horizon, SolverConfig};
    let mut out = PropertyOutcome::new("decomposition");
    for k in 0..instances {
        let seed = seed0 + k as u64;
        let model = random_small_model(RandomModelParams { seed, generalized: k % 5 == 4 })?;
        let consts = model.consts();
        let v_comp = consts.v_exec + (k % 2) as f64;
        let horizon = 1 + (k % 4); // H <= 4
        let oracle = brute_force_cutoff(&model, v_comp, horizon)?;
        let tables =
            solve_finite_horizon(&model, SolverConfig::identity(v_comp, horizon, model.n()))?;
        let mut worst = 0.0f64;
        let mut compared = 0usize;
        for cs in &oracle.states {
            let connected = cs.p.blocks.iter().all(|b| {
                let states: Vec<AgentState> = b.iter().map(|&i| cs.s[i]).collect();
                model.partition_of_members(b, &states, v_comp).blocks.len() == 1
            });
            if !connected {
                continue;
            }
            for h in 0..=horizon {
                let lhs = tables.value_of(&model, &cs.s, &cs.p, h)?;
                let rhs = oracle.value(&cs.s, &cs.p, h).unwrap();
                worst = worst.max((lhs - rhs).abs());
                compared += 1;
            }
        }
        out.record(seed, worst <= 1e-9 && compared > 0, 1e-9 - worst);
    }
    Ok(out)
}

/// Dependence time lemma: sampled local trajectories satisfy the regrouping
/// identities for all delta <= c, and the constructed delta = c+1 control
/// fails.
pub fn suite_dependence_time(
    trajectories: usize,
    seed0: u64,
) -> Result<PropertyOutcome, LocimError> {
    let mut out = PropertyOutcome::new("dependence-time-lemma");
    let per_model = 10usize;
    let n_models = trajectories.div_ceil(per_model);
    for k in 0..n_models {
        let seed = seed0 + k as u64;
        let model = random_small_model(RandomModelParams { seed, generalized: k % 3 == 2 })?;
        let c = crate::solver::c_of(model.consts().v_exec, model.consts().r)?;
        for j in 0..per_model.min(trajectories - k * per_model) {
            let traj = random_trajectory(&model, 10, seed ^ (j as u64) << 32);
            let report =
                check_dependence_time_lemma(&model, &traj, model.consts().v_exec, c)?;
            out.record(seed, report.pass, report.margin);
        }
    }
    // negative control: closing agents break the identity at delta = c + 1
    let (model, traj) = negative_control_model(5.0, 1.0)?;
    let c = crate::solver::c_of(5.0, 1.0)?;
    let control = check_dependence_time_lemma(&model, &traj, 5.0, c + 1)?;
    if control.pass {
        out.pass = false;
        out.note = "negative control unexpectedly passed".into();
    } else {
        out.note = "negative control failed as constructed".into();
    }
    Ok(out)
}

/// Optimality and extraction-consistency bounds across random instances and
/// the three extraction methods.
pub fn suite_theorem_bounds(instances: usize, seed0: u64) -> Result<PropertyOutcome, LocimError> {
    use crate::extraction::{ExtractionMethod, PlacementKind, SmbeConfig};
    let mut out = PropertyOutcome::new("theorem-bounds");
    for k in 0..instances {
        let seed = seed0 + k as u64;
        let model = random_small_model(RandomModelParams { seed, generalized: k % 5 == 4 })?;
        let eta = 1 + (k % 3);
        let xi = (k % 2) as f64;
        let v_comp = model.consts().v_exec + xi;
        for method in [
            ExtractionMethod::Trivial,
            ExtractionMethod::Aggregate(PlacementKind::UniformPhantom),
            ExtractionMethod::SimpleMemory(SmbeConfig::default()),
        ] {
            let aggregate = matches!(method, ExtractionMethod::Aggregate(_));
            if aggregate {
                // sampled estimate: fold the sampling error into the check
                let checks = check_theorem_bounds_sampled(&model, v_comp, eta, method, seed)?;
                out.record(seed, checks.optimality.pass, checks.optimality.margin);
                out.record(seed, checks.consistency.pass, checks.consistency.margin);
            } else {
                let checks = check_theorem_bounds(
                    &model,
                    v_comp,
                    eta,
                    method,
                    &format!("seed {seed}"),
                )?;
                out.record(seed, checks.optimality.pass, checks.optimality.margin);
                out.record(seed, checks.consistency.pass, checks.consistency.margin);
            }
        }
    }
    Ok(out)
}

/// Theorem checks for a randomized extraction method, estimated by repeated
/// seeded rollouts with the standard error folded in conservatively.
fn check_theorem_bounds_sampled(
    model: &Model,
    v_comp: f64,
    eta: usize,
    method: crate::extraction::ExtractionMethod,
    seed: u64,
) -> Result<TheoremChecks, LocimError> {
    use crate::extraction::Executor;
    use crate::rollout::{rollout, RolloutConfig, RolloutPolicy};
    use crate::solver::{c_of, solve_finite_horizon, SolverConfig};
    let consts = model.consts();
    let gamma = consts.gamma;
    let c = c_of(consts.v_exec, consts.r)?;
    let c_prime = c_of(v_comp, consts.r)?;
    let r_tilde = model.r_tilde();
    let n = model.n();
    let tables = solve_finite_horizon(model, SolverConfig::identity(v_comp, c + eta, n))?;
    let joint = solve_joint_optimal(model, 1e-7)?;
    let v_star = joint.value(&model.initial()).unwrap();
    let horizon = {
        let target = 1e-5 * (1.0 - gamma) / r_tilde.max(1e-9);
        (target.ln() / gamma.ln()).ceil().max(8.0) as usize
    };
    let executor = Executor::new(model, &tables, method);
    let res = rollout(
        model,
        &RolloutPolicy::Extracted(&executor),
        &model.initial(),
        &RolloutConfig {
            horizon,
            seed,
            record_trace: false,
            detect_cycles: false,
            exact_expectation: false,
            repetitions: 24,
        },
    )?;
    let slack = res.tail_bound + 3.0 * res.std_error.unwrap_or(0.0);
    let factor = gamma.powi(c as i32 - 1) / (1.0 - gamma) * r_tilde;
    let beta = beta_constants(gamma, c, c_prime, eta, n, model.mode());
    let optimality = BoundReport::check(
        "theorem-1 optimality gap (sampled)",
        v_star - res.ret + slack,
        beta * factor,
        &format!("seed {seed}"),
    );
    let z_comp = model.communication_partition(&model.initial(), v_comp)?;
    let v_comp0 = tables.value_of(model, &model.initial(), &z_comp, 0)?;
    let beta_p = beta_prime_constants(gamma, eta, n, model.mode());
    let consistency = BoundReport::check(
        "theorem-2 extraction consistency (sampled)",
        (v_comp0 - res.ret).abs() - slack,
        beta_p * factor,
        &format!("seed {seed}"),
    );
    Ok(TheoremChecks { optimality, consistency })
}

/// Consistent-performance conditions: optimal finite-horizon policies pass
/// all four on enumerable instances; a corrupted policy fails at least one.
pub fn suite_cpp(instances: usize, seed0: u64) -> Result<PropertyOutcome, LocimError> {
    let mut out = PropertyOutcome::new("consistent-performance");
    let mut control_failed = false;
    let mut k = 0u64;
    let mut done = 0usize;
    while done < instances {
        let seed = seed0 + k;
        k += 1;
        let model = random_small_model(RandomModelParams { seed, generalized: false })?;
        if model.n() != 2 {
            continue; // keep the enumeration small
        }
        done += 1;
        let v_comp = model.consts().v_exec;
        let horizon = 2;
        let oracle = brute_force_cutoff(&model, v_comp, horizon)?;
        let policy = CutoffPolicyView::new(&model, &oracle);
        let report = check_consistent_performance(&model, v_comp, horizon, &policy)?;
        let worst = report
            .constructive
            .max(report.deconstructive)
            .max(report.displaced)
            .max(report.contracted);
        out.record(seed, report.pass(), 1e-9 - worst);
        // corrupted-policy control on the first instance with a real choice
        if !control_failed {
            'search: for idx in 0..oracle.states.len() {
                let acts = joint_actions(&model, &oracle.states[idx].s);
                if acts.len() < 2 {
                    continue;
                }
                for t in 0..=horizon {
                    let current = &oracle.actions[t][idx];
                    let alt = acts.iter().find(|a| *a != current).unwrap().clone();
                    let mut corrupted = CutoffPolicyView::new(&model, &oracle);
                    corrupted.overrides.insert((t, idx as u32), alt);
                    let r = check_consistent_performance(&model, v_comp, horizon, &corrupted)?;
                    if !r.pass() {
                        control_failed = true;
                        break 'search;
                    }
                }
            }
        }
    }
    if control_failed {
        out.note = "corrupted-policy control violated a condition".into();
    } else {
        out.pass = false;
        out.note = "no corrupted policy violated any condition".into();
    }
    Ok(out)
}

/// Group-count bound: the binomial sum stays below the closed form and the
/// enumerated count on an actual Chebyshev grid stays below both.
pub fn suite_group_bound() -> Result<PropertyOutcome, LocimError> {
    use crate::geometry::SpaceKind;
    use crate::model::{ActionChoice, AgentClass, AgentMatcher, DynRule, Effect};
    use crate::solver::{enumerate_group_states, Sharing, SolverConfig};
    let mut out = PropertyOutcome::new("group-count-bound");
    for (l, n, v) in [(10u64, 1u64, 1.0f64), (10, 2, 1.0), (8, 2, 2.0), (6, 3, 1.0)] {
        let (sum, closed) = group_count_bound(l, n, v);
        out.record(n, sum <= closed + 1e-9, closed - sum);
        // enumerate on the actual grid with one homogeneous class
        let moves = DynRule {
            when: AgentMatcher::any(),
            choices: vec![
                ActionChoice::det("stay", vec![Effect::Stay]),
                ActionChoice::det("nw", vec![Effect::MoveDelta { dx: -1, dy: -1 }]),
                ActionChoice::det("n", vec![Effect::MoveDelta { dx: 0, dy: -1 }]),
                ActionChoice::det("s", vec![Effect::MoveDelta { dx: 0, dy: 1 }]),
                ActionChoice::det("w", vec![Effect::MoveDelta { dx: -1, dy: 0 }]),
                ActionChoice::det("e", vec![Effect::MoveDelta { dx: 1, dy: 0 }]),
            ],
        };
        let spec = EnvSpec {
            name: format!("cheb-{l}-{n}"),
            metric: SpaceKind::Grid { w: l as u16, h: l as u16, chebyshev: true, blocked: vec![] },
            constants: ModelConstants { r: v / 2.0, v_exec: v, gamma: 0.9 },
            mode: Mode::Standard,
            classes: vec![AgentClass {
                name: "unit".into(),
                rules: vec![moves],
                inert_internals: vec![],
                internal_count: 1,
            }],
            agents: (0..n).map(|i| (0usize, AgentState::new(Pos::Cell(i as u16), 0))).collect(),
            self_rewards: vec![],
            pair_rewards: vec![],
            group_kernel: None,
            homogeneous: true,
            translation_invariant: true,
        };
        let model = Model::compile(spec)?;
        let config = SolverConfig {
            v_comp: v,
            horizon: 0,
            max_group: n as usize,
            sharing: Sharing::Identity,
        };
        let keys = enumerate_group_states(&model, &config)?;
        // group states of the largest size, per the counting argument
        let count = keys.iter().filter(|key| key.len() == n as usize).count() as f64;
        out.record(n, count <= sum + 1e-9, sum - count);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests_support::penalty_line_spec;
    use crate::solver::{solve_finite_horizon, SolverConfig};

    #[test]
    fn joint_optimal_geometric_value() {
        // single agent two cells from an absorbing-style recurring reward:
        // V* = sum_{t>=2} gamma^t * 200 = gamma^2 * 200 / (1 - gamma)
        let mut spec = penalty_line_spec();
        spec.agents.truncate(1);
        spec.agents[0].1 = AgentState::new(Pos::Cell(2), 0);
        let m = Model::compile(spec).unwrap();
        let sol = solve_joint_optimal(&m, 1e-9).unwrap();
        let v = sol.value(&m.initial()).unwrap();
        let expect = 0.9f64.powi(2) * 200.0 / 0.1;
        assert!((v - expect).abs() < 1e-6, "v={v} expect={expect}");
    }

    #[test]
    fn penalty_jittering_joint_optimal_is_2405() {
        let m = Model::compile(penalty_line_spec()).unwrap();
        let sol = solve_joint_optimal(&m, 1e-9).unwrap();
        let v = sol.value(&m.initial()).unwrap();
        assert!((v - 2405.0).abs() < 0.01, "v={v}");
    }

    #[test]
    fn partitions_finer_enumeration() {
        let z = Partition::new(vec![vec![0, 1, 2]]).unwrap();
        // Bell(3) = 5
        assert_eq!(partitions_finer_than(&z).len(), 5);
        let z2 = Partition::new(vec![vec![0, 1], vec![2]]).unwrap();
        assert_eq!(partitions_finer_than(&z2).len(), 2);
    }

    #[test]
    fn brute_force_h0_is_max_immediate() {
        let m = Model::compile(penalty_line_spec()).unwrap();
        let oracle = brute_force_cutoff(&m, 1.0, 0).unwrap();
        let s = vec![AgentState::new(Pos::Cell(0), 0), AgentState::new(Pos::Cell(4), 0)];
        let p = Partition::singletons(2);
        // best immediate: stay on 200 + stay on 50
        assert_eq!(oracle.value(&s, &p, 0), Some(250.0));
    }

    #[test]
    fn decomposition_matches_brute_force_small() {
        let m = Model::compile(penalty_line_spec()).unwrap();
        let h = 3;
        let oracle = brute_force_cutoff(&m, 2.0, h).unwrap();
        let tables = solve_finite_horizon(&m, SolverConfig::identity(2.0, h, 2)).unwrap();
        let mut checked = 0;
        for cs in &oracle.states {
            // only partitions whose blocks are chain-connected decompose
            let connected = cs.p.blocks.iter().all(|b| {
                let states: Vec<AgentState> = b.iter().map(|&i| cs.s[i]).collect();
                m.partition_of_members(b, &states, 2.0).blocks.len() == 1
            });
            if !connected {
                continue;
            }
            for hh in 0..=h {
                let lhs = tables.value_of(&m, &cs.s, &cs.p, hh).unwrap();
                let rhs = oracle.value(&cs.s, &cs.p, hh).unwrap();
                assert!(
                    (lhs - rhs).abs() < 1e-9,
                    "mismatch at {:?} h={hh}: {lhs} vs {rhs}",
                    cs
                );
                checked += 1;
            }
        }
        assert!(checked > 100);
    }

    #[test]
    fn single_vs_split_blocks_differ_with_cross_rewards() {
        // overlap penalty exists only within one block
        let m = Model::compile(penalty_line_spec()).unwrap();
        let oracle = brute_force_cutoff(&m, 1.0, 1).unwrap();
        let s = vec![AgentState::new(Pos::Cell(1), 0), AgentState::new(Pos::Cell(1), 0)];
        let together = oracle.value(&s, &Partition::one_block(&[0, 1]), 0).unwrap();
        let split = oracle.value(&s, &Partition::singletons(2), 0).unwrap();
        assert!(together < split, "together={together} split={split}");
    }

    #[test]
    fn beta_constants_gamma_zero_limit() {
        // as gamma -> 0 the standard beta tends to 4
        let b = beta_constants(1e-12, 1, 1, 0, 2, Mode::Standard);
        assert!((b - 4.0).abs() < 1e-6, "b={b}");
    }

    #[test]
    fn beta_constants_cross_check() {
        // independent re-derivation at gamma=0.9, c=c'=2, eta=0
        let g: f64 = 0.9;
        let by_hand = g.powi(1) + g * g + g + (4.0 + g + 5.0 * g * g) / (1.0 - g);
        let b = beta_constants(g, 2, 2, 0, 2, Mode::Standard);
        assert!((b - by_hand).abs() < 1e-12);
        // generalized beta grows linearly in n
        let b2 = beta_constants(g, 2, 2, 0, 2, Mode::Generalized);
        let b3 = beta_constants(g, 2, 2, 0, 3, Mode::Generalized);
        let b4 = beta_constants(g, 2, 2, 0, 4, Mode::Generalized);
        assert!((2.0 * (b3 - b2) - (b4 - b2)).abs() < 1e-9);
    }

    #[test]
    fn group_count_bound_ordering() {
        let (sum, closed) = group_count_bound(10, 2, 1.0);
        assert!(sum <= closed + 1e-9, "sum={sum} closed={closed}");
        let (s1, c1) = group_count_bound(10, 1, 1.0);
        assert_eq!(s1, 100.0);
        assert!(s1 <= c1);
    }

    #[test]
    fn dependence_time_lemma_on_random_instances() {
        for seed in 0..20 {
            let m = random_small_model(RandomModelParams { seed, generalized: seed % 4 == 0 })
                .unwrap();
            let c = crate::solver::c_of(m.consts().v_exec, m.consts().r).unwrap();
            let traj = random_trajectory(&m, 12, seed ^ 0xABCD);
            let report =
                check_dependence_time_lemma(&m, &traj, m.consts().v_exec, c).unwrap();
            assert!(report.pass, "seed {seed}: {report:?}");
        }
    }

    #[test]
    fn dependence_time_negative_control_fails() {
        // V - R even so that closing agents land exactly within R at c+1
        let (m, traj) = negative_control_model(5.0, 1.0).unwrap();
        let c = crate::solver::c_of(5.0, 1.0).unwrap();
        let report = check_dependence_time_lemma(&m, &traj, 5.0, c + 1).unwrap();
        assert!(!report.pass, "negative control unexpectedly passed: {report:?}");
        // and the in-range deltas still pass
        let ok = check_dependence_time_lemma(&m, &traj, 5.0, c).unwrap();
        assert!(ok.pass);
    }

    #[test]
    fn random_models_validate() {
        for seed in 0..30 {
            let m = random_small_model(RandomModelParams { seed, generalized: seed % 3 == 0 })
                .unwrap();
            let report = m.validate();
            assert!(report.is_empty(), "seed {seed}: {report:?}");
        }
    }

    #[test]
    fn theorem_bounds_hold_on_penalty_jittering() {
        let m = Model::compile(penalty_line_spec()).unwrap();
        let checks = check_theorem_bounds(
            &m,
            1.0,
            30,
            crate::extraction::ExtractionMethod::Trivial,
            "pj",
        )
        .unwrap();
        assert!(checks.optimality.pass, "{:?}", checks.optimality);
        assert!(checks.consistency.pass, "{:?}", checks.consistency);
    }

    #[test]
    fn cpp_single_agent_trivial() {
        let mut spec = penalty_line_spec();
        spec.agents.truncate(1);
        let m = Model::compile(spec).unwrap();
        let oracle = brute_force_cutoff(&m, 1.0, 2).unwrap();
        let policy = CutoffPolicyView::new(&m, &oracle);
        let report = check_consistent_performance(&m, 1.0, 2, &policy).unwrap();
        assert!(report.pass(), "{report:?}");
    }

    #[test]
    fn cpp_optimal_two_agent_passes_and_corrupted_fails() {
        let m = random_small_model(RandomModelParams { seed: 11, generalized: false }).unwrap();
        let v_comp = m.consts().v_exec;
        let h = 2;
        let oracle = brute_force_cutoff(&m, v_comp, h).unwrap();
        let policy = CutoffPolicyView::new(&m, &oracle);
        let report = check_consistent_performance(&m, v_comp, h, &policy).unwrap();
        assert!(report.pass(), "{report:?}");

        // corrupt the policy: flip actions until some condition fails
        let mut broken = false;
        'outer: for idx in 0..oracle.states.len() {
            let n_actions = joint_actions(&m, &oracle.states[idx].s).len();
            if n_actions < 2 {
                continue;
            }
            for t in 0..=h {
                let current = &oracle.actions[t][idx];
                let alternative = joint_actions(&m, &oracle.states[idx].s)
                    .into_iter()
                    .find(|a| a != current)
                    .unwrap();
                let mut corrupted = CutoffPolicyView::new(&m, &oracle);
                corrupted.overrides.insert((t, idx as u32), alternative);
                let r = check_consistent_performance(&m, v_comp, h, &corrupted).unwrap();
                if !r.pass() {
                    broken = true;
                    break 'outer;
                }
            }
        }
        assert!(broken, "no corrupted policy violated any condition");
    }
}

