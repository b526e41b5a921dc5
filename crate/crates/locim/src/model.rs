//! The locally interdependent multi-agent MDP: states, actions, rewards,
//! transitions, and validity checks. Models are described declaratively
//! (JSON-serializable rules) and compiled into fast evaluators.

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;
use std::collections::HashMap;

use crate::geometry::{proximity_partition_of, MetricSpace, Partition, Pos, SpaceKind};
use crate::LocimError;

pub type ActionId = u8;

/// One agent's state: a position in the metric space plus an internal state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AgentState {
    pub pos: Pos,
    pub y: u8,
}

impl AgentState {
    pub fn new(pos: Pos, y: u8) -> Self {
        Self { pos, y }
    }
}

pub type JointState = Vec<AgentState>;

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ModelConstants {
    /// Dependence radius.
    pub r: f64,
    /// Visibility radius at execution time; must exceed `r`.
    pub v_exec: f64,
    pub gamma: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Pairwise rewards vanish beyond the dependence radius and agents
    /// transition independently.
    Standard,
    /// Rewards unrestricted within a dependence group; transitions may couple
    /// agents within a dependence group.
    Generalized,
}

/// Predicate over a single agent's (state, action).
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct AgentMatcher {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pos: Option<Vec<u16>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub on_chain: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub internal: Option<Vec<u8>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<Vec<ActionId>>,
}

impl AgentMatcher {
    pub fn any() -> Self {
        Self::default()
    }

    pub fn matches(&self, s: AgentState, a: Option<ActionId>) -> bool {
        if let Some(ref ps) = self.pos {
            match s.pos {
                Pos::Cell(c) => {
                    if !ps.contains(&c) {
                        return false;
                    }
                }
                Pos::Chain(..) => return false,
            }
        }
        if let Some(chain) = self.on_chain {
            if matches!(s.pos, Pos::Chain(..)) != chain {
                return false;
            }
        }
        if let Some(ref ys) = self.internal {
            if !ys.contains(&s.y) {
                return false;
            }
        }
        if let Some(ref acts) = self.action {
            match a {
                Some(a) => {
                    if !acts.contains(&a) {
                        return false;
                    }
                }
                None => return false,
            }
        }
        true
    }
}

/// A primitive state change. Effects of one action branch apply in order.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Effect {
    Stay,
    /// Move by (dx, dy) on a grid or by dx on a line; blocked moves stay.
    MoveDelta { dx: i32, dy: i32 },
    /// Jump to an explicit node (must respect the unit-speed limit).
    MoveTo(u16),
    /// Leave the arena onto the private ray anchored at `anchor`.
    ChainEnter { anchor: u16 },
    SetInternal(u8),
    AddInternal(i8),
}

/// One selectable action: a distribution over effect lists.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ActionChoice {
    pub name: String,
    pub branches: Vec<(Vec<Effect>, f64)>,
}

impl ActionChoice {
    pub fn det(name: &str, effects: Vec<Effect>) -> Self {
        Self { name: name.into(), branches: vec![(effects, 1.0)] }
    }
}

/// Dynamics rule: in states matching `when`, the agent's available actions
/// are exactly `choices` (in order; the order fixes action ids and thereby
/// the argmax tie-break). First matching rule wins.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DynRule {
    pub when: AgentMatcher,
    pub choices: Vec<ActionChoice>,
}

/// Behaviour shared by all agents of one class.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AgentClass {
    pub name: String,
    pub rules: Vec<DynRule>,
    /// Internal states in which the agent no longer interacts with anyone.
    #[serde(default)]
    pub inert_internals: Vec<u8>,
    /// Upper bound on internal-state values (for enumeration).
    pub internal_count: u8,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SelfRule {
    /// Restrict to specific agent indices (None = all).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agents: Option<Vec<usize>>,
    pub when: AgentMatcher,
    pub value: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PairRule {
    /// Ordered pair filters: the rule contributes to r̄_{i,j}.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub i_agents: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub j_agents: Option<Vec<usize>>,
    pub when_i: AgentMatcher,
    pub when_j: AgentMatcher,
    /// Fires when d(s_i, s_j) <= max_dist.
    pub max_dist: f64,
    #[serde(default)]
    pub same_internal: bool,
    pub value: f64,
}

/// Group transition templates for the generalized mode.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GroupKernel {
    /// An agent whose sampled target cell is currently occupied by another
    /// member of its dependence group stays in place instead.
    CollisionBlock,
}

/// Declarative model description; the JSON environment spec.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnvSpec {
    pub name: String,
    pub metric: SpaceKind,
    pub constants: ModelConstants,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    pub classes: Vec<AgentClass>,
    /// (class index, initial state) per agent.
    pub agents: Vec<(usize, AgentState)>,
    #[serde(default)]
    pub self_rewards: Vec<SelfRule>,
    #[serde(default)]
    pub pair_rewards: Vec<PairRule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_kernel: Option<GroupKernel>,
    #[serde(default)]
    pub homogeneous: bool,
    #[serde(default)]
    pub translation_invariant: bool,
}

fn default_mode() -> Mode {
    Mode::Standard
}

/// A compiled model: the environment spec plus precomputed tables.
pub struct Model {
    pub spec: EnvSpec,
    pub space: MetricSpace,
    /// Reachable agent states per class, each with an index map.
    class_states: Vec<Vec<AgentState>>,
    class_state_idx: Vec<HashMap<AgentState, u16>>,
    /// Chain positions are capped at this step count; beyond it the walker
    /// is farther than any radius in use and parks.
    pub chain_cap: u16,
    diameter: f64,
    r_tilde_pair: Vec<f64>, // n*n matrix of max |r̄_{i,j}|
}

pub type Dist<T> = SmallVec<[(T, f64); 4]>;

impl Model {
    pub fn compile(spec: EnvSpec) -> Result<Self, LocimError> {
        let space = MetricSpace::new(spec.metric.clone())?;
        if !(spec.constants.v_exec > spec.constants.r) {
            return Err(LocimError::InvalidConfig(format!(
                "visibility {} must exceed dependence radius {}",
                spec.constants.v_exec, spec.constants.r
            )));
        }
        if !(spec.constants.gamma > 0.0 && spec.constants.gamma < 1.0) {
            return Err(LocimError::InvalidConfig("gamma must lie in (0,1)".into()));
        }
        for &(class, s0) in &spec.agents {
            if class >= spec.classes.len() {
                return Err(LocimError::InvalidInput(format!("agent class {class} undeclared")));
            }
            if !space.valid(s0.pos) {
                return Err(LocimError::InvalidInput(format!("invalid start position {s0:?}")));
            }
        }
        let diameter = space.diameter();
        let chain_cap = (diameter as u16).saturating_add(3);
        let mut m = Self {
            spec,
            space,
            class_states: Vec::new(),
            class_state_idx: Vec::new(),
            chain_cap,
            diameter,
            r_tilde_pair: Vec::new(),
        };
        m.enumerate_class_states()?;
        m.compute_r_tilde();
        Ok(m)
    }

    pub fn n(&self) -> usize {
        self.spec.agents.len()
    }

    pub fn consts(&self) -> ModelConstants {
        self.spec.constants
    }

    pub fn mode(&self) -> Mode {
        self.spec.mode
    }

    pub fn class_of(&self, agent: usize) -> usize {
        self.spec.agents[agent].0
    }

    pub fn initial(&self) -> JointState {
        self.spec.agents.iter().map(|&(_, s)| s).collect()
    }

    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    pub fn is_inert(&self, agent: usize, s: AgentState) -> bool {
        self.spec.classes[self.class_of(agent)].inert_internals.contains(&s.y)
    }

    /// Reachable agent states of a class (chain steps capped).
    pub fn states_of_class(&self, class: usize) -> &[AgentState] {
        &self.class_states[class]
    }

    pub fn state_index(&self, class: usize, s: AgentState) -> Option<u16> {
        let key = self.cap_chain(s);
        self.class_state_idx[class].get(&key).copied()
    }

    pub fn state_by_index(&self, class: usize, idx: u16) -> AgentState {
        self.class_states[class][idx as usize]
    }

    /// Clamp a chain position to the model's cap; states beyond the cap are
    /// indistinguishable to every radius in use.
    pub fn cap_chain(&self, s: AgentState) -> AgentState {
        match s.pos {
            Pos::Chain(a, k) if k > self.chain_cap => {
                AgentState { pos: Pos::Chain(a, self.chain_cap), y: s.y }
            }
            _ => s,
        }
    }

    /// The action choices available to `agent` in state `s`.
    pub fn choices(&self, agent: usize, s: AgentState) -> &[ActionChoice] {
        self.class_choices(self.class_of(agent), s)
    }

    fn class_choices(&self, class: usize, s: AgentState) -> &[ActionChoice] {
        static CHAIN_ADVANCE: std::sync::OnceLock<Vec<ActionChoice>> = std::sync::OnceLock::new();
        if matches!(s.pos, Pos::Chain(..)) {
            return CHAIN_ADVANCE.get_or_init(|| {
                vec![ActionChoice::det("advance", vec![Effect::MoveDelta { dx: 1, dy: 0 }])]
            });
        }
        for rule in &self.spec.classes[class].rules {
            if rule.when.matches(s, None) {
                return &rule.choices;
            }
        }
        static STAY: std::sync::OnceLock<Vec<ActionChoice>> = std::sync::OnceLock::new();
        STAY.get_or_init(|| vec![ActionChoice::det("stay", vec![Effect::Stay])])
    }

    pub fn n_actions(&self, agent: usize, s: AgentState) -> usize {
        self.choices(agent, s).len()
    }

    fn apply_effects(&self, mut s: AgentState, effects: &[Effect]) -> AgentState {
        for e in effects {
            match e {
                Effect::Stay => {}
                Effect::MoveDelta { dx, dy } => match s.pos {
                    Pos::Cell(c) => {
                        let target = match &self.space.kind {
                            SpaceKind::Line { len } => {
                                let nx = c as i32 + dx;
                                if nx >= 0 && nx < *len as i32 {
                                    Some(nx as u16)
                                } else {
                                    None
                                }
                            }
                            SpaceKind::Grid { w, h, .. } => {
                                let (x, y) = ((c % w) as i32, (c / w) as i32);
                                let (nx, ny) = (x + dx, y + dy);
                                if nx >= 0 && nx < *w as i32 && ny >= 0 && ny < *h as i32 {
                                    Some(ny as u16 * w + nx as u16)
                                } else {
                                    None
                                }
                            }
                            SpaceKind::Graph { .. } => None, // graphs use MoveTo
                        };
                        if let Some(t) = target {
                            if !self.space.is_blocked(t) {
                                s.pos = Pos::Cell(t);
                            }
                        }
                    }
                    Pos::Chain(a, k) => {
                        // chains only march forward
                        s.pos = Pos::Chain(a, (k + 1).min(self.chain_cap));
                    }
                },
                Effect::MoveTo(t) => s.pos = Pos::Cell(*t),
                Effect::ChainEnter { anchor } => s.pos = Pos::Chain(*anchor, 1),
                Effect::SetInternal(y) => s.y = *y,
                Effect::AddInternal(d) => s.y = (s.y as i16 + *d as i16).max(0) as u8,
            }
        }
        self.cap_chain(s)
    }

    /// Per-agent transition kernel P_i(s'_i | s_i, a_i).
    pub fn agent_step(&self, agent: usize, s: AgentState, a: ActionId) -> Dist<AgentState> {
        self.class_agent_step(self.class_of(agent), s, a)
    }

    fn class_agent_step(&self, class: usize, s: AgentState, a: ActionId) -> Dist<AgentState> {
        let choices = self.class_choices(class, s);
        let choice = &choices[a as usize];
        let mut out: Dist<AgentState> = SmallVec::new();
        for (effects, p) in &choice.branches {
            let next = self.apply_effects(s, effects);
            match out.iter_mut().find(|(t, _)| *t == next) {
                Some((_, q)) => *q += p,
                None => out.push((next, *p)),
            }
        }
        out
    }

    /// Joint transition of a dependence group. In standard mode this is the
    /// product of per-agent kernels; the generalized collision kernel blocks
    /// moves into cells occupied by other group members.
    pub fn group_step(
        &self,
        members: &[usize],
        states: &[AgentState],
        actions: &[ActionId],
    ) -> Vec<(Vec<AgentState>, f64)> {
        let per_agent: Vec<Dist<AgentState>> = members
            .iter()
            .zip(states.iter().zip(actions.iter()))
            .map(|(&i, (&s, &a))| self.agent_step(i, s, a))
            .collect();
        let mut out: Vec<(Vec<AgentState>, f64)> = vec![(Vec::new(), 1.0)];
        for dist in &per_agent {
            let mut next = Vec::with_capacity(out.len() * dist.len());
            for (prefix, p) in &out {
                for (s, q) in dist {
                    let mut v = prefix.clone();
                    v.push(*s);
                    next.push((v, p * q));
                }
            }
            out = next;
        }
        if self.spec.mode == Mode::Generalized {
            if let Some(GroupKernel::CollisionBlock) = self.spec.group_kernel {
                // block moves into cells currently held by other members
                let occupied: Vec<Option<u16>> = states.iter().map(|s| s.pos.cell()).collect();
                let mut merged: Vec<(Vec<AgentState>, f64)> = Vec::new();
                for (mut succ, p) in out {
                    for (k, s) in succ.iter_mut().enumerate() {
                        if let Pos::Cell(c) = s.pos {
                            let blocked = occupied
                                .iter()
                                .enumerate()
                                .any(|(m, &o)| m != k && o == Some(c) && o != states[k].pos.cell());
                            if blocked {
                                s.pos = states[k].pos;
                            }
                        }
                    }
                    match merged.iter_mut().find(|(t, _)| *t == succ) {
                        Some((_, q)) => *q += p,
                        None => merged.push((succ, p)),
                    }
                }
                return merged;
            }
        }
        out
    }

    /// r̄_{i,j}(s_i, a_i, s_j, a_j) for i != j. Standard mode enforces
    /// locality: zero beyond the dependence radius.
    pub fn pair_reward(
        &self,
        i: usize,
        s_i: AgentState,
        a_i: ActionId,
        j: usize,
        s_j: AgentState,
        a_j: ActionId,
    ) -> f64 {
        if self.is_inert(i, s_i) || self.is_inert(j, s_j) {
            return 0.0;
        }
        let d = self.space.distance(s_i.pos, s_j.pos);
        if self.spec.mode == Mode::Standard && d > self.spec.constants.r {
            return 0.0;
        }
        let mut total = 0.0;
        for rule in &self.spec.pair_rewards {
            if let Some(ref f) = rule.i_agents {
                if !f.contains(&i) {
                    continue;
                }
            }
            if let Some(ref f) = rule.j_agents {
                if !f.contains(&j) {
                    continue;
                }
            }
            if d > rule.max_dist {
                continue;
            }
            if rule.same_internal && s_i.y != s_j.y {
                continue;
            }
            if rule.when_i.matches(s_i, Some(a_i)) && rule.when_j.matches(s_j, Some(a_j)) {
                total += rule.value;
            }
        }
        total
    }

    /// r̄_{i,i}: single-agent rewards folded into the pairwise machinery.
    pub fn self_reward(&self, i: usize, s: AgentState, a: ActionId) -> f64 {
        let mut total = 0.0;
        for rule in &self.spec.self_rewards {
            if let Some(ref f) = rule.agents {
                if !f.contains(&i) {
                    continue;
                }
            }
            if rule.when.matches(s, Some(a)) {
                total += rule.value;
            }
        }
        total
    }

    /// Group reward r_g = Σ_{i,j∈g} r̄_{i,j} (including self terms).
    pub fn group_reward(&self, members: &[usize], states: &[AgentState], actions: &[ActionId]) -> f64 {
        let mut total = 0.0;
        for (ai, (&i, (&s_i, &a_i))) in
            members.iter().zip(states.iter().zip(actions.iter())).enumerate()
        {
            total += self.self_reward(i, s_i, a_i);
            for (aj, (&j, (&s_j, &a_j))) in
                members.iter().zip(states.iter().zip(actions.iter())).enumerate()
            {
                if ai != aj {
                    total += self.pair_reward(i, s_i, a_i, j, s_j, a_j);
                }
            }
        }
        total
    }

    /// r(s, a) = Σ_{g∈D(s)} r_g(s_g, a_g).
    pub fn joint_reward(&self, s: &JointState, a: &[ActionId]) -> f64 {
        let d = self.dependence_partition(s);
        let mut total = 0.0;
        for g in &d.blocks {
            let states: Vec<AgentState> = g.iter().map(|&i| s[i]).collect();
            let actions: Vec<ActionId> = g.iter().map(|&i| a[i]).collect();
            total += self.group_reward(g, &states, &actions);
        }
        total
    }

    /// Reward of a partition block, r_p = Σ_{g ∈ D(s_p)} r_g.
    pub fn block_reward(&self, members: &[usize], states: &[AgentState], actions: &[ActionId]) -> f64 {
        let positions: Vec<Pos> = states.iter().map(|s| s.pos).collect();
        let d = proximity_partition_of(&self.space, members, &positions, self.spec.constants.r)
            .expect("valid positions");
        let mut total = 0.0;
        for g in &d.blocks {
            let sub_states: Vec<AgentState> = g
                .iter()
                .map(|&i| states[members.iter().position(|&m| m == i).unwrap()])
                .collect();
            let sub_actions: Vec<ActionId> = g
                .iter()
                .map(|&i| actions[members.iter().position(|&m| m == i).unwrap()])
                .collect();
            total += self.group_reward(g, &sub_states, &sub_actions);
        }
        total
    }

    pub fn dependence_partition(&self, s: &JointState) -> Partition {
        let agents: Vec<usize> = (0..self.n()).collect();
        let positions: Vec<Pos> = s.iter().map(|x| x.pos).collect();
        proximity_partition_of(&self.space, &agents, &positions, self.spec.constants.r)
            .expect("valid positions")
    }

    pub fn communication_partition(&self, s: &JointState, v: f64) -> Result<Partition, LocimError> {
        if v <= self.spec.constants.r {
            return Err(LocimError::InvalidConfig(format!(
                "communication radius {v} must exceed dependence radius {}",
                self.spec.constants.r
            )));
        }
        let agents: Vec<usize> = (0..self.n()).collect();
        let positions: Vec<Pos> = s.iter().map(|x| x.pos).collect();
        proximity_partition_of(&self.space, &agents, &positions, v)
    }

    /// Partition of `members` by chain connectivity at radius `v` within the
    /// group state.
    pub fn partition_of_members(&self, members: &[usize], states: &[AgentState], v: f64) -> Partition {
        let positions: Vec<Pos> = states.iter().map(|s| s.pos).collect();
        proximity_partition_of(&self.space, members, &positions, v).expect("valid positions")
    }

    /// Sample a joint successor.
    pub fn joint_transition_sample(
        &self,
        s: &JointState,
        a: &[ActionId],
        rng: &mut impl rand::Rng,
    ) -> JointState {
        let mut next = vec![AgentState::new(Pos::Cell(0), 0); self.n()];
        let d = self.dependence_partition(s);
        for g in &d.blocks {
            let states: Vec<AgentState> = g.iter().map(|&i| s[i]).collect();
            let actions: Vec<ActionId> = g.iter().map(|&i| a[i]).collect();
            let dist = self.group_step(g, &states, &actions);
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let mut chosen = &dist[dist.len() - 1].0;
            for (succ, p) in &dist {
                acc += p;
                if u <= acc {
                    chosen = succ;
                    break;
                }
            }
            for (k, &i) in g.iter().enumerate() {
                next[i] = chosen[k];
            }
        }
        next
    }

    /// Enumerate the exact joint successor distribution.
    pub fn joint_transition_dist(&self, s: &JointState, a: &[ActionId]) -> Vec<(JointState, f64)> {
        let d = self.dependence_partition(s);
        let mut out: Vec<(JointState, f64)> =
            vec![(vec![AgentState::new(Pos::Cell(0), 0); self.n()], 1.0)];
        for g in &d.blocks {
            let states: Vec<AgentState> = g.iter().map(|&i| s[i]).collect();
            let actions: Vec<ActionId> = g.iter().map(|&i| a[i]).collect();
            let dist = self.group_step(g, &states, &actions);
            let mut next = Vec::with_capacity(out.len() * dist.len());
            for (joint, p) in &out {
                for (succ, q) in &dist {
                    let mut j2 = joint.clone();
                    for (k, &i) in g.iter().enumerate() {
                        j2[i] = succ[k];
                    }
                    next.push((j2, p * q));
                }
            }
            out = next;
        }
        out
    }

    fn enumerate_class_states(&mut self) -> Result<(), LocimError> {
        let n_classes = self.spec.classes.len();
        self.class_states = vec![Vec::new(); n_classes];
        self.class_state_idx = vec![HashMap::new(); n_classes];
        for class in 0..n_classes {
            let seeds: Vec<AgentState> = self
                .spec
                .agents
                .iter()
                .filter(|(c, _)| *c == class)
                .map(|&(_, s)| s)
                .collect();
            let mut frontier: Vec<AgentState> = seeds;
            let mut seen: Vec<AgentState> = Vec::new();
            let mut seen_set = std::collections::HashSet::new();
            while let Some(s) = frontier.pop() {
                let s = self.cap_chain(s);
                if !seen_set.insert(s) {
                    continue;
                }
                seen.push(s);
                let n_act = self.class_choices(class, s).len();
                for a in 0..n_act {
                    for (t, _) in self.class_agent_step(class, s, a as ActionId) {
                        if !seen_set.contains(&t) {
                            frontier.push(t);
                        }
                        // generalized collision blocking can keep an agent in
                        // place mid-move; the current state is already seen
                    }
                }
                if seen.len() > 2_000_000 {
                    return Err(LocimError::BudgetExceeded {
                        what: format!("per-agent state closure for class {class}"),
                        count: seen.len(),
                    });
                }
            }
            seen.sort_unstable();
            for (i, s) in seen.iter().enumerate() {
                self.class_state_idx[class].insert(*s, i as u16);
            }
            self.class_states[class] = seen;
        }
        Ok(())
    }

    fn compute_r_tilde(&mut self) {
        let n = self.n();
        let mut table = vec![0.0f64; n * n];
        for i in 0..n {
            let ci = self.class_of(i);
            for &s_i in &self.class_states[ci] {
                for a_i in 0..self.n_actions(i, s_i) {
                    let v = self.self_reward(i, s_i, a_i as ActionId).abs();
                    if v > table[i * n + i] {
                        table[i * n + i] = v;
                    }
                }
            }
            for j in 0..n {
                if i == j {
                    continue;
                }
                let cj = self.class_of(j);
                let mut best = 0.0f64;
                for &s_i in &self.class_states[ci] {
                    for &s_j in &self.class_states[cj] {
                        for a_i in 0..self.n_actions(i, s_i) {
                            for a_j in 0..self.n_actions(j, s_j) {
                                let v = self
                                    .pair_reward(i, s_i, a_i as ActionId, j, s_j, a_j as ActionId)
                                    .abs();
                                if v > best {
                                    best = v;
                                }
                            }
                        }
                    }
                }
                table[i * n + j] = best;
            }
        }
        self.r_tilde_pair = table;
    }

    /// r̃ = Σ_{i,j} max |r̄_{i,j}|: the per-step reward magnitude bound.
    pub fn r_tilde(&self) -> f64 {
        self.r_tilde_pair.iter().sum()
    }

    /// r̃ restricted to ordered pairs within one agent subset.
    pub fn r_tilde_of(&self, agents: &[usize]) -> f64 {
        let n = self.n();
        let mut total = 0.0;
        for &i in agents {
            for &j in agents {
                total += self.r_tilde_pair[i * n + j];
            }
        }
        total
    }

    /// r̃ over pairs that share a block of the partition.
    pub fn r_tilde_partition(&self, p: &Partition) -> f64 {
        p.blocks.iter().map(|b| self.r_tilde_of(b)).sum()
    }

    /// r̃ over pairs split across blocks of the partition.
    pub fn r_tilde_partition_complement(&self, p: &Partition) -> f64 {
        self.r_tilde() - self.r_tilde_partition(p)
    }

    /// Structural validity checks; an empty report means valid.
    pub fn validate(&self) -> Vec<String> {
        let mut report = Vec::new();
        let n = self.n();
        // kernel normalization and unit speed over all reachable states
        for i in 0..n {
            let class = self.class_of(i);
            for &s in &self.class_states[class] {
                for a in 0..self.n_actions(i, s) {
                    let dist = self.agent_step(i, s, a as ActionId);
                    let total: f64 = dist.iter().map(|(_, p)| p).sum();
                    if (total - 1.0).abs() > 1e-9 {
                        report.push(format!(
                            "kernel row for agent {i} at {s:?} action {a} sums to {total}"
                        ));
                    }
                    for (t, _) in &dist {
                        let d = self.space.distance(s.pos, t.pos);
                        // a capped chain walker legitimately stands still
                        let capped = matches!(t.pos, Pos::Chain(_, k) if k == self.chain_cap);
                        if d > 1.0 + 1e-9 && !capped {
                            report.push(format!(
                                "unit-speed violation: agent {i} moves {d} from {s:?} to {t:?}"
                            ));
                        }
                    }
                }
            }
        }
        // standard-mode locality: every pair rule must stay within R
        if self.spec.mode == Mode::Standard {
            for (k, rule) in self.spec.pair_rewards.iter().enumerate() {
                if rule.max_dist > self.spec.constants.r {
                    report.push(format!(
                        "pair rule {k} fires at distance {} beyond dependence radius {}",
                        rule.max_dist, self.spec.constants.r
                    ));
                }
            }
        }
        if !(self.spec.constants.v_exec > self.spec.constants.r) {
            report.push("visibility must exceed dependence radius".into());
        }
        report
    }
}

#[cfg(test)]
pub mod tests_support {
    use super::*;
    use crate::geometry::SpaceKind;

    /// Two agents on a 5-cell line: +200 at cell 0, +50 at cell 4, -500 for
    /// overlapping (per ordered pair), free movement.
    pub fn penalty_line_spec() -> EnvSpec {
        let free_moves = DynRule {
            when: AgentMatcher::any(),
            choices: vec![
                ActionChoice::det("stay", vec![Effect::Stay]),
                ActionChoice::det("west", vec![Effect::MoveDelta { dx: -1, dy: 0 }]),
                ActionChoice::det("east", vec![Effect::MoveDelta { dx: 1, dy: 0 }]),
            ],
        };
        EnvSpec {
            name: "penalty_line".into(),
            metric: SpaceKind::Line { len: 5 },
            constants: ModelConstants { r: 0.0, v_exec: 1.0, gamma: 0.9 },
            mode: Mode::Standard,
            classes: vec![AgentClass {
                name: "walker".into(),
                rules: vec![free_moves],
                inert_internals: vec![],
                internal_count: 1,
            }],
            agents: vec![
                (0, AgentState::new(Pos::Cell(0), 0)),
                (0, AgentState::new(Pos::Cell(2), 0)),
            ],
            self_rewards: vec![
                SelfRule {
                    agents: None,
                    when: AgentMatcher { pos: Some(vec![0]), ..Default::default() },
                    value: 200.0,
                },
                SelfRule {
                    agents: None,
                    when: AgentMatcher { pos: Some(vec![4]), ..Default::default() },
                    value: 50.0,
                },
            ],
            pair_rewards: vec![PairRule {
                i_agents: None,
                j_agents: None,
                when_i: AgentMatcher::any(),
                when_j: AgentMatcher::any(),
                max_dist: 0.0,
                same_internal: false,
                value: -500.0,
            }],
            group_kernel: None,
            homogeneous: true,
            translation_invariant: false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::tests_support::penalty_line_spec;
    use super::*;

    #[test]
    fn overlap_reward_example() {
        let m = Model::compile(penalty_line_spec()).unwrap();
        // both agents on the leftmost square: 200+200-500-500 = -600
        let s = vec![AgentState::new(Pos::Cell(0), 0), AgentState::new(Pos::Cell(0), 0)];
        assert_eq!(m.joint_reward(&s, &[0, 0]), -600.0);
    }

    #[test]
    fn locality_zeroes_distant_pairs() {
        let m = Model::compile(penalty_line_spec()).unwrap();
        let s = vec![AgentState::new(Pos::Cell(0), 0), AgentState::new(Pos::Cell(4), 0)];
        assert_eq!(m.joint_reward(&s, &[0, 0]), 250.0); // 200 + 50, no pair term
    }

    #[test]
    fn r_tilde_enumeration() {
        let m = Model::compile(penalty_line_spec()).unwrap();
        // 200 + 200 + 500 + 500
        assert_eq!(m.r_tilde(), 1400.0);
    }

    #[test]
    fn unit_speed_holds_on_samples() {
        let m = Model::compile(penalty_line_spec()).unwrap();
        let mut rng = rand::rngs::mock::StepRng::new(0, 0x9E3779B97F4A7C15);
        let mut s = m.initial();
        for _ in 0..50 {
            let a = vec![2u8, 1u8];
            let next = m.joint_transition_sample(&s, &a, &mut rng);
            for i in 0..2 {
                assert!(m.space.distance(s[i].pos, next[i].pos) <= 1.0);
            }
            s = next;
        }
    }

    #[test]
    fn validation_flags_bad_kernel() {
        let mut spec = penalty_line_spec();
        spec.classes[0].rules[0].choices[0] =
            ActionChoice { name: "bad".into(), branches: vec![(vec![Effect::Stay], 0.9)] };
        let m = Model::compile(spec).unwrap();
        let report = m.validate();
        assert!(report.iter().any(|r| r.contains("sums to 0.9")));
    }

    #[test]
    fn validation_flags_locality_violation() {
        let mut spec = penalty_line_spec();
        spec.pair_rewards[0].max_dist = 1.0; // beyond R = 0 in standard mode
        let m = Model::compile(spec).unwrap();
        let report = m.validate();
        assert!(report.iter().any(|r| r.contains("beyond dependence radius")));
    }

    #[test]
    fn well_formed_spec_validates() {
        let m = Model::compile(penalty_line_spec()).unwrap();
        assert!(m.validate().is_empty());
    }

    #[test]
    fn dependence_and_communication_partitions() {
        let m = Model::compile(penalty_line_spec()).unwrap();
        let s = m.initial(); // cells 0 and 2, R=0, V=1
        assert_eq!(m.dependence_partition(&s), Partition::singletons(2));
        assert_eq!(m.communication_partition(&s, 1.0).unwrap(), Partition::singletons(2));
        assert_eq!(
            m.communication_partition(&s, 2.0).unwrap(),
            Partition::one_block(&[0, 1])
        );
        assert!(m.communication_partition(&s, 0.0).is_err());
    }

    #[test]
    fn spec_roundtrips_through_json() {
        let spec = penalty_line_spec();
        let json = serde_json::to_string(&spec).unwrap();
        let back: EnvSpec = serde_json::from_str(&json).unwrap();
        let m = Model::compile(back).unwrap();
        assert_eq!(m.n(), 2);
    }
}
