//! The cutoff multi-agent MDP and its finite-horizon solution via backward
//! induction on group states. Disconnected groups never reconnect, so values
//! decompose across partition blocks and only chain-connected group states
//! need to be stored.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;
use std::collections::HashMap;
use std::hash::{BuildHasherDefault, Hasher};
use std::io::{Read, Write};

use crate::geometry::{Partition, Pos};
use crate::model::{ActionId, AgentState, JointState, Mode, Model};
use crate::LocimError;

/// floor((V - R) / 2): steps before out-of-view agents can influence rewards.
pub fn c_of(v: f64, r: f64) -> Result<usize, LocimError> {
    if v <= r {
        return Err(LocimError::InvalidConfig(format!(
            "c_of requires V ({v}) > R ({r})"
        )));
    }
    Ok(((v - r) / 2.0).floor() as usize)
}

/// Fx-style hasher; group keys are short u32 sequences and the std hasher
/// dominates the solve time otherwise.
#[derive(Default)]
pub struct FxHasher {
    hash: u64,
}

impl Hasher for FxHasher {
    fn finish(&self) -> u64 {
        self.hash
    }
    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.hash =
                (self.hash.rotate_left(5) ^ b as u64).wrapping_mul(0x51_7c_c1_b7_27_22_0a_95);
        }
    }
    fn write_u32(&mut self, v: u32) {
        self.hash = (self.hash.rotate_left(5) ^ v as u64).wrapping_mul(0x51_7c_c1_b7_27_22_0a_95);
    }
    fn write_u64(&mut self, v: u64) {
        self.write_u32(v as u32);
        self.write_u32((v >> 32) as u32);
    }
    fn write_usize(&mut self, v: usize) {
        self.write_u64(v as u64);
    }
}

pub type FxBuildHasher = BuildHasherDefault<FxHasher>;
pub type FxHashMap<K, V> = HashMap<K, V, FxBuildHasher>;

/// Canonical encoding of a group state (s_p, {p}).
/// Identity sharing packs (agent index, state index) pairs sorted by agent;
/// homogeneous sharing packs (class, state index) pairs sorted by value so
/// identical agents share entries.
#[derive(Clone, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
pub struct GroupKey(pub SmallVec<[u32; 4]>);

impl GroupKey {
    pub fn len(&self) -> usize {
        self.0.len()
    }
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sharing {
    /// Keys carry agent identities.
    Identity,
    /// Agents of one class are interchangeable; keys drop identities and may
    /// translate the group to a canonical anchor.
    Homogeneous { translate: bool },
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SolverConfig {
    pub v_comp: f64,
    /// H = c + eta.
    pub horizon: usize,
    pub max_group: usize,
    pub sharing: Sharing,
}

impl SolverConfig {
    pub fn identity(v_comp: f64, horizon: usize, max_group: usize) -> Self {
        Self { v_comp, horizon, max_group, sharing: Sharing::Identity }
    }
}

/// Canonicalize a translation-invariant group by shifting the minimum
/// coordinate to zero. Only valid for cell positions on lines/grids.
fn translate_group(model: &Model, states: &mut [AgentState]) {
    use crate::geometry::SpaceKind;
    let w = match &model.space.kind {
        SpaceKind::Line { .. } => 0,
        SpaceKind::Grid { w, .. } => *w,
        SpaceKind::Graph { .. } => return,
    };
    let mut minx = u16::MAX;
    let mut miny = u16::MAX;
    for s in states.iter() {
        if let Pos::Cell(c) = s.pos {
            let (x, y) = if w == 0 { (c, 0) } else { (c % w, c / w) };
            minx = minx.min(x);
            miny = miny.min(y);
        } else {
            return; // chains are not translatable
        }
    }
    for s in states.iter_mut() {
        if let Pos::Cell(c) = s.pos {
            let (x, y) = if w == 0 { (c, 0) } else { (c % w, c / w) };
            s.pos = Pos::Cell(if w == 0 { x - minx } else { (y - miny) * w + (x - minx) });
        }
    }
}

/// Canonical key for a group of agents in the given states.
/// `members` must be sorted ascending.
pub fn group_key(
    model: &Model,
    sharing: Sharing,
    members: &[usize],
    states: &[AgentState],
) -> Result<GroupKey, LocimError> {
    debug_assert!(members.windows(2).all(|w| w[0] < w[1]));
    match sharing {
        Sharing::Identity => {
            let mut v: SmallVec<[u32; 4]> = SmallVec::with_capacity(members.len());
            for (&m, &s) in members.iter().zip(states) {
                let idx = model.state_index(model.class_of(m), s).ok_or_else(|| {
                    LocimError::Internal(format!("state {s:?} not enumerated for agent {m}"))
                })?;
                v.push(((m as u32) << 16) | idx as u32);
            }
            Ok(GroupKey(v))
        }
        Sharing::Homogeneous { translate } => {
            if !model.spec.homogeneous {
                return Err(LocimError::InvalidConfig(
                    "homogeneous sharing requested for a non-homogeneous model".into(),
                ));
            }
            if translate && !model.spec.translation_invariant {
                return Err(LocimError::InvalidConfig(
                    "translation sharing requested for a non-translation-invariant model".into(),
                ));
            }
            let mut st: Vec<AgentState> = states.to_vec();
            if translate {
                translate_group(model, &mut st);
            }
            let mut v: SmallVec<[u32; 4]> = SmallVec::with_capacity(members.len());
            for (&m, &s) in members.iter().zip(st.iter()) {
                let class = model.class_of(m);
                let idx = model.state_index(class, s).ok_or_else(|| {
                    LocimError::Internal(format!("state {s:?} not enumerated for class {class}"))
                })?;
                v.push(((class as u32) << 16) | idx as u32);
            }
            v.sort_unstable();
            Ok(GroupKey(v))
        }
    }
}

/// Decode an identity key back to (members, states).
pub fn decode_identity_key(model: &Model, key: &GroupKey) -> (Vec<usize>, Vec<AgentState>) {
    let mut members = Vec::with_capacity(key.len());
    let mut states = Vec::with_capacity(key.len());
    for &packed in &key.0 {
        let agent = (packed >> 16) as usize;
        let idx = (packed & 0xFFFF) as u16;
        members.push(agent);
        states.push(model.state_by_index(model.class_of(agent), idx));
    }
    (members, states)
}

fn decode_key(model: &Model, sharing: Sharing, key: &GroupKey) -> (Vec<usize>, Vec<AgentState>) {
    match sharing {
        Sharing::Identity => decode_identity_key(model, key),
        Sharing::Homogeneous { .. } => {
            // representative members: first agents of each class, ascending
            let mut members = Vec::with_capacity(key.len());
            let mut states = Vec::with_capacity(key.len());
            let mut used = vec![false; model.n()];
            for &packed in &key.0 {
                let class = (packed >> 16) as usize;
                let idx = (packed & 0xFFFF) as u16;
                let rep = (0..model.n())
                    .find(|&i| !used[i] && model.class_of(i) == class)
                    .expect("class has enough agents");
                used[rep] = true;
                members.push(rep);
                states.push(model.state_by_index(class, idx));
            }
            let mut paired: Vec<(usize, AgentState)> =
                members.iter().copied().zip(states).collect();
            paired.sort_by_key(|&(m, _)| m);
            (
                paired.iter().map(|&(m, _)| m).collect(),
                paired.into_iter().map(|(_, s)| s).collect(),
            )
        }
    }
}

/// Solved value and policy tables over canonical group states.
pub struct SolvedTables {
    pub config: SolverConfig,
    pub c: usize,
    pub keys: Vec<GroupKey>,
    pub index: FxHashMap<GroupKey, u32>,
    /// values[h][dense index]; h in 0..=horizon.
    pub values: Vec<Vec<f64>>,
    /// argmax joint action per (h, dense index), member order = key order.
    pub actions: Vec<Vec<SmallVec<[ActionId; 4]>>>,
}

/// Partition member slots 0..n by chain connectivity at radius `v`.
pub(crate) fn connectivity_blocks(
    model: &Model,
    states: &[AgentState],
    v: f64,
) -> SmallVec<[SmallVec<[u8; 4]>; 4]> {
    let n = states.len();
    let mut parent: SmallVec<[u8; 8]> = (0..n as u8).collect();
    fn find(parent: &mut SmallVec<[u8; 8]>, x: u8) -> u8 {
        let mut r = x;
        while parent[r as usize] != r {
            r = parent[r as usize];
        }
        let mut c = x;
        while parent[c as usize] != r {
            let nx = parent[c as usize];
            parent[c as usize] = r;
            c = nx;
        }
        r
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if model.space.distance(states[i].pos, states[j].pos) <= v {
                let (ri, rj) = (find(&mut parent, i as u8), find(&mut parent, j as u8));
                if ri != rj {
                    parent[ri as usize] = rj;
                }
            }
        }
    }
    let mut blocks: SmallVec<[SmallVec<[u8; 4]>; 4]> = SmallVec::new();
    let mut root_block: SmallVec<[u8; 8]> = SmallVec::from_elem(u8::MAX, n);
    for i in 0..n {
        let r = find(&mut parent, i as u8);
        if root_block[r as usize] == u8::MAX {
            root_block[r as usize] = blocks.len() as u8;
            blocks.push(SmallVec::new());
        }
        blocks[root_block[r as usize] as usize].push(i as u8);
    }
    blocks
}

/// Enumerate all chain-connected group states of size <= max_group over the
/// model's reachable per-agent states. Small environments only; the closure
/// is transition-complete because per-agent state sets are.
pub fn enumerate_group_states(
    model: &Model,
    config: &SolverConfig,
) -> Result<Vec<GroupKey>, LocimError> {
    let budget = crate::state_budget();
    let mut keys: Vec<GroupKey> = Vec::new();
    let mut seen: FxHashMap<GroupKey, ()> = FxHashMap::default();

    match config.sharing {
        Sharing::Identity => {
            let n = model.n();
            for subset in subsets_up_to(n, config.max_group) {
                let member_states: Vec<&[AgentState]> = subset
                    .iter()
                    .map(|&m| model.states_of_class(model.class_of(m)))
                    .collect();
                let mut cursor = vec![0usize; subset.len()];
                'outer: loop {
                    let states: Vec<AgentState> = cursor
                        .iter()
                        .zip(&member_states)
                        .map(|(&c, ss)| ss[c])
                        .collect();
                    if connectivity_blocks(model, &states, config.v_comp).len() == 1 {
                        let key = group_key(model, config.sharing, &subset, &states)?;
                        if seen.insert(key.clone(), ()).is_none() {
                            keys.push(key);
                            if keys.len() > budget {
                                return Err(LocimError::BudgetExceeded {
                                    what: "group-state enumeration".into(),
                                    count: keys.len(),
                                });
                            }
                        }
                    }
                    let mut k = 0;
                    loop {
                        cursor[k] += 1;
                        if cursor[k] < member_states[k].len() {
                            break;
                        }
                        cursor[k] = 0;
                        k += 1;
                        if k == cursor.len() {
                            break 'outer;
                        }
                    }
                }
            }
        }
        Sharing::Homogeneous { .. } => {
            // multisets over states of the (single) class
            let class = 0usize;
            let states = model.states_of_class(class);
            let m = states.len();
            let reps: Vec<usize> = (0..model.n().min(config.max_group)).collect();
            let mut stack: Vec<usize> = Vec::new();
            enumerate_multisets(m, config.max_group.min(model.n()), &mut stack, &mut |combo| {
                let group: Vec<AgentState> = combo.iter().map(|&i| states[i]).collect();
                if connectivity_blocks(model, &group, config.v_comp).len() == 1 {
                    let key = group_key(model, config.sharing, &reps[..combo.len()], &group)?;
                    if seen.insert(key.clone(), ()).is_none() {
                        keys.push(key);
                        if keys.len() > budget {
                            return Err(LocimError::BudgetExceeded {
                                what: "group-state enumeration".into(),
                                count: keys.len(),
                            });
                        }
                    }
                }
                Ok(())
            })?;
        }
    }
    Ok(keys)
}

fn subsets_up_to(n: usize, max: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for mask in 1u32..(1 << n) {
        if (mask.count_ones() as usize) <= max {
            out.push((0..n).filter(|&i| mask & (1 << i) != 0).collect());
        }
    }
    out
}

fn enumerate_multisets(
    m: usize,
    max_size: usize,
    stack: &mut Vec<usize>,
    f: &mut impl FnMut(&[usize]) -> Result<(), LocimError>,
) -> Result<(), LocimError> {
    if !stack.is_empty() {
        f(stack)?;
    }
    if stack.len() == max_size {
        return Ok(());
    }
    let start = stack.last().copied().unwrap_or(0);
    for i in start..m {
        stack.push(i);
        enumerate_multisets(m, max_size, stack, f)?;
        stack.pop();
    }
    Ok(())
}

struct BellmanCtx<'a> {
    model: &'a Model,
    config: SolverConfig,
    index: &'a FxHashMap<GroupKey, u32>,
}

impl<'a> BellmanCtx<'a> {
    /// One Bellman backup: max over joint group actions of the immediate
    /// block reward plus the discounted expected sum of successor block
    /// values. Joint actions advance lexicographically and the first
    /// maximizer wins, which fixes the tie-break.
    fn backup(
        &self,
        key: &GroupKey,
        next_layer: Option<&[f64]>,
    ) -> Result<(f64, SmallVec<[ActionId; 4]>), LocimError> {
        let (members, states) = decode_key(self.model, self.config.sharing, key);
        let gamma = self.model.consts().gamma;
        let k = members.len();
        let n_actions: SmallVec<[usize; 4]> = members
            .iter()
            .zip(&states)
            .map(|(&m, &s)| self.model.n_actions(m, s))
            .collect();
        let mut best = f64::NEG_INFINITY;
        let mut best_action: SmallVec<[ActionId; 4]> = SmallVec::new();
        let mut action: SmallVec<[ActionId; 4]> = SmallVec::from_elem(0, k);
        loop {
            let r = self.model.block_reward(&members, &states, &action);
            let mut q = r;
            if let Some(next) = next_layer {
                let succ = self.model.block_step_dist(&members, &states, &action);
                let mut exp = 0.0;
                for (succ_states, p) in &succ {
                    let blocks = connectivity_blocks(self.model, succ_states, self.config.v_comp);
                    for block in &blocks {
                        let bm: Vec<usize> = block.iter().map(|&i| members[i as usize]).collect();
                        let bs: Vec<AgentState> =
                            block.iter().map(|&i| succ_states[i as usize]).collect();
                        let bkey = group_key(self.model, self.config.sharing, &bm, &bs)?;
                        let idx = self.index.get(&bkey).ok_or_else(|| {
                            LocimError::Internal(format!(
                                "enumeration closure bug: successor {bkey:?} missing"
                            ))
                        })?;
                        exp += p * next[*idx as usize];
                    }
                }
                q += gamma * exp;
            }
            if q > best + 1e-12 {
                best = q;
                best_action = action.clone();
            }
            // advance to the next joint action (last slot fastest)
            let mut pos = k;
            loop {
                if pos == 0 {
                    return Ok((best, best_action));
                }
                pos -= 1;
                action[pos] += 1;
                if (action[pos] as usize) < n_actions[pos] {
                    break;
                }
                action[pos] = 0;
            }
        }
    }
}

/// Backward induction from h = H down to 0 over the enumerated group states.
pub fn solve_finite_horizon(model: &Model, config: SolverConfig) -> Result<SolvedTables, LocimError> {
    let r = model.consts().r;
    if config.v_comp <= r {
        return Err(LocimError::InvalidConfig(format!(
            "v_comp {} must exceed R {r}",
            config.v_comp
        )));
    }
    let keys = enumerate_group_states(model, &config)?;
    let mut index: FxHashMap<GroupKey, u32> = FxHashMap::default();
    index.reserve(keys.len());
    for (i, k) in keys.iter().enumerate() {
        index.insert(k.clone(), i as u32);
    }
    let ctx = BellmanCtx { model, config, index: &index };
    let h_max = config.horizon;
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); h_max + 1];
    let mut actions: Vec<Vec<SmallVec<[ActionId; 4]>>> = vec![Vec::new(); h_max + 1];
    let mut next: Option<Vec<f64>> = None;
    for h in (0..=h_max).rev() {
        let results: Result<Vec<(f64, SmallVec<[ActionId; 4]>)>, LocimError> = keys
            .par_iter()
            .map(|key| ctx.backup(key, next.as_deref()))
            .collect();
        let (vals, acts): (Vec<f64>, Vec<SmallVec<[ActionId; 4]>>) =
            results?.into_iter().unzip();
        next = Some(vals.clone());
        values[h] = vals;
        actions[h] = acts;
    }
    Ok(SolvedTables {
        config,
        c: c_of(model.consts().v_exec, r)?,
        keys,
        index,
        values,
        actions,
    })
}

impl SolvedTables {
    pub fn horizon(&self) -> usize {
        self.config.horizon
    }

    pub fn value_key(&self, key: &GroupKey, h: usize) -> Option<f64> {
        if h > self.config.horizon {
            return Some(0.0);
        }
        self.index.get(key).map(|&i| self.values[h][i as usize])
    }

    pub fn action_key(&self, key: &GroupKey, h: usize) -> Option<&[ActionId]> {
        self.index
            .get(key)
            .map(|&i| self.actions[h.min(self.config.horizon)][i as usize].as_slice())
    }

    /// Group-state value lookup for explicit members.
    pub fn value_group(
        &self,
        model: &Model,
        members: &[usize],
        states: &[AgentState],
        h: usize,
    ) -> Result<f64, LocimError> {
        if members.len() > self.config.max_group {
            return Err(LocimError::PartialValue(format!("{members:?}")));
        }
        let capped: Vec<AgentState> = states.iter().map(|&s| model.cap_chain(s)).collect();
        let key = group_key(model, self.config.sharing, members, &capped)?;
        self.value_key(&key, h)
            .ok_or_else(|| LocimError::Coverage { key: format!("{key:?}"), t: h })
    }

    /// V_h(s, P) = Σ_{p∈P} V_h(s_p, {p}); every block must be covered.
    pub fn value_of(
        &self,
        model: &Model,
        s: &JointState,
        p: &Partition,
        h: usize,
    ) -> Result<f64, LocimError> {
        let mut total = 0.0;
        for block in &p.blocks {
            let states: Vec<AgentState> = block.iter().map(|&i| s[i]).collect();
            total += self.value_group(model, block, &states, h)?;
        }
        Ok(total)
    }

    /// The argmax group action at a belief group state, resolved back onto
    /// the real agents. Homogeneous sharing assigns action slots through the
    /// canonical sort (ties broken by agent index).
    pub fn group_action(
        &self,
        model: &Model,
        members: &[usize],
        states: &[AgentState],
        h: usize,
    ) -> Result<Vec<(usize, ActionId)>, LocimError> {
        if members.len() > self.config.max_group {
            return Err(LocimError::PartialValue(format!("{members:?}")));
        }
        let capped: Vec<AgentState> = states.iter().map(|&s| model.cap_chain(s)).collect();
        let key = group_key(model, self.config.sharing, members, &capped)?;
        let action = self
            .action_key(&key, 0)
            .ok_or_else(|| LocimError::Coverage { key: format!("{key:?}"), t: h })?;
        match self.config.sharing {
            Sharing::Identity => Ok(members.iter().copied().zip(action.iter().copied()).collect()),
            Sharing::Homogeneous { translate } => {
                let mut st = capped.clone();
                if translate {
                    translate_group(model, &mut st);
                }
                let mut order: Vec<usize> = (0..members.len()).collect();
                let codes: Vec<u32> = members
                    .iter()
                    .zip(&st)
                    .map(|(&m, &s)| {
                        let class = model.class_of(m);
                        ((class as u32) << 16)
                            | model.state_index(class, s).expect("state enumerated") as u32
                    })
                    .collect();
                order.sort_by_key(|&i| (codes[i], members[i]));
                Ok(order
                    .iter()
                    .enumerate()
                    .map(|(slot, &i)| (members[i], action[slot]))
                    .collect())
            }
        }
    }
}

impl Model {
    /// Successor distribution of one partition block: dependence groups
    /// within the block evolve independently (products of per-agent kernels
    /// in standard mode; group kernels in generalized mode).
    pub fn block_step_dist(
        &self,
        members: &[usize],
        states: &[AgentState],
        actions: &[ActionId],
    ) -> Vec<(Vec<AgentState>, f64)> {
        if self.mode() == Mode::Standard {
            return self.group_step(members, states, actions);
        }
        let r = self.consts().r;
        let blocks = connectivity_blocks(self, states, r);
        let mut out: Vec<(Vec<AgentState>, f64)> = vec![(states.to_vec(), 1.0)];
        for block in &blocks {
            let bm: Vec<usize> = block.iter().map(|&i| members[i as usize]).collect();
            let bs: Vec<AgentState> = block.iter().map(|&i| states[i as usize]).collect();
            let ba: Vec<ActionId> = block.iter().map(|&i| actions[i as usize]).collect();
            let dist = self.group_step(&bm, &bs, &ba);
            let mut next = Vec::with_capacity(out.len() * dist.len());
            for (joint, p) in &out {
                for (succ, q) in &dist {
                    let mut j2 = joint.clone();
                    for (slot, &i) in block.iter().enumerate() {
                        j2[i as usize] = succ[slot];
                    }
                    next.push((j2, p * q));
                }
            }
            out = next;
        }
        out
    }
}

/// Specialized backward induction for homogeneous deterministic models with
/// action-independent pairwise rewards (the swarm room model): per-agent
/// kernels, rewards, and distances are compiled to dense tables first.
pub fn solve_homogeneous_fast(
    model: &Model,
    config: SolverConfig,
) -> Result<SolvedTables, LocimError> {
    let Sharing::Homogeneous { .. } = config.sharing else {
        return Err(LocimError::InvalidConfig("fast solver requires homogeneous sharing".into()));
    };
    if model.mode() != Mode::Standard {
        return Err(LocimError::InvalidConfig("fast solver requires standard mode".into()));
    }
    let class = 0usize;
    let states = model.states_of_class(class);
    let ns = states.len();
    // deterministic kernels only
    let mut n_actions = vec![0u8; ns];
    let mut succ: Vec<SmallVec<[u16; 5]>> = vec![SmallVec::new(); ns];
    let mut self_r: Vec<SmallVec<[f64; 5]>> = vec![SmallVec::new(); ns];
    for (i, &s) in states.iter().enumerate() {
        let k = model.n_actions(0, s);
        n_actions[i] = k as u8;
        for a in 0..k {
            let dist = model.agent_step(0, s, a as ActionId);
            if dist.len() != 1 {
                return Err(LocimError::InvalidConfig(
                    "fast solver requires deterministic kernels".into(),
                ));
            }
            succ[i].push(model.state_index(class, dist[0].0).ok_or_else(|| {
                LocimError::Internal("successor outside the enumerated class states".into())
            })?);
            self_r[i].push(model.self_reward(0, s, a as ActionId));
        }
    }
    // pairwise reward and connectivity matrices (action-independent)
    for rule in &model.spec.pair_rewards {
        if rule.when_i.action.is_some() || rule.when_j.action.is_some() {
            return Err(LocimError::InvalidConfig(
                "fast solver requires action-independent pair rewards".into(),
            ));
        }
        if rule.i_agents.is_some() || rule.j_agents.is_some() {
            return Err(LocimError::InvalidConfig(
                "fast solver requires agent-symmetric pair rewards".into(),
            ));
        }
    }
    let mut pair_r = vec![0.0f64; ns * ns];
    let mut within_v = vec![false; ns * ns];
    for i in 0..ns {
        for j in 0..ns {
            pair_r[i * ns + j] = model.pair_reward(0, states[i], 0, 1, states[j], 0);
            within_v[i * ns + j] =
                model.space.distance(states[i].pos, states[j].pos) <= config.v_comp;
        }
    }
    let keys = enumerate_group_states(model, &config)?;
    let mut index: FxHashMap<GroupKey, u32> = FxHashMap::default();
    index.reserve(keys.len());
    for (i, k) in keys.iter().enumerate() {
        index.insert(k.clone(), i as u32);
    }
    let key_states: Vec<SmallVec<[u16; 4]>> = keys
        .iter()
        .map(|k| k.0.iter().map(|&p| (p & 0xFFFF) as u16).collect())
        .collect();
    let gamma = model.consts().gamma;
    let lookup = |sorted: &mut SmallVec<[u16; 4]>, index: &FxHashMap<GroupKey, u32>| -> u32 {
        sorted.sort_unstable();
        let key = GroupKey(sorted.iter().map(|&s| s as u32).collect());
        index[&key]
    };
    let h_max = config.horizon;
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); h_max + 1];
    let mut actions: Vec<Vec<SmallVec<[ActionId; 4]>>> = vec![Vec::new(); h_max + 1];
    let mut next: Option<Vec<f64>> = None;
    for h in (0..=h_max).rev() {
        let results: Vec<(f64, SmallVec<[ActionId; 4]>)> = key_states
            .par_iter()
            .map(|members| {
                let k = members.len();
                let mut action: SmallVec<[ActionId; 4]> = SmallVec::from_elem(0, k);
                let mut best = f64::NEG_INFINITY;
                let mut best_action = action.clone();
                loop {
                    // immediate block reward
                    let mut r = 0.0;
                    for (slot, &s) in members.iter().enumerate() {
                        r += self_r[s as usize][action[slot] as usize];
                        for &s2 in members.iter().skip(slot + 1) {
                            r += pair_r[s as usize * ns + s2 as usize]
                                + pair_r[s2 as usize * ns + s as usize];
                        }
                    }
                    let mut q = r;
                    if let Some(nv) = next.as_deref() {
                        let nxt: SmallVec<[u16; 4]> = members
                            .iter()
                            .zip(action.iter())
                            .map(|(&s, &a)| succ[s as usize][a as usize])
                            .collect();
                        // partition successor members by connectivity
                        let mut exp = 0.0;
                        match nxt.len() {
                            1 => {
                                let mut one: SmallVec<[u16; 4]> = SmallVec::new();
                                one.push(nxt[0]);
                                exp += nv[lookup(&mut one, &index) as usize];
                            }
                            2 => {
                                if within_v[nxt[0] as usize * ns + nxt[1] as usize] {
                                    let mut both = nxt.clone();
                                    exp += nv[lookup(&mut both, &index) as usize];
                                } else {
                                    for &s in &nxt {
                                        let mut one: SmallVec<[u16; 4]> = SmallVec::new();
                                        one.push(s);
                                        exp += nv[lookup(&mut one, &index) as usize];
                                    }
                                }
                            }
                            _ => {
                                let d01 = within_v[nxt[0] as usize * ns + nxt[1] as usize];
                                let d02 = within_v[nxt[0] as usize * ns + nxt[2] as usize];
                                let d12 = within_v[nxt[1] as usize * ns + nxt[2] as usize];
                                let together = (d01 as u8) + (d02 as u8) + (d12 as u8);
                                if together >= 2 {
                                    // chain-connected triple
                                    let mut all = nxt.clone();
                                    exp += nv[lookup(&mut all, &index) as usize];
                                } else if together == 0 {
                                    for &s in &nxt {
                                        let mut one: SmallVec<[u16; 4]> = SmallVec::new();
                                        one.push(s);
                                        exp += nv[lookup(&mut one, &index) as usize];
                                    }
                                } else {
                                    let (pair, single) = if d01 {
                                        ((nxt[0], nxt[1]), nxt[2])
                                    } else if d02 {
                                        ((nxt[0], nxt[2]), nxt[1])
                                    } else {
                                        ((nxt[1], nxt[2]), nxt[0])
                                    };
                                    let mut two: SmallVec<[u16; 4]> = SmallVec::new();
                                    two.push(pair.0);
                                    two.push(pair.1);
                                    exp += nv[lookup(&mut two, &index) as usize];
                                    let mut one: SmallVec<[u16; 4]> = SmallVec::new();
                                    one.push(single);
                                    exp += nv[lookup(&mut one, &index) as usize];
                                }
                            }
                        }
                        q += gamma * exp;
                    }
                    if q > best + 1e-12 {
                        best = q;
                        best_action = action.clone();
                    }
                    let mut pos = k;
                    loop {
                        if pos == 0 {
                            return (best, best_action);
                        }
                        pos -= 1;
                        action[pos] += 1;
                        if action[pos] < n_actions[members[pos] as usize] {
                            break;
                        }
                        action[pos] = 0;
                    }
                }
            })
            .collect();
        let (vals, acts): (Vec<f64>, Vec<SmallVec<[ActionId; 4]>>) = results.into_iter().unzip();
        next = Some(vals.clone());
        values[h] = vals;
        actions[h] = acts;
    }
    Ok(SolvedTables {
        config,
        c: c_of(model.consts().v_exec, model.consts().r)?,
        keys,
        index,
        values,
        actions,
    })
}

/// A cutoff-MDP state: a joint state plus a partition finer than the
/// communication partition.
#[derive(Clone, Debug, PartialEq)]
pub struct CutoffState {
    pub s: JointState,
    pub p: Partition,
}

/// Enumerate cutoff-MDP successors of (s, P) under a joint action: each
/// block evolves independently and splits along its own successor
/// communication partition. Blocks are closed systems, so the partition
/// update is computed within each block (members of one block never stay
/// grouped through agents of another), and disconnections are permanent.
pub fn cutoff_successors(
    model: &Model,
    v_comp: f64,
    cs: &CutoffState,
    a: &[ActionId],
) -> Result<Vec<(CutoffState, f64)>, LocimError> {
    let mut out: Vec<(JointState, f64)> = vec![(cs.s.clone(), 1.0)];
    for block in &cs.p.blocks {
        let states: Vec<AgentState> = block.iter().map(|&i| cs.s[i]).collect();
        let actions: Vec<ActionId> = block.iter().map(|&i| a[i]).collect();
        let dist = model.block_step_dist(block, &states, &actions);
        let mut next = Vec::with_capacity(out.len() * dist.len());
        for (joint, p) in &out {
            for (succ, q) in &dist {
                let mut j2 = joint.clone();
                for (slot, &i) in block.iter().enumerate() {
                    j2[i] = succ[slot];
                }
                next.push((j2, p * q));
            }
        }
        out = next;
    }
    let mut merged: Vec<(CutoffState, f64)> = Vec::new();
    for (s2, p) in out {
        let p2 = blockwise_split(model, v_comp, &s2, &cs.p)?;
        match merged.iter_mut().find(|(t, _)| t.s == s2 && t.p == p2) {
            Some((_, q)) => *q += p,
            None => merged.push((CutoffState { s: s2, p: p2 }, p)),
        }
    }
    Ok(merged)
}

/// Split each block of `p` along its own communication partition in state
/// `s`; the result refines `p`.
pub fn blockwise_split(
    model: &Model,
    v_comp: f64,
    s: &JointState,
    p: &Partition,
) -> Result<Partition, LocimError> {
    let mut blocks = Vec::new();
    for block in &p.blocks {
        let states: Vec<AgentState> = block.iter().map(|&i| s[i]).collect();
        let sub = model.partition_of_members(block, &states, v_comp);
        blocks.extend(sub.blocks);
    }
    Partition::new(blocks)
}

/// Cutoff reward r^C((s, P), a) = Σ_{p∈P} r_p.
pub fn cutoff_reward(model: &Model, cs: &CutoffState, a: &[ActionId]) -> f64 {
    cs.p.blocks
        .iter()
        .map(|block| {
            let states: Vec<AgentState> = block.iter().map(|&i| cs.s[i]).collect();
            let actions: Vec<ActionId> = block.iter().map(|&i| a[i]).collect();
            model.block_reward(block, &states, &actions)
        })
        .sum()
}

// ---------------------------------------------------------------------------
// artifact serialization

const ARTIFACT_MAGIC: &[u8; 8] = b"LOCIMTBL";
const TIEBREAK_VERSION: u32 = 1;

impl SolvedTables {
    /// Binary artifact: header (model hash, v_comp, H, gamma, tie-break
    /// version) followed by sorted (key, h, value, action) records.
    pub fn write_artifact(&self, model: &Model, w: &mut impl Write) -> Result<(), LocimError> {
        use sha2::{Digest, Sha256};
        let spec_json = serde_json::to_vec(&model.spec)?;
        let hash = Sha256::digest(&spec_json);
        w.write_all(ARTIFACT_MAGIC)?;
        w.write_all(&hash)?;
        w.write_all(&self.config.v_comp.to_le_bytes())?;
        w.write_all(&(self.config.horizon as u64).to_le_bytes())?;
        w.write_all(&model.consts().gamma.to_le_bytes())?;
        w.write_all(&TIEBREAK_VERSION.to_le_bytes())?;
        w.write_all(&(self.keys.len() as u64).to_le_bytes())?;
        let mut order: Vec<usize> = (0..self.keys.len()).collect();
        order.sort_by(|&a, &b| self.keys[a].0.cmp(&self.keys[b].0));
        for &i in &order {
            let key = &self.keys[i];
            w.write_all(&(key.0.len() as u32).to_le_bytes())?;
            for &p in &key.0 {
                w.write_all(&p.to_le_bytes())?;
            }
            for h in 0..=self.config.horizon {
                w.write_all(&self.values[h][i].to_le_bytes())?;
                let act = &self.actions[h][i];
                w.write_all(&(act.len() as u32).to_le_bytes())?;
                w.write_all(act)?;
            }
        }
        Ok(())
    }

    /// JSONL export for inspection: one record per (key, h).
    pub fn write_jsonl(&self, w: &mut impl Write) -> Result<(), LocimError> {
        for (i, key) in self.keys.iter().enumerate() {
            for h in 0..=self.config.horizon {
                let rec = serde_json::json!({
                    "key": key.0.as_slice(),
                    "h": h,
                    "value": self.values[h][i],
                    "action": self.actions[h][i].as_slice(),
                });
                writeln!(w, "{rec}")?;
            }
        }
        Ok(())
    }

    pub fn read_artifact_header(
        r: &mut impl Read,
    ) -> Result<(f64, u64, f64, u32, u64), LocimError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != ARTIFACT_MAGIC {
            return Err(LocimError::InvalidInput("not a locim table artifact".into()));
        }
        let mut hash = [0u8; 32];
        r.read_exact(&mut hash)?;
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let v_comp = f64::from_le_bytes(b8);
        r.read_exact(&mut b8)?;
        let horizon = u64::from_le_bytes(b8);
        r.read_exact(&mut b8)?;
        let gamma = f64::from_le_bytes(b8);
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let tb = u32::from_le_bytes(b4);
        r.read_exact(&mut b8)?;
        let count = u64::from_le_bytes(b8);
        Ok((v_comp, horizon, gamma, tb, count))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests_support::penalty_line_spec;
    use crate::model::Model;

    fn pj_model() -> Model {
        Model::compile(penalty_line_spec()).unwrap()
    }

    #[test]
    fn c_of_examples() {
        assert_eq!(c_of(2.0, 1.0).unwrap(), 0);
        assert_eq!(c_of(25.0, 20.0).unwrap(), 2);
        assert_eq!(c_of(7.0, 1.0).unwrap(), 3); // V = R + 2k -> k
        assert!(c_of(1.0, 1.0).is_err());
    }

    #[test]
    fn single_agent_discounted_chain_value() {
        let m = pj_model();
        let t = solve_finite_horizon(&m, SolverConfig::identity(1.0, 40, 2)).unwrap();
        // agent 1 alone at cell 2: two steps west, then 200 per step
        let v = t.value_group(&m, &[1], &[AgentState::new(Pos::Cell(2), 0)], 0).unwrap();
        let gamma: f64 = 0.9;
        let expect: f64 = (2..=40).map(|k| gamma.powi(k) * 200.0).sum();
        assert!((v - expect).abs() < 1e-9, "v={v} expect={expect}");
    }

    #[test]
    fn horizon_zero_is_max_immediate_reward() {
        let m = pj_model();
        let t = solve_finite_horizon(&m, SolverConfig::identity(1.0, 0, 2)).unwrap();
        let v = t.value_group(&m, &[0], &[AgentState::new(Pos::Cell(0), 0)], 0).unwrap();
        assert_eq!(v, 200.0);
    }

    #[test]
    fn pair_splits_when_separating_and_never_remerges() {
        let m = pj_model();
        let cs = CutoffState {
            s: vec![AgentState::new(Pos::Cell(0), 0), AgentState::new(Pos::Cell(1), 0)],
            p: Partition::one_block(&[0, 1]),
        };
        // agent 1 moves east: distance 2 > V_comp = 1 -> split
        let succ = cutoff_successors(&m, 1.0, &cs, &[0, 2]).unwrap();
        assert_eq!(succ.len(), 1);
        assert_eq!(succ[0].0.p, Partition::singletons(2));
        let back = cutoff_successors(&m, 1.0, &succ[0].0, &[0, 1]).unwrap();
        assert_eq!(back[0].0.p, Partition::singletons(2));
    }

    #[test]
    fn connected_pair_keeps_partition() {
        let m = pj_model();
        let cs = CutoffState {
            s: vec![AgentState::new(Pos::Cell(0), 0), AgentState::new(Pos::Cell(1), 0)],
            p: Partition::one_block(&[0, 1]),
        };
        let succ = cutoff_successors(&m, 2.0, &cs, &[0, 2]).unwrap();
        assert_eq!(succ[0].0.p, Partition::one_block(&[0, 1]));
    }

    #[test]
    fn artifact_header_roundtrip() {
        let m = pj_model();
        let t = solve_finite_horizon(&m, SolverConfig::identity(2.0, 3, 2)).unwrap();
        let mut buf = Vec::new();
        t.write_artifact(&m, &mut buf).unwrap();
        let (v_comp, horizon, gamma, tb, count) =
            SolvedTables::read_artifact_header(&mut buf.as_slice()).unwrap();
        assert_eq!(v_comp, 2.0);
        assert_eq!(horizon, 3);
        assert_eq!(gamma, 0.9);
        assert_eq!(tb, TIEBREAK_VERSION);
        assert_eq!(count as usize, t.keys.len());
    }
}

