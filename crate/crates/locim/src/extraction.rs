//! The extended cutoff policy class: converting a solved cutoff policy into
//! an executable group decentralized policy through an extraction method
//! (trivial, aggregate, or simple memory based).

use rand::Rng;
use std::collections::BTreeMap;

use crate::geometry::Partition;
use crate::model::{ActionId, AgentState, JointState, Model};
use crate::solver::SolvedTables;
use crate::LocimError;

/// Per-agent memory: estimates for other agents as (state, observation time).
pub type AgentMemory = BTreeMap<usize, (AgentState, usize)>;

#[derive(Clone, Debug, PartialEq)]
pub struct ExecutionState {
    pub memories: Vec<AgentMemory>,
    pub t: usize,
}

impl ExecutionState {
    pub fn new(n: usize) -> Self {
        Self { memories: vec![AgentMemory::new(); n], t: 0 }
    }

    /// Memory content keyed by age rather than absolute time; two execution
    /// states with equal ages behave identically forever, which is what
    /// cycle detection needs.
    pub fn age_normalized(&self) -> Vec<Vec<(usize, AgentState, usize)>> {
        self.memories
            .iter()
            .map(|m| {
                m.iter()
                    .map(|(&j, &(s, t0))| (j, s, self.t.saturating_sub(t0)))
                    .collect()
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlacementKind {
    /// Belief = observation; reduces aggregate extraction to trivial.
    Degenerate,
    /// Place one absent agent uniformly on states beyond execution
    /// visibility but within computation reach of the block.
    UniformPhantom,
}

#[derive(Clone, Debug)]
pub struct SmbeConfig {
    /// Swarm modification: clear memory when the belief group reaches this
    /// size.
    pub clear_threshold: Option<usize>,
    /// Swarm modification: drop memory entries farther than v_comp from the
    /// rememberer.
    pub drop_beyond_v_comp: bool,
}

impl Default for SmbeConfig {
    fn default() -> Self {
        Self { clear_threshold: None, drop_beyond_v_comp: false }
    }
}

#[derive(Clone, Debug)]
pub enum ExtractionMethod {
    Trivial,
    Aggregate(PlacementKind),
    SimpleMemory(SmbeConfig),
}

/// A belief produced by an extraction method: a group state over p ⊇ z.
#[derive(Clone, Debug)]
pub struct Belief {
    pub members: Vec<usize>,
    pub states: Vec<AgentState>,
}

/// Check the extraction validity constraints: z is a complete execution
/// visibility block of the belief, the belief restricted to z matches the
/// observation, and the belief group is connected at computation visibility.
pub fn validate_belief(
    model: &Model,
    v_comp: f64,
    z: &[usize],
    obs: &[AgentState],
    belief: &Belief,
) -> Result<(), LocimError> {
    let v_exec = model.consts().v_exec;
    for (&i, &s) in z.iter().zip(obs) {
        match belief.members.iter().position(|&m| m == i) {
            Some(k) => {
                if belief.states[k] != s {
                    return Err(LocimError::InvalidInput(format!(
                        "belief contradicts observation of agent {i}"
                    )));
                }
            }
            None => {
                return Err(LocimError::InvalidInput(format!(
                    "belief omits observed agent {i}"
                )))
            }
        }
    }
    let zpart = model.partition_of_members(&belief.members, &belief.states, v_exec);
    let zset: Vec<usize> = z.to_vec();
    if !zpart.blocks.iter().any(|b| *b == zset) {
        return Err(LocimError::InvalidInput(
            "belief violates z ∈ Z_exec(s_p): extra agents within execution visibility".into(),
        ));
    }
    let comp = model.partition_of_members(&belief.members, &belief.states, v_comp);
    if comp.blocks.len() != 1 {
        return Err(LocimError::InvalidInput(
            "belief group not chain-connected at computation visibility".into(),
        ));
    }
    Ok(())
}

/// Trivial extraction: the belief is exactly the observed group state.
pub fn trivial_extraction(z: &[usize], obs: &[AgentState]) -> Belief {
    Belief { members: z.to_vec(), states: obs.to_vec() }
}

/// Aggregate extraction: sample a belief from a distribution that depends
/// only on the observed group state.
pub fn aggregate_extraction(
    model: &Model,
    v_comp: f64,
    placement: PlacementKind,
    z: &[usize],
    obs: &[AgentState],
    rng: &mut impl Rng,
) -> Result<Belief, LocimError> {
    match placement {
        PlacementKind::Degenerate => Ok(trivial_extraction(z, obs)),
        PlacementKind::UniformPhantom => {
            let v_exec = model.consts().v_exec;
            let phantom = (0..model.n()).find(|i| !z.contains(i));
            let Some(j) = phantom else {
                return Ok(trivial_extraction(z, obs));
            };
            let mut candidates = Vec::new();
            for &cand in model.states_of_class(model.class_of(j)) {
                let d_min = obs
                    .iter()
                    .map(|s| model.space.distance(s.pos, cand.pos))
                    .fold(f64::INFINITY, f64::min);
                if d_min > v_exec && d_min <= v_comp {
                    let mut members = z.to_vec();
                    members.push(j);
                    members.sort_unstable();
                    let mut states = Vec::with_capacity(members.len());
                    for &m in &members {
                        if m == j {
                            states.push(cand);
                        } else {
                            states.push(obs[z.iter().position(|&x| x == m).unwrap()]);
                        }
                    }
                    let belief = Belief { members, states };
                    if validate_belief(model, v_comp, z, obs, &belief).is_ok() {
                        candidates.push(belief);
                    }
                }
            }
            if candidates.is_empty() {
                return Ok(trivial_extraction(z, obs));
            }
            let pick = rng.gen_range(0..candidates.len());
            Ok(candidates.swap_remove(pick))
        }
    }
}

/// Output of one simple-memory step for a block.
pub struct SmbeStep {
    pub belief: Belief,
    /// replacement memories for the agents in z
    pub updated: Vec<(usize, AgentMemory)>,
}

/// One step of the simple memory based extraction for block `z` at time `t`:
/// carry memories forward, overwrite with current observations, consolidate
/// by most recent observation, construct the belief state, take its
/// computation-visibility block around z, predict the most likely successor
/// under the first-step policy, and write the predictions back.
pub fn simple_memory_step(
    model: &Model,
    tables: &SolvedTables,
    config: &SmbeConfig,
    exec: &ExecutionState,
    z: &[usize],
    obs: &[AgentState],
) -> Result<SmbeStep, LocimError> {
    let t = exec.t;
    let v_comp = tables.config.v_comp;
    let v_exec = model.consts().v_exec;

    // group memory: current observations for members, most recent estimate
    // across observers for everyone else (ties to the lowest observer index)
    let mut group_mem: BTreeMap<usize, (AgentState, usize)> = BTreeMap::new();
    for (&i, &s) in z.iter().zip(obs) {
        group_mem.insert(i, (s, t));
    }
    for j in 0..model.n() {
        if z.contains(&j) {
            continue;
        }
        let mut best: Option<(AgentState, usize)> = None;
        for &i in z {
            if let Some(&(est, t0)) = exec.memories[i].get(&j) {
                if config.drop_beyond_v_comp {
                    let d = model.space.distance(obs[z.iter().position(|&x| x == i).unwrap()].pos, est.pos);
                    if d > v_comp {
                        continue;
                    }
                }
                let better = match best {
                    None => true,
                    Some((_, bt)) => t0 > bt, // equal timestamps keep the lower observer
                };
                if better {
                    best = Some((est, t0));
                }
            }
        }
        if let Some(entry) = best {
            group_mem.insert(j, entry);
        }
    }

    // contradiction with observation: a remembered agent predicted within
    // execution-visibility chain reach of z was not actually observed; the
    // offending entries are erased before the belief is constructed
    let all_members: Vec<usize> = group_mem.keys().copied().collect();
    let all_states: Vec<AgentState> = all_members.iter().map(|m| group_mem[m].0).collect();
    let zp = model.partition_of_members(&all_members, &all_states, v_exec);
    let z_block = zp.block_of(z[0]).expect("z member present").to_vec();
    for j in z_block {
        if !z.contains(&j) {
            group_mem.remove(&j);
        }
    }

    // belief state and its computation-visibility block containing z
    let members: Vec<usize> = group_mem.keys().copied().collect();
    let states: Vec<AgentState> = members.iter().map(|m| group_mem[m].0).collect();
    let comp = model.partition_of_members(&members, &states, v_comp);
    let mut zb: Vec<usize> = comp.block_of(z[0]).expect("z member present").to_vec();
    zb.sort_unstable();

    // swarm modification: large belief groups reset the memory
    let mut cleared = false;
    if let Some(threshold) = config.clear_threshold {
        if zb.len() >= threshold {
            cleared = true;
            zb = z.to_vec();
            group_mem.retain(|j, _| z.contains(j));
        }
    }

    let belief_states: Vec<AgentState> = zb.iter().map(|m| group_mem[m].0).collect();
    let belief = Belief { members: zb.clone(), states: belief_states.clone() };
    debug_assert!(validate_belief(model, v_comp, z, obs, &belief).is_ok());

    // first-step policy at the belief, then the most likely successor
    let assignment = tables.group_action(model, &zb, &belief_states, 0)?;
    let actions: Vec<ActionId> = zb.iter().map(|m| {
        assignment.iter().find(|(a, _)| a == m).map(|&(_, act)| act).unwrap()
    }).collect();
    let succ = model.block_step_dist(&zb, &belief_states, &actions);
    let mut best_p = f64::NEG_INFINITY;
    let mut predicted: Vec<AgentState> = Vec::new();
    for (cand, p) in succ {
        if p > best_p + 1e-12 || ((p - best_p).abs() <= 1e-12 && cand < predicted) {
            best_p = p;
            predicted = cand;
        }
    }

    // write back: every member of z keeps predictions for the belief group
    // (unchanged observation times) and forgets everyone else
    let mut updated = Vec::with_capacity(z.len());
    for (&i, &s_i) in z.iter().zip(obs) {
        let mut mem = AgentMemory::new();
        if !cleared {
            for (slot, &j) in zb.iter().enumerate() {
                let (_, t0) = group_mem[&j];
                let est = predicted[slot];
                if config.drop_beyond_v_comp
                    && model.space.distance(s_i.pos, est.pos) > v_comp
                {
                    continue;
                }
                mem.insert(j, (est, t0));
            }
        } else {
            for (slot, &j) in zb.iter().enumerate() {
                mem.insert(j, (predicted[slot], t));
            }
        }
        updated.push((i, mem));
    }
    Ok(SmbeStep { belief, updated })
}

/// Executes one joint step of an extracted policy: extraction and the
/// first-step table action per execution-visibility block, memory updates
/// applied after all blocks are processed.
pub struct Executor<'a> {
    pub model: &'a Model,
    pub tables: &'a SolvedTables,
    pub method: ExtractionMethod,
}

impl<'a> Executor<'a> {
    pub fn new(model: &'a Model, tables: &'a SolvedTables, method: ExtractionMethod) -> Self {
        Self { model, tables, method }
    }

    /// The joint action at state `s`, advancing the execution memory.
    pub fn act(
        &self,
        exec: &mut ExecutionState,
        s: &JointState,
        rng: &mut impl Rng,
    ) -> Result<Vec<ActionId>, LocimError> {
        let z_exec = self
            .model
            .communication_partition(s, self.model.consts().v_exec)?;
        let mut joint: Vec<Option<ActionId>> = vec![None; self.model.n()];
        let mut updates: Vec<(usize, AgentMemory)> = Vec::new();
        for z in &z_exec.blocks {
            let obs: Vec<AgentState> = z.iter().map(|&i| s[i]).collect();
            let belief = match &self.method {
                ExtractionMethod::Trivial => trivial_extraction(z, &obs),
                ExtractionMethod::Aggregate(placement) => aggregate_extraction(
                    self.model,
                    self.tables.config.v_comp,
                    *placement,
                    z,
                    &obs,
                    rng,
                )?,
                ExtractionMethod::SimpleMemory(config) => {
                    let step =
                        simple_memory_step(self.model, self.tables, config, exec, z, &obs)?;
                    updates.extend(step.updated);
                    step.belief
                }
            };
            debug_assert!(validate_belief(
                self.model,
                self.tables.config.v_comp,
                z,
                &obs,
                &belief
            )
            .is_ok());
            let assignment =
                self.tables
                    .group_action(self.model, &belief.members, &belief.states, 0)?;
            for (agent, act) in assignment {
                if z.contains(&agent) {
                    joint[agent] = Some(act);
                }
            }
        }
        for (i, mem) in updates {
            exec.memories[i] = mem;
        }
        exec.t += 1;
        Ok(joint
            .into_iter()
            .map(|a| a.expect("every agent belongs to a block"))
            .collect())
    }
}

/// Convenience: partition blocks of the execution-visibility partition.
pub fn exec_blocks(model: &Model, s: &JointState) -> Result<Partition, LocimError> {
    model.communication_partition(s, model.consts().v_exec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Pos;
    use crate::model::tests_support::penalty_line_spec;
    use crate::solver::{solve_finite_horizon, SolverConfig};

    fn setup(v_comp: f64, horizon: usize) -> (Model, SolvedTables) {
        let m = Model::compile(penalty_line_spec()).unwrap();
        let t = solve_finite_horizon(&m, SolverConfig::identity(v_comp, horizon, 2)).unwrap();
        (m, t)
    }

    #[test]
    fn trivial_extraction_is_observation() {
        let b = trivial_extraction(&[1], &[AgentState::new(Pos::Cell(2), 0)]);
        assert_eq!(b.members, vec![1]);
        assert_eq!(b.states, vec![AgentState::new(Pos::Cell(2), 0)]);
    }

    #[test]
    fn degenerate_aggregate_reduces_to_trivial() {
        let (m, _t) = setup(1.0, 2);
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let z = [0usize];
        let obs = [AgentState::new(Pos::Cell(0), 0)];
        let b = aggregate_extraction(&m, 1.0, PlacementKind::Degenerate, &z, &obs, &mut rng)
            .unwrap();
        assert_eq!(b.members, vec![0]);
    }

    #[test]
    fn phantom_placements_are_valid() {
        use rand::SeedableRng;
        let (m, _t) = setup(3.0, 2);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let z = [0usize];
        let obs = [AgentState::new(Pos::Cell(0), 0)];
        for _ in 0..20 {
            let b =
                aggregate_extraction(&m, 3.0, PlacementKind::UniformPhantom, &z, &obs, &mut rng)
                    .unwrap();
            validate_belief(&m, 3.0, &z, &obs, &b).unwrap();
            if b.members.len() == 2 {
                // phantom beyond execution visibility (1), within comp (3)
                let d = m.space.distance(b.states[0].pos, b.states[1].pos);
                assert!(d > 1.0 && d <= 3.0, "d={d}");
            }
        }
    }

    #[test]
    fn phantom_within_exec_rejected() {
        let (m, _t) = setup(3.0, 2);
        let z = [0usize];
        let obs = [AgentState::new(Pos::Cell(0), 0)];
        let bad = Belief {
            members: vec![0, 1],
            states: vec![AgentState::new(Pos::Cell(0), 0), AgentState::new(Pos::Cell(1), 0)],
        };
        assert!(validate_belief(&m, 3.0, &z, &obs, &bad).is_err());
    }

    #[test]
    fn smbe_first_step_all_visible_seeds_memory() {
        let (m, t) = setup(2.0, 4);
        // both agents adjacent: one block; memory seeded with predictions
        let s = vec![AgentState::new(Pos::Cell(0), 0), AgentState::new(Pos::Cell(1), 0)];
        let exec = ExecutionState::new(2);
        let step = simple_memory_step(
            &m,
            &t,
            &SmbeConfig::default(),
            &exec,
            &[0, 1],
            &[s[0], s[1]],
        )
        .unwrap();
        assert_eq!(step.belief.members, vec![0, 1]);
        assert_eq!(step.belief.states, s);
        for (_, mem) in &step.updated {
            assert_eq!(mem.len(), 2);
            for (_, (_, t0)) in mem {
                assert_eq!(*t0, 0);
            }
        }
    }

    #[test]
    fn smbe_retains_separated_agent_within_v_comp() {
        let (m, t) = setup(4.0, 12);
        // agents at cells 0 and 2 (out of exec view, V_exec = 1): with fresh
        // memory nothing is known; but after an adjacent step they track
        let mut exec = ExecutionState::new(2);
        let executor = Executor::new(&m, &t, ExtractionMethod::SimpleMemory(SmbeConfig::default()));
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        // visible pair first
        let s = vec![AgentState::new(Pos::Cell(0), 0), AgentState::new(Pos::Cell(1), 0)];
        executor.act(&mut exec, &s, &mut rng).unwrap();
        assert!(exec.memories[1].contains_key(&0));
        // now agent 1 at distance 2: belief still contains agent 0
        let s2 = vec![AgentState::new(Pos::Cell(0), 0), AgentState::new(Pos::Cell(2), 0)];
        let step = simple_memory_step(
            &m,
            &t,
            &SmbeConfig::default(),
            &exec,
            &[1],
            &[s2[1]],
        )
        .unwrap();
        assert_eq!(step.belief.members, vec![0, 1]);
    }

    #[test]
    fn projection_consistency() {
        // the action of a block does not depend on out-of-block agents
        let (m, t) = setup(1.0, 6);
        use rand::SeedableRng;
        let executor = Executor::new(&m, &t, ExtractionMethod::Trivial);
        let s1 = vec![AgentState::new(Pos::Cell(0), 0), AgentState::new(Pos::Cell(3), 0)];
        let s2 = vec![AgentState::new(Pos::Cell(0), 0), AgentState::new(Pos::Cell(4), 0)];
        let mut e1 = ExecutionState::new(2);
        let mut e2 = ExecutionState::new(2);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let a1 = executor.act(&mut e1, &s1, &mut rng).unwrap();
        let a2 = executor.act(&mut e2, &s2, &mut rng).unwrap();
        assert_eq!(a1[0], a2[0], "agent 0's action depends on the far agent");
    }
}

