//! Property tests for the partition, reward, and solver invariants.

use proptest::prelude::*;

use locim::geometry::{proximity_partition_of, MetricSpace, Partition, Pos, SpaceKind};
use locim::model::{AgentState, Model};
use locim::solver::{c_of, solve_finite_horizon, SolverConfig};
use locim::verify::{partitions_finer_than, random_small_model, RandomModelParams};

fn line_space(len: u16) -> MetricSpace {
    MetricSpace::new(SpaceKind::Line { len }).unwrap()
}

proptest! {
    /// Larger proximity radii only merge blocks, and D(s) is finer than Z(s).
    #[test]
    fn proximity_monotone_in_radius(
        positions in prop::collection::vec(0u16..12, 1..6),
        r in 0u16..4,
        extra in 1u16..4,
    ) {
        let space = line_space(12);
        let agents: Vec<usize> = (0..positions.len()).collect();
        let pos: Vec<Pos> = positions.iter().map(|&p| Pos::Cell(p)).collect();
        let fine = proximity_partition_of(&space, &agents, &pos, r as f64).unwrap();
        let coarse = proximity_partition_of(&space, &agents, &pos, (r + extra) as f64).unwrap();
        prop_assert!(fine.is_finer(&coarse).unwrap());
    }

    /// The intersection is finer than both inputs and is the coarsest such
    /// partition (no strictly coarser common refinement exists).
    #[test]
    fn intersection_is_coarsest_common_refinement(
        split_a in 0u8..26, split_b in 0u8..26, n in 2usize..5,
    ) {
        let agents: Vec<usize> = (0..n).collect();
        let assign = |seedling: u8, i: usize| ((seedling as usize) >> i) & 1;
        let p1 = Partition::new(
            (0..2)
                .map(|b| agents.iter().copied().filter(|&i| assign(split_a, i) == b).collect())
                .filter(|v: &Vec<usize>| !v.is_empty())
                .collect(),
        )
        .unwrap();
        let p2 = Partition::new(
            (0..2)
                .map(|b| agents.iter().copied().filter(|&i| assign(split_b, i) == b).collect())
                .filter(|v: &Vec<usize>| !v.is_empty())
                .collect(),
        )
        .unwrap();
        let inter = p1.intersect(&p2).unwrap();
        prop_assert!(inter.is_finer(&p1).unwrap());
        prop_assert!(inter.is_finer(&p2).unwrap());
        // coarsest: every partition finer than both is finer than inter
        let everyone = Partition::one_block(&agents);
        for candidate in partitions_finer_than(&everyone) {
            if candidate.is_finer(&p1).unwrap() && candidate.is_finer(&p2).unwrap() {
                prop_assert!(candidate.is_finer(&inter).unwrap());
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Sampled transitions respect the unit-speed movement limit and the
    /// reward regrouping identities hold along the way.
    #[test]
    fn transitions_local_and_rewards_regroup(seed in 0u64..400) {
        let model = random_small_model(RandomModelParams { seed, generalized: seed % 4 == 0 })
            .unwrap();
        let consts = model.consts();
        let traj = locim::verify::random_trajectory(&model, 8, seed ^ 0x5EED);
        for window in traj.windows(2) {
            for i in 0..model.n() {
                let d = model.space.distance(window[0].0[i].pos, window[1].0[i].pos);
                prop_assert!(d <= 1.0 + 1e-9);
            }
        }
        let r_tilde = model.r_tilde();
        for (s, a) in &traj {
            let r = model.joint_reward(s, a);
            prop_assert!(r.abs() <= r_tilde + 1e-9);
            // regrouping over any coarser partition leaves the total unchanged
            let z = model.communication_partition(s, consts.v_exec).unwrap();
            let mut regrouped = 0.0;
            for block in &z.blocks {
                let states: Vec<AgentState> = block.iter().map(|&i| s[i]).collect();
                let actions: Vec<u8> = block.iter().map(|&i| a[i]).collect();
                regrouped += model.block_reward(block, &states, &actions);
            }
            prop_assert!((r - regrouped).abs() < 1e-9);
        }
    }

    /// In standard mode the dependence-partition sum equals the full double
    /// sum over ordered agent pairs.
    #[test]
    fn standard_reward_equals_double_sum(seed in 0u64..200) {
        let model = random_small_model(RandomModelParams { seed, generalized: false }).unwrap();
        let traj = locim::verify::random_trajectory(&model, 6, seed ^ 0xD0B);
        for (s, a) in &traj {
            let grouped = model.joint_reward(s, a);
            let mut double_sum = 0.0;
            for i in 0..model.n() {
                double_sum += model.self_reward(i, s[i], a[i]);
                for j in 0..model.n() {
                    if i != j {
                        double_sum += model.pair_reward(i, s[i], a[i], j, s[j], a[j]);
                    }
                }
            }
            prop_assert!((grouped - double_sum).abs() < 1e-9);
        }
    }

    /// Along any sampled cutoff trajectory the partition only refines, and
    /// the one-step horizon-truncation bound holds on every stored value.
    #[test]
    fn cutoff_partition_refines_and_truncation_bounded(seed in 0u64..100) {
        let model = random_small_model(RandomModelParams { seed, generalized: false }).unwrap();
        let consts = model.consts();
        let v_comp = consts.v_exec;
        let horizon = 3;
        let tables =
            solve_finite_horizon(&model, SolverConfig::identity(v_comp, horizon, model.n()))
                .unwrap();
        // truncation: |V_0 - V_1| <= gamma^H r̃_p per group state
        for (idx, key) in tables.keys.iter().enumerate() {
            let members: Vec<usize> = key.0.iter().map(|&p| (p >> 16) as usize).collect();
            let bound = consts.gamma.powi(horizon as i32) * model.r_tilde_of(&members);
            let gap = (tables.values[0][idx] - tables.values[1][idx]).abs();
            prop_assert!(gap <= bound + 1e-9, "gap {gap} bound {bound}");
        }
        // monotone disconnection along sampled trajectories
        use locim::solver::{cutoff_successors, CutoffState};
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let z0 = model.communication_partition(&model.initial(), v_comp).unwrap();
        let mut cs = CutoffState { s: model.initial(), p: z0 };
        for _ in 0..6 {
            let a: Vec<u8> = (0..model.n())
                .map(|i| rng.gen_range(0..model.n_actions(i, cs.s[i])) as u8)
                .collect();
            let succ = cutoff_successors(&model, v_comp, &cs, &a).unwrap();
            let pick = rng.gen_range(0..succ.len());
            let next = succ[pick].0.clone();
            prop_assert!(next.p.is_finer(&cs.p).unwrap());
            cs = next;
        }
        let _ = c_of(consts.v_exec, consts.r).unwrap();
    }
}

/// Two solve routes must agree when homogeneous value sharing is enabled:
/// identical translated configurations share one table entry.
#[test]
fn homogeneous_translation_sharing_matches_plain_solve() {
    use locim::geometry::SpaceKind;
    use locim::model::*;
    use locim::solver::{group_key, Sharing};
    let spec = EnvSpec {
        name: "toy-shared".into(),
        metric: SpaceKind::Line { len: 9 },
        constants: ModelConstants { r: 1.0, v_exec: 2.0, gamma: 0.9 },
        mode: Mode::Standard,
        classes: vec![AgentClass {
            name: "unit".into(),
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
            (0, AgentState::new(Pos::Cell(2), 0)),
            (0, AgentState::new(Pos::Cell(3), 0)),
        ],
        self_rewards: vec![],
        // translation-invariant pairwise attraction
        pair_rewards: vec![PairRule {
            i_agents: None,
            j_agents: None,
            when_i: AgentMatcher::any(),
            when_j: AgentMatcher::any(),
            max_dist: 0.0,
            same_internal: false,
            value: 3.0,
        }],
        group_kernel: None,
        homogeneous: true,
        translation_invariant: true,
    };
    let model = Model::compile(spec).unwrap();
    let config_plain = SolverConfig::identity(2.0, 3, 2);
    let plain = solve_finite_horizon(&model, config_plain).unwrap();
    let config_shared = SolverConfig {
        v_comp: 2.0,
        horizon: 3,
        max_group: 2,
        sharing: Sharing::Homogeneous { translate: true },
    };
    let shared = solve_finite_horizon(&model, config_shared).unwrap();
    assert!(shared.keys.len() < plain.keys.len());
    // identical relative configurations at different anchors share values
    for offset in 0..4u16 {
        let states = vec![
            AgentState::new(Pos::Cell(2 + offset), 0),
            AgentState::new(Pos::Cell(3 + offset), 0),
        ];
        let v_plain = plain.value_group(&model, &[0, 1], &states, 0).unwrap();
        let v_shared = shared.value_group(&model, &[0, 1], &states, 0).unwrap();
        assert!((v_plain - v_shared).abs() < 1e-9, "offset {offset}: {v_plain} vs {v_shared}");
        // permuted members map to the same key
        let k1 = group_key(&model, Sharing::Homogeneous { translate: true }, &[0, 1], &states)
            .unwrap();
        let swapped = vec![states[1], states[0]];
        let k2 = group_key(&model, Sharing::Homogeneous { translate: true }, &[0, 1], &swapped)
            .unwrap();
        assert_eq!(k1, k2);
    }
}

/// The dense-table fast path must agree with the generic backward induction
/// on every key of a homogeneous deterministic model.
#[test]
fn fast_solver_matches_generic() {
    use locim::solver::{solve_homogeneous_fast, Sharing};
    let model = Model::compile(locim::swarm::room_model_spec()).unwrap();
    let config = SolverConfig {
        v_comp: 5.0,
        horizon: 3,
        max_group: 2,
        sharing: Sharing::Homogeneous { translate: false },
    };
    let fast = solve_homogeneous_fast(&model, config).unwrap();
    let generic = solve_finite_horizon(&model, config).unwrap();
    assert_eq!(fast.keys.len(), generic.keys.len());
    for key in &fast.keys {
        for h in 0..=3 {
            let a = fast.value_key(key, h).unwrap();
            let b = generic.value_key(key, h).unwrap();
            assert!((a - b).abs() < 1e-9, "key {key:?} h={h}: {a} vs {b}");
        }
        assert_eq!(fast.action_key(key, 0), generic.action_key(key, 0));
    }
}

/// A non-homogeneous model must reject homogeneous sharing.
#[test]
fn sharing_rejected_for_heterogeneous_model() {
    use locim::solver::{solve_finite_horizon, Sharing, SolverConfig};
    let model = locim::envs::build_env("long_journey").unwrap();
    let config = SolverConfig {
        v_comp: 5.0,
        horizon: 2,
        max_group: 2,
        sharing: Sharing::Homogeneous { translate: true },
    };
    assert!(solve_finite_horizon(&model, config).is_err());
}
