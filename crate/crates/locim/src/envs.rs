//! The benchmark environments as declarative specs. Layouts that the source
//! figures do not pin down are reconstructed so the reported returns
//! reproduce; see `bench::reconstruct` for the searches.

use crate::geometry::{Pos, SpaceKind};
use crate::model::{
    ActionChoice, AgentClass, AgentMatcher, AgentState, DynRule, Effect, EnvSpec, Mode, Model,
    ModelConstants, PairRule, SelfRule,
};
use crate::LocimError;

pub const ENV_NAMES: &[&str] = &[
    "aisle_walk",
    "bullseye",
    "modified_bullseye",
    "highway",
    "modified_highway",
    "penalty_jittering",
    "long_journey",
    "stochastic_transitions",
    "unanticipated_oov",
    "oov_coordination",
    "swarm",
];

/// Build a registered environment. The swarm environment is the per-room
/// model used by the swarm simulation; the full 100-agent run lives in the
/// swarm module.
pub fn build_env(name: &str) -> Result<Model, LocimError> {
    let spec = match name {
        "aisle_walk" => aisle_walk(),
        "bullseye" => bullseye(false),
        "modified_bullseye" => bullseye(true),
        "highway" => highway(false),
        "modified_highway" => highway(true),
        "penalty_jittering" => penalty_jittering(),
        "long_journey" => long_journey(0.9),
        "stochastic_transitions" => stochastic_transitions(),
        "unanticipated_oov" => unanticipated_oov(),
        "oov_coordination" => oov_coordination(),
        "swarm" => crate::swarm::room_model_spec(),
        other => {
            return Err(LocimError::InvalidInput(format!(
                "unknown environment '{other}'; available: {}",
                ENV_NAMES.join(", ")
            )))
        }
    };
    Model::compile(spec)
}

fn stay() -> ActionChoice {
    ActionChoice::det("stay", vec![Effect::Stay])
}
fn west() -> ActionChoice {
    ActionChoice::det("west", vec![Effect::MoveDelta { dx: -1, dy: 0 }])
}
fn east() -> ActionChoice {
    ActionChoice::det("east", vec![Effect::MoveDelta { dx: 1, dy: 0 }])
}
fn forced(effects: Vec<Effect>) -> Vec<ActionChoice> {
    vec![ActionChoice::det("forced", effects)]
}
fn match_pos(cells: Vec<u16>) -> AgentMatcher {
    AgentMatcher { pos: Some(cells), ..Default::default() }
}
fn match_internal(ys: Vec<u8>) -> AgentMatcher {
    AgentMatcher { internal: Some(ys), ..Default::default() }
}
fn match_pos_internal(cells: Vec<u16>, ys: Vec<u8>) -> AgentMatcher {
    AgentMatcher { pos: Some(cells), internal: Some(ys), ..Default::default() }
}

/// Two walkers climb a four-column aisle in lockstep (the row is the phase
/// internal state); column changes are possible only at crossing phases.
/// Green squares on the outer columns pay +100 at phase 2; walkers within
/// distance 1 each collect +20. Reaching the top frees lateral movement.
pub fn aisle_walk() -> EnvSpec {
    const TOP: u8 = 5;
    // crosssingss are directed: the outer columns open up at phase 0, the
    // return lanes at phase 3
    let adv = || ActionChoice::det("stay", vec![Effect::AddInternal(1)]);
    let adv_west = || {
        ActionChoice::det("west", vec![Effect::MoveDelta { dx: -1, dy: 0 }, Effect::AddInternal(1)])
    };
    let adv_east = || {
        ActionChoice::det("east", vec![Effect::MoveDelta { dx: 1, dy: 0 }, Effect::AddInternal(1)])
    };
    let class = AgentClass {
        name: "walker".into(),
        rules: vec![
            DynRule { when: match_pos_internal(vec![1], vec![0]), choices: vec![adv(), adv_west()] },
            DynRule { when: match_pos_internal(vec![2], vec![0]), choices: vec![adv(), adv_east()] },
            DynRule { when: match_pos_internal(vec![0], vec![3]), choices: vec![adv(), adv_east()] },
            DynRule { when: match_pos_internal(vec![3], vec![3]), choices: vec![adv(), adv_west()] },
            DynRule {
                when: match_internal((0..TOP).collect()),
                choices: forced(vec![Effect::AddInternal(1)]),
            },
            DynRule { when: match_internal(vec![TOP]), choices: vec![stay(), west(), east()] },
        ],
        inert_internals: vec![],
        internal_count: TOP + 1,
    };
    EnvSpec {
        name: "aisle_walk".into(),
        metric: SpaceKind::Line { len: 4 },
        constants: ModelConstants { r: 1.0, v_exec: 2.0, gamma: 0.9 },
        mode: Mode::Standard,
        classes: vec![class],
        agents: vec![
            (0, AgentState::new(Pos::Cell(1), 0)),
            (0, AgentState::new(Pos::Cell(2), 0)),
        ],
        self_rewards: vec![SelfRule {
            agents: None,
            when: match_pos_internal(vec![0, 3], vec![2]),
            value: 100.0,
        }],
        pair_rewards: vec![PairRule {
            i_agents: None,
            j_agents: None,
            when_i: AgentMatcher::any(),
            when_j: AgentMatcher::any(),
            max_dist: 1.0,
            same_internal: false,
            value: 20.0,
        }],
        group_kernel: None,
        homogeneous: true,
        translation_invariant: false,
    }
}

/// Two agents approach a central bullseye from 24 and 25 cells out on a
/// line. Reaching the centre pays +100 once and removes the agent; being
/// within 20 of the other agent costs 500 per agent per step; stepping away
/// from the centre costs 2. The modified variant shrinks the visibility to
/// 20.5 so the agents cannot see each other before they interact.
pub fn bullseye(modified: bool) -> EnvSpec {
    const LEN: u16 = 70;
    const CENTER: u16 = 34;
    let west_side: Vec<u16> = (0..CENTER).collect();
    let east_side: Vec<u16> = (CENTER + 1..LEN).collect();
    let class = AgentClass {
        name: "runner".into(),
        rules: vec![
            DynRule {
                when: match_pos_internal(vec![CENTER], vec![0]),
                choices: forced(vec![Effect::ChainEnter { anchor: CENTER }, Effect::SetInternal(1)]),
            },
            DynRule { when: match_internal(vec![0]), choices: vec![stay(), west(), east()] },
        ],
        inert_internals: vec![1],
        internal_count: 2,
    };
    EnvSpec {
        name: if modified { "modified_bullseye" } else { "bullseye" }.into(),
        metric: SpaceKind::Line { len: LEN },
        constants: ModelConstants {
            r: 20.0,
            v_exec: if modified { 20.5 } else { 25.0 },
            gamma: 0.9,
        },
        mode: Mode::Standard,
        classes: vec![class],
        agents: vec![
            (0, AgentState::new(Pos::Cell(CENTER - 24), 0)),
            (0, AgentState::new(Pos::Cell(CENTER + 25), 0)),
        ],
        self_rewards: vec![
            SelfRule {
                agents: None,
                when: match_pos_internal(vec![CENTER], vec![0]),
                value: 100.0,
            },
            // moving away from the bullseye
            SelfRule {
                agents: None,
                when: AgentMatcher {
                    pos: Some(west_side),
                    internal: Some(vec![0]),
                    action: Some(vec![1]), // west
                    ..Default::default()
                },
                value: -2.0,
            },
            SelfRule {
                agents: None,
                when: AgentMatcher {
                    pos: Some(east_side),
                    internal: Some(vec![0]),
                    action: Some(vec![2]), // east
                    ..Default::default()
                },
                value: -2.0,
            },
        ],
        pair_rewards: vec![PairRule {
            i_agents: None,
            j_agents: None,
            when_i: match_internal(vec![0]),
            when_j: match_internal(vec![0]),
            max_dist: 20.0,
            same_internal: false,
            value: -500.0,
        }],
        group_kernel: None,
        homogeneous: true,
        translation_invariant: false,
    }
}

/// Two agents on a five-cell line; the leftmost square pays +200 per step,
/// the rightmost +50, and overlapping costs 500 each. One agent starts on
/// the prize square, the other two cells to its right.
pub fn penalty_jittering() -> EnvSpec {
    EnvSpec {
        name: "penalty_jittering".into(),
        metric: SpaceKind::Line { len: 5 },
        constants: ModelConstants { r: 0.0, v_exec: 1.0, gamma: 0.9 },
        mode: Mode::Standard,
        classes: vec![AgentClass {
            name: "walker".into(),
            rules: vec![DynRule {
                when: AgentMatcher::any(),
                choices: vec![stay(), west(), east()],
            }],
            inert_internals: vec![],
            internal_count: 1,
        }],
        agents: vec![
            (0, AgentState::new(Pos::Cell(0), 0)),
            (0, AgentState::new(Pos::Cell(2), 0)),
        ],
        self_rewards: vec![
            SelfRule { agents: None, when: match_pos(vec![0]), value: 200.0 },
            SelfRule { agents: None, when: match_pos(vec![4]), value: 50.0 },
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

/// Long journey: a fixed agent holds the leftmost square; the free agent
/// picks an objective square x in 1..=10 (position x+1), and either settles
/// there for (11-x)*10/gamma^x or walks back to collect (100+10x)/gamma^2x
/// next to the fixed agent. The discount corrections make every outcome
/// value independent of gamma.
///
/// Free-agent internals: 0 = choosing, 1..=10 = outbound(x),
/// 11..=20 = returning(x-10), 21 = done.
pub fn long_journey(gamma: f64) -> EnvSpec {
    const LEN: u16 = 12;
    const DONE: u8 = 21;
    let mut rules = Vec::new();
    // choosing: pick x and step east
    rules.push(DynRule {
        when: match_internal(vec![0]),
        choices: (1..=10u8)
            .map(|x| {
                ActionChoice::det(
                    &format!("choose{x}"),
                    vec![Effect::SetInternal(x), Effect::MoveDelta { dx: 1, dy: 0 }],
                )
            })
            .collect(),
    });
    // outbound at the objective square: settle, turn back, or keep moving
    for x in 1..=10u8 {
        rules.push(DynRule {
            when: match_pos_internal(vec![x as u16 + 1], vec![x]),
            choices: vec![
                ActionChoice::det("settle", vec![Effect::SetInternal(DONE)]),
                ActionChoice::det(
                    "turn",
                    vec![Effect::SetInternal(10 + x), Effect::MoveDelta { dx: -1, dy: 0 }],
                ),
                stay(),
                west(),
                east(),
            ],
        });
    }
    rules.push(DynRule {
        when: match_internal((1..=10).collect()),
        choices: vec![stay(), west(), east()],
    });
    // returning: adjacent to the fixed agent the trip completes and freezes
    rules.push(DynRule {
        when: match_pos_internal(vec![1], (11..=20).collect()),
        choices: forced(vec![Effect::SetInternal(DONE)]),
    });
    rules.push(DynRule {
        when: match_internal((11..=20).collect()),
        choices: vec![stay(), west(), east()],
    });
    rules.push(DynRule { when: match_internal(vec![DONE]), choices: forced(vec![Effect::Stay]) });

    let free = AgentClass {
        name: "traveller".into(),
        rules,
        inert_internals: vec![],
        internal_count: DONE + 1,
    };
    let fixed = AgentClass {
        name: "anchor".into(),
        rules: vec![DynRule { when: AgentMatcher::any(), choices: forced(vec![Effect::Stay]) }],
        inert_internals: vec![],
        internal_count: 1,
    };
    let mut self_rewards = Vec::new();
    let mut pair_rewards = Vec::new();
    for x in 1..=10u8 {
        self_rewards.push(SelfRule {
            agents: Some(vec![1]),
            when: AgentMatcher {
                pos: Some(vec![x as u16 + 1]),
                internal: Some(vec![x]),
                action: Some(vec![0]), // settle
                ..Default::default()
            },
            value: (11 - x as i32) as f64 * 10.0 / gamma.powi(x as i32),
        });
        pair_rewards.push(PairRule {
            i_agents: Some(vec![1]),
            j_agents: Some(vec![0]),
            when_i: match_internal(vec![10 + x]),
            when_j: AgentMatcher::any(),
            max_dist: 1.0,
            same_internal: false,
            value: (100 + 10 * x as i32) as f64 / gamma.powi(2 * x as i32),
        });
    }
    EnvSpec {
        name: "long_journey".into(),
        metric: SpaceKind::Line { len: LEN },
        constants: ModelConstants { r: 1.0, v_exec: 5.0, gamma },
        mode: Mode::Standard,
        classes: vec![fixed, free],
        agents: vec![
            (0, AgentState::new(Pos::Cell(0), 0)),
            (1, AgentState::new(Pos::Cell(1), 0)),
        ],
        self_rewards,
        pair_rewards,
        group_kernel: None,
        homogeneous: false,
        translation_invariant: false,
    }
}

/// Layout parameters for the highway reconstruction; see
/// `bench::reconstruct_highway` for the search that produced the defaults.
/// A wall separates the goal column from the bypass except at a single low
/// crossing window near the immobile agent and an open stretch at the top;
/// the bypass itself runs along the outer column.
#[derive(Clone, Copy, Debug)]
pub struct HighwayLayout {
    pub rows: u16,
    /// columns in the full variant; the modified variant removes one
    pub cols: u16,
    pub blocker_row: u16,
    /// no edges between column 0 and column 1 from row 1 up to here...
    pub wall_top: u16,
    /// ...except at this row
    pub window_row: u16,
    /// column-1 cells removed above the window up to the wall top
    pub gap: bool,
}

pub const HIGHWAY_DEFAULT: HighwayLayout = HighwayLayout {
    rows: 14,
    cols: 3,
    blocker_row: 6,
    wall_top: 9,
    window_row: 2,
    gap: true,
};

/// Highway: a teleport edge connects the start square to the goal square at
/// a one-time -25; walking there is longer and passes an immobile agent
/// that must be given a wide berth (R = 3, -500). The modified variant
/// removes the bypass column, leaving the teleport as the only clean route.
pub fn highway(modified: bool) -> EnvSpec {
    highway_with(HIGHWAY_DEFAULT, modified)
}

pub fn highway_with(layout: HighwayLayout, modified: bool) -> EnvSpec {
    let cols = if modified { layout.cols - 1 } else { layout.cols };
    let rows = layout.rows;
    let node = |x: u16, y: u16| y * cols + x;
    let exists = |x: u16, y: u16| {
        if x >= cols || y >= rows {
            return false;
        }
        !(layout.gap && x == 1 && y > layout.window_row && y <= layout.wall_top)
    };
    let mut edges = Vec::new();
    for y in 0..rows {
        for x in 0..cols {
            if !exists(x, y) {
                continue;
            }
            if exists(x, y + 1) {
                edges.push((node(x, y), node(x, y + 1)));
            }
            if exists(x + 1, y) {
                let walled = x == 0
                    && y >= 1
                    && y <= layout.wall_top
                    && y != layout.window_row;
                if !walled {
                    edges.push((node(x, y), node(x + 1, y)));
                }
            }
        }
    }
    let red = node(0, 0);
    let green = node(0, rows - 1);
    edges.push((red, green)); // the highway
    let n_nodes = cols * rows;

    // movement rules: one per cell (graph moves), explicit teleport at red
    let mut adj: Vec<Vec<u16>> = vec![Vec::new(); n_nodes as usize];
    for &(a, b) in &edges {
        adj[a as usize].push(b);
        adj[b as usize].push(a);
    }
    for l in adj.iter_mut() {
        // descending ids put upward moves first, which also settles
        // equal-length route ties toward making progress
        l.sort_unstable_by(|a, b| b.cmp(a));
    }
    let mut rules = Vec::new();
    // reaching the goal freezes the agent (flag 2 stops the rewards)
    rules.push(DynRule {
        when: match_pos_internal(vec![green], vec![0, 1]),
        choices: forced(vec![Effect::SetInternal(2)]),
    });
    rules.push(DynRule { when: match_internal(vec![2]), choices: forced(vec![Effect::Stay]) });
    // at the start square the teleport is taken explicitly so the landing
    // carries the just-teleported flag
    let mut red_choices = vec![stay()];
    for &nb in &adj[red as usize] {
        if nb == green {
            continue;
        }
        red_choices.push(ActionChoice::det(&format!("move{nb}"), vec![Effect::MoveTo(nb)]));
    }
    red_choices.push(ActionChoice::det(
        "teleport",
        vec![Effect::MoveTo(green), Effect::SetInternal(1)],
    ));
    rules.push(DynRule { when: match_pos_internal(vec![red], vec![0]), choices: red_choices });
    for c in 0..n_nodes {
        if c == red || c == green || !exists(c % cols, c / cols) {
            continue;
        }
        let mut choices = vec![stay()];
        for &nb in &adj[c as usize] {
            choices.push(ActionChoice::det(&format!("move{nb}"), vec![Effect::MoveTo(nb)]));
        }
        rules.push(DynRule { when: match_pos_internal(vec![c], vec![0]), choices });
    }

    let runner = AgentClass {
        name: "runner".into(),
        rules,
        inert_internals: vec![2],
        internal_count: 3,
    };
    let blocker = AgentClass {
        name: "blocker".into(),
        rules: vec![DynRule { when: AgentMatcher::any(), choices: forced(vec![Effect::Stay]) }],
        inert_internals: vec![],
        internal_count: 1,
    };
    EnvSpec {
        name: if modified { "modified_highway" } else { "highway" }.into(),
        metric: SpaceKind::Graph { nodes: n_nodes, edges },
        constants: ModelConstants { r: 3.0, v_exec: 5.0, gamma: 0.98 },
        mode: Mode::Standard,
        classes: vec![runner, blocker],
        agents: vec![
            (0, AgentState::new(Pos::Cell(red), 0)),
            (1, AgentState::new(Pos::Cell(node(0, layout.blocker_row)), 0)),
        ],
        self_rewards: vec![
            SelfRule {
                agents: Some(vec![0]),
                when: match_pos_internal(vec![green], vec![0, 1]),
                value: 100.0,
            },
            SelfRule { agents: Some(vec![0]), when: match_internal(vec![1]), value: -25.0 },
        ],
        pair_rewards: vec![PairRule {
            i_agents: None,
            j_agents: None,
            when_i: match_internal(vec![0]),
            when_j: AgentMatcher::any(),
            max_dist: 3.0,
            same_internal: false,
            value: -500.0,
        }],
        group_kernel: None,
        homogeneous: false,
        translation_invariant: false,
    }
}

/// Two agents are pushed apart, assigned (left, randomly) or choosing
/// (right, out of view) an internal state, then pushed back to the centre
/// where matching states pay an extra +10 each and state 3 pays +2.
pub fn stochastic_transitions() -> EnvSpec {
    const CENTER: u16 = 2;
    let left = AgentClass {
        name: "left".into(),
        rules: vec![
            DynRule { when: match_pos(vec![CENTER]), choices: forced(vec![Effect::Stay]) },
            DynRule {
                when: match_internal(vec![1]),
                choices: vec![ActionChoice {
                    name: "assign".into(),
                    branches: vec![
                        (vec![Effect::MoveDelta { dx: -1, dy: 0 }, Effect::SetInternal(2)], 0.51),
                        (vec![Effect::MoveDelta { dx: -1, dy: 0 }, Effect::SetInternal(3)], 0.49),
                    ],
                }],
            },
            DynRule {
                when: match_internal(vec![2, 3]),
                choices: forced(vec![Effect::MoveDelta { dx: 1, dy: 0 }]),
            },
        ],
        inert_internals: vec![],
        internal_count: 4,
    };
    let right = AgentClass {
        name: "right".into(),
        rules: vec![
            DynRule { when: match_pos(vec![CENTER]), choices: forced(vec![Effect::Stay]) },
            DynRule {
                when: match_pos_internal(vec![3], vec![1]),
                choices: forced(vec![Effect::MoveDelta { dx: 1, dy: 0 }]),
            },
            DynRule {
                when: match_pos_internal(vec![4], vec![1]),
                choices: vec![
                    ActionChoice::det(
                        "choose2",
                        vec![Effect::MoveDelta { dx: -1, dy: 0 }, Effect::SetInternal(2)],
                    ),
                    ActionChoice::det(
                        "choose3",
                        vec![Effect::MoveDelta { dx: -1, dy: 0 }, Effect::SetInternal(3)],
                    ),
                ],
            },
            DynRule {
                when: match_internal(vec![2, 3]),
                choices: forced(vec![Effect::MoveDelta { dx: -1, dy: 0 }]),
            },
        ],
        inert_internals: vec![],
        internal_count: 4,
    };
    EnvSpec {
        name: "stochastic_transitions".into(),
        metric: SpaceKind::Line { len: 5 },
        constants: ModelConstants { r: 0.0, v_exec: 3.0, gamma: 0.9 },
        mode: Mode::Standard,
        classes: vec![left, right],
        agents: vec![
            (0, AgentState::new(Pos::Cell(1), 1)),
            (1, AgentState::new(Pos::Cell(3), 1)),
        ],
        self_rewards: vec![SelfRule {
            agents: None,
            when: match_pos_internal(vec![CENTER], vec![3]),
            value: 2.0,
        }],
        pair_rewards: vec![PairRule {
            i_agents: None,
            j_agents: None,
            when_i: match_pos_internal(vec![CENTER], vec![2, 3]),
            when_j: match_pos_internal(vec![CENTER], vec![2, 3]),
            max_dist: 0.0,
            same_internal: true,
            value: 10.0,
        }],
        group_kernel: None,
        homogeneous: false,
        translation_invariant: false,
    }
}

/// Three agents, two reward squares. The two agents on the right separate
/// and pick squares without seeing the third agent camped near the left
/// square; memory-based coordination sends the middle agent into the
/// occupied left square.
pub fn unanticipated_oov() -> EnvSpec {
    const LEFT_SQ: u16 = 2;
    const RIGHT_SQ: u16 = 7;
    let free_moves = DynRule {
        when: match_internal(vec![2]),
        choices: vec![stay(), west(), east()],
    };
    let class_a = AgentClass {
        name: "left".into(),
        rules: vec![
            DynRule { when: match_internal(vec![1]), choices: forced(vec![Effect::SetInternal(2)]) },
            free_moves.clone(),
        ],
        inert_internals: vec![],
        internal_count: 3,
    };
    let class_mid = AgentClass {
        name: "middle".into(),
        rules: vec![
            DynRule {
                when: match_internal(vec![1]),
                choices: forced(vec![Effect::MoveDelta { dx: -1, dy: 0 }, Effect::SetInternal(2)]),
            },
            free_moves.clone(),
        ],
        inert_internals: vec![],
        internal_count: 3,
    };
    let class_right = AgentClass {
        name: "right".into(),
        rules: vec![
            DynRule {
                when: match_internal(vec![1]),
                choices: forced(vec![Effect::MoveDelta { dx: 1, dy: 0 }, Effect::SetInternal(2)]),
            },
            free_moves,
        ],
        inert_internals: vec![],
        internal_count: 3,
    };
    EnvSpec {
        name: "unanticipated_oov".into(),
        metric: SpaceKind::Line { len: 11 },
        constants: ModelConstants { r: 0.0, v_exec: 3.0, gamma: 0.9 },
        mode: Mode::Standard,
        classes: vec![class_a, class_mid, class_right],
        agents: vec![
            (0, AgentState::new(Pos::Cell(0), 1)),
            (1, AgentState::new(Pos::Cell(6), 1)),
            (2, AgentState::new(Pos::Cell(8), 1)),
        ],
        self_rewards: vec![
            SelfRule {
                agents: None,
                when: match_pos_internal(vec![LEFT_SQ], vec![2]),
                value: 400.0,
            },
            SelfRule {
                agents: None,
                when: match_pos_internal(vec![RIGHT_SQ], vec![2]),
                value: 500.0,
            },
        ],
        pair_rewards: vec![PairRule {
            i_agents: None,
            j_agents: None,
            when_i: AgentMatcher::any(),
            when_j: AgentMatcher::any(),
            max_dist: 0.0,
            same_internal: false,
            value: -100.0,
        }],
        group_kernel: None,
        homogeneous: false,
        translation_invariant: false,
    }
}

/// Out-of-view coordination: two walkers separate, pick internal state 1 or
/// 2 while apart, climb to the top row, and irreversibly commit to the
/// centre square (matching 1s pay +50 each, matching 2s +10 each) or a far
/// +1 square. A stationary agent on the right walker's column collides with
/// internal state 1 only, forcing the right walker to pick 2.
///
/// Walker internals: 0 = before the choice, 1/2 = climbing with the chosen
/// state, 5/6 = centre-bound carrying state 1/2, 7 = heading to the +1
/// square.
pub fn oov_coordination() -> EnvSpec {
    const W: u16 = 33;
    const H: u16 = 5;
    let node = |x: u16, y: u16| y * W + x;
    let top: Vec<u16> = (0..W).map(|x| node(x, H - 1)).collect();
    let center = node(16, H - 1);
    let plus_left = node(0, H - 1);
    let plus_right = node(32, H - 1);

    let walker = |outward_dx: i32, center_dx: i32, plus_dx: i32, start_col: u16| {
        let climb_cols: Vec<u16> = (1..H - 1)
            .map(|y| node((start_col as i32 + outward_dx) as u16, y))
            .collect();
        let outward_cell = node((start_col as i32 + outward_dx) as u16, 0);
        let entry = node((start_col as i32 + outward_dx) as u16, H - 1);
        AgentClass {
            name: format!("walker{start_col}"),
            rules: vec![
                // forced apart
                DynRule {
                    when: match_internal(vec![0]),
                    choices: forced(vec![Effect::MoveDelta { dx: outward_dx, dy: 0 }, Effect::SetInternal(10)]),
                },
                // out of view: choose 1 or 2 with the first climb step
                DynRule {
                    when: match_pos_internal(vec![outward_cell], vec![10]),
                    choices: vec![
                        ActionChoice::det("choose1", vec![Effect::MoveDelta { dx: 0, dy: 1 }, Effect::SetInternal(1)]),
                        ActionChoice::det("choose2", vec![Effect::MoveDelta { dx: 0, dy: 1 }, Effect::SetInternal(2)]),
                    ],
                },
                // climb to the top
                DynRule {
                    when: match_pos_internal(climb_cols, vec![1, 2]),
                    choices: forced(vec![Effect::MoveDelta { dx: 0, dy: 1 }]),
                },
                // irreversible decision bundled with the first lateral step
                DynRule {
                    when: match_pos_internal(vec![entry], vec![1]),
                    choices: vec![
                        ActionChoice::det("center", vec![Effect::MoveDelta { dx: center_dx, dy: 0 }, Effect::SetInternal(5)]),
                        ActionChoice::det("plus", vec![Effect::MoveDelta { dx: plus_dx, dy: 0 }, Effect::SetInternal(7)]),
                    ],
                },
                DynRule {
                    when: match_pos_internal(vec![entry], vec![2]),
                    choices: vec![
                        ActionChoice::det("center", vec![Effect::MoveDelta { dx: center_dx, dy: 0 }, Effect::SetInternal(6)]),
                        ActionChoice::det("plus", vec![Effect::MoveDelta { dx: plus_dx, dy: 0 }, Effect::SetInternal(7)]),
                    ],
                },
                // committed marches, frozen at the destination
                DynRule { when: match_pos_internal(vec![center], vec![5, 6]), choices: forced(vec![Effect::Stay]) },
                DynRule {
                    when: match_internal(vec![5, 6]),
                    choices: forced(vec![Effect::MoveDelta { dx: center_dx, dy: 0 }]),
                },
                DynRule {
                    when: match_pos_internal(vec![plus_left, plus_right], vec![7]),
                    choices: forced(vec![Effect::Stay]),
                },
                DynRule {
                    when: match_internal(vec![7]),
                    choices: forced(vec![Effect::MoveDelta { dx: plus_dx, dy: 0 }]),
                },
            ],
            inert_internals: vec![],
            internal_count: 11,
        }
    };
    let blocker = AgentClass {
        name: "blocker".into(),
        rules: vec![DynRule { when: AgentMatcher::any(), choices: forced(vec![Effect::Stay]) }],
        inert_internals: vec![],
        internal_count: 4,
    };
    let _ = &top;
    EnvSpec {
        name: "oov_coordination".into(),
        metric: SpaceKind::Grid { w: W, h: H, chebyshev: false, blocked: vec![] },
        constants: ModelConstants { r: 0.0, v_exec: 3.0, gamma: 0.9 },
        mode: Mode::Standard,
        classes: vec![walker(-1, 1, -1, 15), walker(1, -1, 1, 17), blocker],
        agents: vec![
            (0, AgentState::new(Pos::Cell(node(15, 0)), 0)),
            (1, AgentState::new(Pos::Cell(node(17, 0)), 0)),
            (2, AgentState::new(Pos::Cell(node(18, 3)), 3)),
        ],
        self_rewards: vec![SelfRule {
            agents: None,
            when: match_pos_internal(vec![plus_left, plus_right], vec![7]),
            value: 1.0,
        }],
        pair_rewards: vec![
            // colliding with the stationary state-3 agent while in state 1
            PairRule {
                i_agents: None,
                j_agents: None,
                when_i: match_internal(vec![1]),
                when_j: match_internal(vec![3]),
                max_dist: 0.0,
                same_internal: false,
                value: -500.0,
            },
            PairRule {
                i_agents: None,
                j_agents: None,
                when_i: match_internal(vec![3]),
                when_j: match_internal(vec![1]),
                max_dist: 0.0,
                same_internal: false,
                value: -500.0,
            },
            // matched centre meetings
            PairRule {
                i_agents: None,
                j_agents: None,
                when_i: match_pos_internal(vec![center], vec![5]),
                when_j: match_pos_internal(vec![center], vec![5]),
                max_dist: 0.0,
                same_internal: true,
                value: 50.0,
            },
            PairRule {
                i_agents: None,
                j_agents: None,
                when_i: match_pos_internal(vec![center], vec![6]),
                when_j: match_pos_internal(vec![center], vec![6]),
                max_dist: 0.0,
                same_internal: true,
                value: 10.0,
            },
        ],
        group_kernel: None,
        homogeneous: false,
        translation_invariant: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_envs_compile_and_validate() {
        for name in ENV_NAMES {
            let m = build_env(name).unwrap_or_else(|e| panic!("{name}: {e}"));
            let report = m.validate();
            assert!(report.is_empty(), "{name}: {report:?}");
        }
    }

    #[test]
    fn unknown_env_lists_available() {
        let Err(err) = build_env("nope") else { panic!("expected an error") };
        assert!(format!("{err}").contains("penalty_jittering"));
    }

    #[test]
    fn aisle_walk_adjacent_reward() {
        let m = build_env("aisle_walk").unwrap();
        // both agents adjacent: each obtains +20
        let s = m.initial();
        let r = m.joint_reward(&s, &[0, 0]);
        assert_eq!(r, 40.0);
    }

    #[test]
    fn bullseye_start_separated() {
        let m = build_env("bullseye").unwrap();
        let s = m.initial();
        assert_eq!(m.space.distance(s[0].pos, s[1].pos), 49.0);
        // within R = 20 spaces they are in one dependence block
        assert_eq!(m.dependence_partition(&s).blocks.len(), 2);
        assert_eq!(m.joint_reward(&s, &[0, 0]), 0.0);
    }

    #[test]
    fn long_journey_settle_reward_is_gamma_free() {
        for gamma in [0.8, 0.9, 0.95] {
            let m = Model::compile(long_journey(gamma)).unwrap();
            // settling on square 1 at t=1 discounts to exactly 100
            let settle = m.self_reward(1, AgentState::new(Pos::Cell(2), 1), 0);
            assert!((settle * gamma - 100.0).abs() < 1e-9);
        }
    }

    #[test]
    fn stochastic_assignment_probabilities() {
        let m = build_env("stochastic_transitions").unwrap();
        let dist = m.agent_step(0, AgentState::new(Pos::Cell(1), 1), 0);
        assert_eq!(dist.len(), 2);
        let p2 = dist
            .iter()
            .find(|(s, _)| s.y == 2)
            .map(|(_, p)| *p)
            .unwrap();
        assert!((p2 - 0.51).abs() < 1e-12);
    }

    #[test]
    fn highway_teleport_is_unit_speed() {
        let m = build_env("highway").unwrap();
        let s = m.initial();
        let red = s[0].pos;
        let green_node = {
            let layout = HIGHWAY_DEFAULT;
            (layout.rows - 1) * layout.cols
        };
        assert_eq!(m.space.distance(red, Pos::Cell(green_node)), 1.0);
    }

    #[test]
    fn oov_coordination_blocker_hits_state1_only(){
        let m = build_env("oov_coordination").unwrap();
        let blocker = m.initial()[2];
        let w1 = AgentState::new(blocker.pos, 1);
        let w2 = AgentState::new(blocker.pos, 2);
        assert_eq!(m.pair_reward(0, w1, 0, 2, blocker, 0), -500.0);
        assert_eq!(m.pair_reward(2, blocker, 0, 0, w1, 0), -500.0);
        assert_eq!(m.pair_reward(0, w2, 0, 2, blocker, 0), 0.0);
    }
}

