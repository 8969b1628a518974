//! Built-in tasks and demonstration generators.
//!
//! * A 5×5 grid world: start in the lower-left cell, goal in the upper-right
//!   cell, four deterministic moves, off-grid moves stay in place.
//! * Mountain car with the classic dynamics, discretized on a 20×20
//!   position/velocity grid.
//!
//! Demonstrations come in three kinds: a competent expert, the expert's
//! action sequence with every action flipped (re-simulated from the same
//! start so states stay dynamically consistent), and uniform-random play.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{ActionId, Demonstration, Discretizer, StateId, Step, TaskSpec};
use crate::error::{Error, Result};
use crate::maxent::Policy;

pub const UP: usize = 0;
pub const DOWN: usize = 1;
pub const LEFT: usize = 2;
pub const RIGHT: usize = 3;

pub const PUSH_LEFT: usize = 0;
pub const NO_OP: usize = 1;
pub const PUSH_RIGHT: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DemoKind {
    Correct,
    Adversarial,
    Random,
}

impl fmt::Display for DemoKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DemoKind::Correct => "correct",
            DemoKind::Adversarial => "adversarial",
            DemoKind::Random => "random",
        })
    }
}

impl FromStr for DemoKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "correct" => Ok(DemoKind::Correct),
            "adversarial" => Ok(DemoKind::Adversarial),
            "random" => Ok(DemoKind::Random),
            other => Err(format!("unknown demo kind {other:?}")),
        }
    }
}

/// Shared simulator surface for both tasks.
trait Dynamics {
    type State: Clone;

    fn start(&self, rng: &mut ChaCha8Rng) -> Self::State;
    /// Next state and whether it is the goal.
    fn step(&self, state: &Self::State, a: usize) -> (Self::State, bool);
    fn observe(&self, state: &Self::State) -> StateId;
    fn raw(&self, state: &Self::State) -> Option<Vec<f64>>;
    fn n_actions(&self) -> usize;
    fn flip(&self, a: usize) -> usize;
    fn max_steps(&self) -> usize;
}

struct Trajectory {
    steps: Vec<Step>,
    raw: Vec<Vec<f64>>,
    reached: bool,
}

/// Runs from `start` until the goal or `max_steps`; `policy` sees the
/// current state and the step index.
fn simulate<D: Dynamics>(
    env: &D,
    start: D::State,
    max_steps: usize,
    mut policy: impl FnMut(&D::State, usize) -> usize,
) -> Trajectory {
    let mut state = start;
    let mut traj = Trajectory {
        steps: Vec::new(),
        raw: Vec::new(),
        reached: false,
    };
    for t in 0..max_steps {
        let a = policy(&state, t);
        traj.steps.push(Step {
            s: env.observe(&state),
            a: ActionId(a),
        });
        if let Some(x) = env.raw(&state) {
            traj.raw.push(x);
        }
        let (next, done) = env.step(&state, a);
        state = next;
        if done {
            traj.reached = true;
            break;
        }
    }
    traj
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridWorld {
    pub width: usize,
    pub height: usize,
    /// Episode cap for random demos and rollouts.
    pub max_steps: usize,
}

impl Default for GridWorld {
    fn default() -> Self {
        GridWorld {
            width: 5,
            height: 5,
            max_steps: 50,
        }
    }
}

impl GridWorld {
    pub fn n_states(&self) -> usize {
        self.width * self.height
    }

    /// Cell `(x, y)` with `y = 0` the bottom row.
    pub fn state(&self, x: usize, y: usize) -> StateId {
        StateId(y * self.width + x)
    }

    pub fn coords(&self, s: StateId) -> (usize, usize) {
        (s.0 % self.width, s.0 / self.width)
    }

    pub fn start(&self) -> StateId {
        self.state(0, 0)
    }

    pub fn goal(&self) -> StateId {
        self.state(self.width - 1, self.height - 1)
    }

    pub fn task_spec(&self) -> TaskSpec {
        TaskSpec::tabular("gridworld", self.n_states(), 4).expect("grid dimensions are positive")
    }

    /// Deterministic successor; the goal is absorbing.
    pub fn next_state(&self, s: StateId, a: ActionId) -> StateId {
        if s == self.goal() {
            return s;
        }
        let (x, y) = self.coords(s);
        let (x, y) = match a.0 {
            UP => (x, (y + 1).min(self.height - 1)),
            DOWN => (x, y.saturating_sub(1)),
            LEFT => (x.saturating_sub(1), y),
            RIGHT => ((x + 1).min(self.width - 1), y),
            _ => (x, y),
        };
        self.state(x, y)
    }

    fn distance_to_goal(&self, s: StateId) -> usize {
        let (x, y) = self.coords(s);
        (self.width - 1 - x) + (self.height - 1 - y)
    }

    /// Actions that strictly shorten the Manhattan distance to the goal; all
    /// actions at the goal itself.
    pub fn optimal_actions(&self, s: StateId) -> Vec<ActionId> {
        if s == self.goal() {
            return (0..4).map(ActionId).collect();
        }
        let d = self.distance_to_goal(s);
        (0..4)
            .map(ActionId)
            .filter(|&a| self.distance_to_goal(self.next_state(s, a)) < d)
            .collect()
    }

    /// Every monotone up/right path from start to goal, in lexicographic
    /// order of action indices.
    pub fn monotone_paths(&self) -> Vec<Vec<usize>> {
        fn extend(ups: usize, rights: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if ups == 0 && rights == 0 {
                out.push(prefix.clone());
                return;
            }
            if ups > 0 {
                prefix.push(UP);
                extend(ups - 1, rights, prefix, out);
                prefix.pop();
            }
            if rights > 0 {
                prefix.push(RIGHT);
                extend(ups, rights - 1, prefix, out);
                prefix.pop();
            }
        }
        let mut out = Vec::new();
        extend(self.height - 1, self.width - 1, &mut Vec::new(), &mut out);
        out
    }

    /// Expert path for a seed. Seeds come in mirror pairs: `2k` follows the
    /// k-th monotone path and `2k + 1` its reflection across the diagonal
    /// (up and right swapped).
    pub fn expert_path(&self, seed: u64) -> Vec<usize> {
        let paths = self.monotone_paths();
        let path = &paths[(seed / 2) as usize % paths.len()];
        if seed.is_multiple_of(2) {
            path.clone()
        } else {
            path.iter()
                .map(|&a| if a == UP { RIGHT } else { UP })
                .collect()
        }
    }
}

impl Dynamics for GridWorld {
    type State = StateId;

    fn start(&self, _rng: &mut ChaCha8Rng) -> StateId {
        GridWorld::start(self)
    }

    fn step(&self, state: &StateId, a: usize) -> (StateId, bool) {
        let next = self.next_state(*state, ActionId(a));
        (next, next == self.goal())
    }

    fn observe(&self, state: &StateId) -> StateId {
        *state
    }

    fn raw(&self, _state: &StateId) -> Option<Vec<f64>> {
        None
    }

    fn n_actions(&self) -> usize {
        4
    }

    fn flip(&self, a: usize) -> usize {
        match a {
            UP => DOWN,
            DOWN => UP,
            LEFT => RIGHT,
            RIGHT => LEFT,
            other => other,
        }
    }

    fn max_steps(&self) -> usize {
        self.max_steps
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CarState {
    pub position: f64,
    pub velocity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MountainCar {
    pub min_position: f64,
    pub max_position: f64,
    pub max_speed: f64,
    pub goal_position: f64,
    pub force: f64,
    pub gravity: f64,
    pub max_steps: usize,
    /// Position × velocity bins of the discretized task.
    pub bins: [usize; 2],
}

impl Default for MountainCar {
    fn default() -> Self {
        MountainCar {
            min_position: -1.2,
            max_position: 0.6,
            max_speed: 0.07,
            goal_position: 0.5,
            force: 0.001,
            gravity: 0.0025,
            max_steps: 200,
            bins: [20, 20],
        }
    }
}

impl MountainCar {
    pub fn with_bins(bins: [usize; 2]) -> Self {
        MountainCar {
            bins,
            ..Default::default()
        }
    }

    pub fn discretizer(&self) -> Discretizer {
        Discretizer::Grid {
            bins: self.bins.to_vec(),
            low: vec![self.min_position, -self.max_speed],
            high: vec![self.max_position, self.max_speed],
        }
    }

    pub fn task_spec(&self) -> TaskSpec {
        TaskSpec::new("mountaincar", 3, self.discretizer()).expect("valid mountain car bins")
    }

    pub fn transition(&self, state: CarState, a: usize) -> CarState {
        let push = a as f64 - 1.0;
        let velocity = (state.velocity + push * self.force
            - self.gravity * (3.0 * state.position).cos())
        .clamp(-self.max_speed, self.max_speed);
        let position = (state.position + velocity).clamp(self.min_position, self.max_position);
        let velocity = if position <= self.min_position && velocity < 0.0 {
            0.0
        } else {
            velocity
        };
        CarState { position, velocity }
    }

    pub fn initial_state(&self, rng: &mut impl Rng) -> CarState {
        CarState {
            position: rng.gen_range(-0.6..-0.4),
            velocity: 0.0,
        }
    }

    /// Bang-bang energy pumping: push along the current velocity.
    pub fn expert_action(&self, state: &CarState) -> usize {
        if state.velocity >= 0.0 {
            PUSH_RIGHT
        } else {
            PUSH_LEFT
        }
    }
}

impl Dynamics for MountainCar {
    type State = CarState;

    fn start(&self, rng: &mut ChaCha8Rng) -> CarState {
        self.initial_state(rng)
    }

    fn step(&self, state: &CarState, a: usize) -> (CarState, bool) {
        let next = self.transition(*state, a);
        (next, next.position >= self.goal_position)
    }

    fn observe(&self, state: &CarState) -> StateId {
        self.discretizer()
            .discretize(&[state.position, state.velocity])
            .expect("car state is two-dimensional and finite")
    }

    fn raw(&self, state: &CarState) -> Option<Vec<f64>> {
        Some(vec![state.position, state.velocity])
    }

    fn n_actions(&self) -> usize {
        3
    }

    fn flip(&self, a: usize) -> usize {
        match a {
            PUSH_LEFT => PUSH_RIGHT,
            PUSH_RIGHT => PUSH_LEFT,
            other => other,
        }
    }

    fn max_steps(&self) -> usize {
        self.max_steps
    }
}

/// One of the built-in evaluation tasks.
#[derive(Debug, Clone, PartialEq)]
pub enum Env {
    GridWorld(GridWorld),
    MountainCar(MountainCar),
}

impl Env {
    pub fn gridworld() -> Self {
        Env::GridWorld(GridWorld::default())
    }

    pub fn mountain_car() -> Self {
        Env::MountainCar(MountainCar::default())
    }

    pub fn name(&self) -> &'static str {
        match self {
            Env::GridWorld(_) => "gridworld",
            Env::MountainCar(_) => "mountaincar",
        }
    }

    pub fn task_spec(&self) -> TaskSpec {
        match self {
            Env::GridWorld(g) => g.task_spec(),
            Env::MountainCar(m) => m.task_spec(),
        }
    }

    pub fn max_steps(&self) -> usize {
        match self {
            Env::GridWorld(g) => g.max_steps,
            Env::MountainCar(m) => m.max_steps,
        }
    }

    /// Designated adversarial replacement of an action; an involution.
    pub fn flip(&self, a: ActionId) -> ActionId {
        ActionId(match self {
            Env::GridWorld(g) => g.flip(a.0),
            Env::MountainCar(m) => m.flip(a.0),
        })
    }

    /// Looks a task up by the name stored in its [`TaskSpec`].
    pub fn from_task(task: &TaskSpec) -> Result<Self> {
        match task.name.as_str() {
            "gridworld" => Ok(Env::gridworld()),
            "mountaincar" => match &task.discretizer {
                Discretizer::Grid { bins, .. } if bins.len() == 2 => {
                    Ok(Env::MountainCar(MountainCar::with_bins([bins[0], bins[1]])))
                }
                _ => Err(Error::InvalidTask("mountaincar needs a 2-D grid discretizer".into())),
            },
            other => Err(Error::InvalidTask(format!("unknown task {other:?}"))),
        }
    }
}

impl FromStr for Env {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "gridworld" => Ok(Env::gridworld()),
            "mountaincar" => Ok(Env::mountain_car()),
            other => Err(format!("unknown environment {other:?}")),
        }
    }
}

fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn into_demo(id: String, traj: Trajectory, keep_raw: bool) -> Demonstration {
    Demonstration {
        demo_id: id,
        steps: traj.steps,
        raw: keep_raw.then_some(traj.raw),
    }
}

fn expert_actions<D: Dynamics>(
    env: &D,
    start: D::State,
    mut expert: impl FnMut(&D::State, usize) -> usize,
) -> Result<(Trajectory, Vec<usize>)> {
    let traj = simulate(env, start, env.max_steps(), &mut expert);
    if !traj.reached {
        return Err(Error::ExpertFailed(format!(
            "expert did not reach the goal within {} steps",
            env.max_steps()
        )));
    }
    let actions = traj.steps.iter().map(|s| s.a.0).collect();
    Ok((traj, actions))
}

fn generate<D: Dynamics>(
    env: &D,
    name: &str,
    kind: DemoKind,
    seed: u64,
    expert: impl FnMut(&D::State, usize) -> usize,
) -> Result<Demonstration> {
    let mut rng = rng_for(seed);
    let start = env.start(&mut rng);
    let id = format!("{name}-{kind}-{seed}");
    let keep_raw = env.raw(&start).is_some();
    let traj = match kind {
        DemoKind::Correct => expert_actions(env, start, expert)?.0,
        DemoKind::Adversarial => {
            let (_, actions) = expert_actions(env, start.clone(), expert)?;
            let flipped: Vec<usize> = actions.iter().map(|&a| env.flip(a)).collect();
            simulate(env, start, flipped.len(), |_, t| flipped[t])
        }
        DemoKind::Random => {
            let n_a = env.n_actions();
            simulate(env, start, env.max_steps(), |_, _| rng.gen_range(0..n_a))
        }
    };
    Ok(into_demo(id, traj, keep_raw))
}

/// Deterministic per `(env, kind, seed)`. Demo ids are
/// `"{env}-{kind}-{seed}"`.
pub fn gen_demo(env: &Env, kind: DemoKind, seed: u64) -> Result<Demonstration> {
    match env {
        Env::GridWorld(g) => {
            let path = g.expert_path(seed);
            generate(g, "gridworld", kind, seed, |_, t| path[t])
        }
        Env::MountainCar(m) => {
            generate(m, "mountaincar", kind, seed, |s, _| m.expert_action(s))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub steps: Vec<Step>,
    pub reached_goal: bool,
    /// Grid: 1 on reaching the goal, else 0. Mountain car: minus the number
    /// of steps taken.
    pub ret: f64,
}

/// Samples actions from `policy` with a generator seeded by `seed`.
pub fn rollout(policy: &Policy, env: &Env, seed: u64, max_steps: usize) -> Result<Rollout> {
    let task = env.task_spec();
    if policy.n_states() != task.n_states || policy.n_actions() != task.n_actions {
        return Err(Error::DimensionMismatch {
            context: "rollout policy vs task",
            expected: task.n_states * task.n_actions,
            got: policy.n_states() * policy.n_actions(),
        });
    }
    let mut rng = rng_for(seed);
    let traj = match env {
        Env::GridWorld(g) => {
            let start = Dynamics::start(g, &mut rng);
            simulate(g, start, max_steps, |s, _| policy.sample(s.0, &mut rng))
        }
        Env::MountainCar(m) => {
            let start = m.start(&mut rng);
            simulate(m, start, max_steps, |s, _| policy.sample(m.observe(s).0, &mut rng))
        }
    };
    let ret = match env {
        Env::GridWorld(_) => {
            if traj.reached {
                1.0
            } else {
                0.0
            }
        }
        Env::MountainCar(_) => -(traj.steps.len() as f64),
    };
    Ok(Rollout {
        steps: traj.steps,
        reached_goal: traj.reached,
        ret,
    })
}
