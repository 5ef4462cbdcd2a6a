"""Miniature goal-conditioned sparse-reward environments with scripted experts.

Three tasks cover continuous control, object interaction, and multi-route
navigation at desk scale:

* ``point-reach``  — 2-D point mass with velocity dynamics reaching a goal
  position; goal re-randomized every episode.
* ``block-push``   — 2-D agent that must push a block onto a target.
* ``four-rooms``   — 9x9 grid with four rooms and doorways; one-hot actions
  relaxed to a 4-dim box so continuous policies can drive it. Several
  shortest routes usually exist, which makes demonstrations multi-modal.

Rewards are sparse: exactly one unit reward on the step that first reaches
the goal, and the episode ends there or at the horizon. Two perturbation
mechanisms induce cascading errors: per-step Gaussian action noise and
per-episode goal randomization. Expert demonstrations can additionally be
degraded with a "shake" phase of random actions before the controller
takes over.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .replay import EpisodeRecord

PIXEL_SIDE = 16


@dataclass(frozen=True)
class EnvSpec:
    """Static description of an environment's spaces and protocol knobs."""

    name: str
    proprio_dim: int
    object_dim: int
    goal_dim: int
    action_dim: int
    action_low: float
    action_high: float
    horizon: int
    success_tol: float
    goal_random: bool = True
    action_noise: float = 0.0
    pixels: bool = False

    @property
    def pixel_dim(self):
        return PIXEL_SIDE * PIXEL_SIDE if self.pixels else 0

    @property
    def obs_dim(self):
        """Flattened observation length: proprio + object + pixels + goal."""
        return self.proprio_dim + self.object_dim + self.pixel_dim + self.goal_dim

    def validate(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.success_tol <= 0:
            raise ValueError("success tolerance must be positive")
        if not np.isfinite([self.action_low, self.action_high]).all():
            raise ValueError("action bounds must be finite")
        if self.action_low >= self.action_high:
            raise ValueError("action_low must be below action_high")


@dataclass
class GoalQuery:
    """Raw goal tensor plus, once a model has seen it, its learned embedding."""

    g_raw: np.ndarray
    g_learned: object = None
    q_embed: object = None


@dataclass
class Observation:
    proprio: np.ndarray
    objects: np.ndarray
    pixels: np.ndarray | None
    goal: GoalQuery

    def vector(self) -> np.ndarray:
        parts = [self.proprio, self.objects]
        if self.pixels is not None:
            parts.append(self.pixels.reshape(-1))
        parts.append(self.goal.g_raw)
        return np.concatenate(parts)


@dataclass
class StepResult:
    observation: Observation
    reward: float
    done: bool
    success: bool


class EnvError(RuntimeError):
    pass


class MiniEnv:
    """Common episode bookkeeping: horizon, sparse reward, done semantics."""

    def __init__(self, spec: EnvSpec, seed):
        spec.validate()
        self.spec = spec
        self.seed = int(seed)
        self.rng = np.random.default_rng(seed)
        self._t = 0
        self._done = True
        self._succeeded = False

    # subclasses implement: _reset_state, _apply_action, _is_success,
    # _observe, expert_action

    def reset(self) -> Observation:
        self._t = 0
        self._done = False
        self._succeeded = False
        self._reset_state()
        return self._observe()

    def step(self, action) -> StepResult:
        if self._done:
            raise EnvError("step() called on a finished episode; call reset()")
        action = np.asarray(action, dtype=np.float64).reshape(self.spec.action_dim)
        action = np.clip(action, self.spec.action_low, self.spec.action_high)
        if self.spec.action_noise > 0:
            action = action + self.spec.action_noise * self.rng.standard_normal(
                self.spec.action_dim
            )
        self._apply_action(action)
        self._t += 1
        success = (not self._succeeded) and self._is_success()
        if success:
            self._succeeded = True
        reward = 1.0 if success else 0.0
        self._done = self._succeeded or self._t >= self.spec.horizon
        return StepResult(self._observe(), reward, self._done, success)

    def _observe(self) -> Observation:
        raise NotImplementedError

    def expert_action(self) -> np.ndarray:
        raise NotImplementedError

    @property
    def goal_raw(self) -> np.ndarray:
        raise NotImplementedError


def _render_blobs(points, intensities, sigma=0.15):
    """Tiny grayscale view: one Gaussian blob per point, clipped to [0, 1]."""
    axis = np.linspace(-1.0, 1.0, PIXEL_SIDE)
    gx, gy = np.meshgrid(axis, axis, indexing="xy")
    img = np.zeros((PIXEL_SIDE, PIXEL_SIDE))
    for (px, py), amp in zip(points, intensities):
        img += amp * np.exp(-((gx - px) ** 2 + (gy - py) ** 2) / (2.0 * sigma**2))
    return np.clip(img, 0.0, 1.0)


class PointReach(MiniEnv):
    """Velocity-integrating point mass in a position-dependent curl field.

        vel' = clip(0.6 * vel + 0.4 * a_exec + curl(pos, vel))
        pos' = pos + 0.12 * vel'

    The curl field cross-couples the velocity components with gains that
    vary over the workspace, so a useful controller must apply nonlinear,
    position-specific compensation while moving. A policy cloned from a
    handful of trajectories compensates correctly only near those
    trajectories; elsewhere its errors curve the path and compound. At
    rest the field vanishes, so holding a reached goal needs no effort.

    Proprioception includes a saturating goal-displacement sensor: the
    displacement at 8x gain, clipped to [-2, 2]. Near the goal it resolves
    the success region sharply against latent reconstruction noise; far
    away it rails and the absolute position blocks carry the signal.
    """

    VEL_KEEP = 0.6
    ACT_GAIN = 0.4
    DT = 0.1
    CURL = 0.35
    VEL_MAX = 1.2
    KP = 4.0
    REL_GAIN = 8.0
    REL_CLIP = 2.0

    def _curl(self, vel):
        cx = np.sin(4.7 * self.pos[0] + 1.1)
        cy = np.sin(5.3 * self.pos[1] - 0.7)
        return self.CURL * np.array([cx * vel[1], cy * vel[0]])

    def _reset_state(self):
        self.pos = self.rng.uniform(-0.85, 0.85, size=2)
        self.vel = np.zeros(2)
        if self.spec.goal_random:
            while True:
                self.goal = self.rng.uniform(-0.85, 0.85, size=2)
                if np.linalg.norm(self.goal - self.pos) >= 0.25:
                    break
        else:
            self.goal = np.array([0.6, 0.6])

    def _apply_action(self, action):
        self.vel = np.clip(
            self.VEL_KEEP * self.vel + self.ACT_GAIN * action + self._curl(self.vel),
            -self.VEL_MAX, self.VEL_MAX,
        )
        self.pos = np.clip(self.pos + self.DT * self.vel, -1.0, 1.0)

    def _is_success(self):
        return float(np.linalg.norm(self.pos - self.goal)) <= self.spec.success_tol

    def _observe(self):
        pixels = None
        if self.spec.pixels:
            pixels = _render_blobs([self.pos, self.goal], [1.0, 0.5])
        return Observation(
            proprio=np.concatenate([
                self.pos, self.vel,
                np.clip(self.REL_GAIN * (self.goal - self.pos),
                        -self.REL_CLIP, self.REL_CLIP),
            ]),
            objects=np.zeros(self.spec.object_dim),
            pixels=pixels,
            goal=GoalQuery(self.goal.copy()),
        )

    def expert_action(self):
        """Velocity servo with exact curl compensation."""
        v_des = np.clip(self.KP * (self.goal - self.pos), -0.9, 0.9)
        a = (v_des - self.VEL_KEEP * self.vel - self._curl(self.vel)) / self.ACT_GAIN
        return np.clip(a, self.spec.action_low, self.spec.action_high)

    @property
    def goal_raw(self):
        return self.goal.copy()


class BlockPush(MiniEnv):
    """Push a block to a target position by walking into it.

    Proprioception carries scaled block and goal displacements alongside
    the agent's own position and last commanded motion.
    """

    DT = 0.1
    CONTACT = 0.14
    REL_GAIN = 8.0
    REL_CLIP = 2.0

    def _reset_state(self):
        self.block = self.rng.uniform(-0.45, 0.45, size=2)
        while True:
            self.pos = self.rng.uniform(-0.8, 0.8, size=2)
            if np.linalg.norm(self.pos - self.block) > self.CONTACT + 0.05:
                break
        if self.spec.goal_random:
            while True:
                self.goal = self.rng.uniform(-0.55, 0.55, size=2)
                if np.linalg.norm(self.goal - self.block) >= 0.3:
                    break
        else:
            self.goal = np.array([0.5, 0.0])
        self.last_disp = np.zeros(2)

    def _apply_action(self, action):
        self.pos = np.clip(self.pos + self.DT * action, -1.0, 1.0)
        self.last_disp = action.copy()
        delta = self.block - self.pos
        dist = float(np.linalg.norm(delta))
        if dist < self.CONTACT:
            direction = delta / dist if dist > 1e-9 else np.array([1.0, 0.0])
            self.block = np.clip(
                self.block + (self.CONTACT - dist) * direction, -1.0, 1.0
            )

    def _is_success(self):
        return float(np.linalg.norm(self.block - self.goal)) <= self.spec.success_tol

    def _observe(self):
        pixels = None
        if self.spec.pixels:
            pixels = _render_blobs([self.pos, self.block, self.goal], [1.0, 0.8, 0.4])
        return Observation(
            proprio=np.concatenate([
                self.pos,
                self.last_disp,
                np.clip(self.REL_GAIN * (self.block - self.pos),
                        -self.REL_CLIP, self.REL_CLIP),
                np.clip(self.REL_GAIN * (self.goal - self.block),
                        -self.REL_CLIP, self.REL_CLIP),
            ]),
            objects=self.block.copy(),
            pixels=pixels,
            goal=GoalQuery(self.goal.copy()),
        )

    def expert_action(self):
        """Orbit to the far side of the block, then drive through its center."""
        to_goal = self.goal - self.block
        dist_goal = float(np.linalg.norm(to_goal))
        if dist_goal <= self.spec.success_tol:
            return np.zeros(2)
        push_dir = to_goal / dist_goal
        rel = self.pos - self.block
        dist = float(np.linalg.norm(rel))
        desired = -push_dir
        cosang = float(np.dot(rel, desired)) / max(dist, 1e-9)
        if cosang > 0.9:
            target = self.block
        else:
            # circle the block (radius safely outside contact) toward the
            # pushing position, turning a bounded angle per step
            ang_rel = float(np.arctan2(rel[1], rel[0]))
            ang_des = float(np.arctan2(desired[1], desired[0]))
            diff = (ang_des - ang_rel + np.pi) % (2.0 * np.pi) - np.pi
            ang = ang_rel + float(np.clip(diff, -0.5, 0.5))
            target = self.block + 0.24 * np.array([np.cos(ang), np.sin(ang)])
        a = (target - self.pos) / self.DT
        return np.clip(a, self.spec.action_low, self.spec.action_high)

    @property
    def goal_raw(self):
        return self.goal.copy()


# four-rooms layout: 9x9, central wall row/column with four doorways
GRID_SIDE = 9
_WALL_ROW = 4
_WALL_COL = 4
_DOORS = {(4, 2), (4, 6), (2, 4), (6, 4)}
# action index -> (row delta, col delta)
GRID_MOVES = np.array([(-1, 0), (1, 0), (0, -1), (0, 1)])


def grid_is_wall(cell):
    r, c = cell
    if not (0 <= r < GRID_SIDE and 0 <= c < GRID_SIDE):
        return True
    if (r, c) in _DOORS:
        return False
    return r == _WALL_ROW or c == _WALL_COL


def grid_free_cells():
    return [
        (r, c)
        for r in range(GRID_SIDE)
        for c in range(GRID_SIDE)
        if not grid_is_wall((r, c))
    ]


def grid_distances(goal):
    """Breadth-first step counts from every free cell to the goal."""
    dist = {goal: 0}
    frontier = [goal]
    while frontier:
        nxt = []
        for cell in frontier:
            for dr, dc in GRID_MOVES:
                nb = (cell[0] + dr, cell[1] + dc)
                if not grid_is_wall(nb) and nb not in dist:
                    dist[nb] = dist[cell] + 1
                    nxt.append(nb)
        frontier = nxt
    return dist


def _one_hot_cell(cell):
    v = np.zeros(GRID_SIDE * GRID_SIDE)
    v[cell[0] * GRID_SIDE + cell[1]] = 1.0
    return v


class FourRooms(MiniEnv):
    """Grid navigation with four rooms; the expert samples among shortest paths.

    One-hot position and goal blocks are scaled so reconstructing them is
    worth the latent's KL budget, and a clipped cell-displacement sensor
    keeps goal attainment sharply resolvable.
    """

    ONE_HOT_GAIN = 2.0
    REL_CLIP = 2.0

    def _reset_state(self):
        free = grid_free_cells()
        self.cell = free[self.rng.integers(len(free))]
        if self.spec.goal_random:
            while True:
                self.goal_cell = free[self.rng.integers(len(free))]
                if self.goal_cell != self.cell:
                    break
        else:
            self.goal_cell = (7, 7)
        self._dist = grid_distances(self.goal_cell)

    def _apply_action(self, action):
        move = GRID_MOVES[int(np.argmax(action))]
        target = (self.cell[0] + int(move[0]), self.cell[1] + int(move[1]))
        if not grid_is_wall(target):
            self.cell = target

    def _is_success(self):
        return self.cell == self.goal_cell

    def _observe(self):
        rel = 0.5 * (np.array(self.goal_cell) - np.array(self.cell))
        return Observation(
            proprio=np.concatenate([
                self.ONE_HOT_GAIN * _one_hot_cell(self.cell),
                np.clip(rel, -self.REL_CLIP, self.REL_CLIP),
            ]),
            objects=np.zeros(self.spec.object_dim),
            pixels=None,
            goal=GoalQuery(self.ONE_HOT_GAIN * _one_hot_cell(self.goal_cell)),
        )

    def expert_action(self):
        """Step along a uniformly sampled shortest path (ties broken by env rng)."""
        here = self._dist.get(self.cell)
        best = []
        for i, (dr, dc) in enumerate(GRID_MOVES):
            nb = (self.cell[0] + dr, self.cell[1] + dc)
            if not grid_is_wall(nb) and self._dist[nb] == here - 1:
                best.append(i)
        if not best:
            return np.zeros(4)
        choice = best[self.rng.integers(len(best))] if len(best) > 1 else best[0]
        a = np.zeros(4)
        a[choice] = 1.0
        return a

    @property
    def goal_raw(self):
        return _one_hot_cell(self.goal_cell)


_REGISTRY = {
    "point-reach": (
        PointReach,
        EnvSpec(
            name="point-reach",
            proprio_dim=6,
            object_dim=2,
            goal_dim=2,
            action_dim=2,
            action_low=-1.0,
            action_high=1.0,
            horizon=60,
            success_tol=0.05,
        ),
    ),
    "block-push": (
        BlockPush,
        EnvSpec(
            name="block-push",
            proprio_dim=8,
            object_dim=2,
            goal_dim=2,
            action_dim=2,
            action_low=-1.0,
            action_high=1.0,
            horizon=100,
            success_tol=0.08,
        ),
    ),
    "four-rooms": (
        FourRooms,
        EnvSpec(
            name="four-rooms",
            proprio_dim=GRID_SIDE * GRID_SIDE + 2,
            object_dim=2,
            goal_dim=GRID_SIDE * GRID_SIDE,
            action_dim=4,
            action_low=0.0,
            action_high=1.0,
            horizon=80,
            success_tol=0.5,
        ),
    ),
}


def available_envs():
    return sorted(_REGISTRY)


def default_spec(name) -> EnvSpec:
    if name not in _REGISTRY:
        raise EnvError(f"unknown environment '{name}'; available: {available_envs()}")
    return _REGISTRY[name][1]


def make_env(spec, seed, **overrides) -> MiniEnv:
    """Build an environment from a spec or registered name.

    Keyword overrides (action_noise, goal_random, pixels, ...) are applied
    on top of the default spec for the name.
    """
    if isinstance(spec, str):
        spec = default_spec(spec)
    if spec.name not in _REGISTRY:
        raise EnvError(f"unknown environment '{spec.name}'; available: {available_envs()}")
    if overrides:
        spec = replace(spec, **{k: v for k, v in overrides.items() if v is not None})
    cls = _REGISTRY[spec.name][0]
    return cls(spec, seed)


def scripted_expert(env: MiniEnv) -> np.ndarray:
    return env.expert_action()


class DemoError(RuntimeError):
    pass


def generate_demonstrations(
    env: MiniEnv, n_episodes, perturbation="none", shake_frac=0.2, max_attempts=100
):
    """Collect successful expert episodes, resampling failures.

    ``perturbation="shake"`` prefixes each episode with random actions for
    ``shake_frac`` of the horizon before the controller takes over, producing
    deliberately inefficient (but still successful) demonstrations.
    """
    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    if perturbation not in ("none", "shake"):
        raise DemoError(f"unknown perturbation '{perturbation}'")
    shake_steps = int(round(shake_frac * env.spec.horizon)) if perturbation == "shake" else 0
    records = []
    for _ in range(n_episodes):
        record = None
        for _attempt in range(max_attempts):
            record = _run_expert_episode(env, shake_steps)
            if record.success:
                break
            record = None
        if record is None:
            raise DemoError(
                f"expert failed {max_attempts} attempts on '{env.spec.name}' "
                f"with perturbation '{perturbation}'"
            )
        records.append(record)
    return records


def _run_expert_episode(env: MiniEnv, shake_steps):
    obs0 = env.reset()
    observations, actions, rewards, dones = [], [], [], []
    t = 0
    done = False
    success = False
    while not done:
        if t < shake_steps:
            action = env.rng.uniform(
                env.spec.action_low, env.spec.action_high, size=env.spec.action_dim
            )
        else:
            action = env.expert_action()
        result = env.step(action)
        actions.append(np.asarray(action, dtype=np.float64))
        observations.append(result.observation.vector())
        rewards.append(result.reward)
        dones.append(result.done)
        success = success or result.success
        done = result.done
        t += 1
    return EpisodeRecord(
        env_name=env.spec.name,
        seed=env.seed,
        first_observation=obs0.vector(),
        observations=np.asarray(observations),
        actions=np.asarray(actions),
        rewards=np.asarray(rewards),
        dones=np.asarray(dones, dtype=bool),
        success=bool(success),
        expert=True,
        goal=np.asarray(env.goal_raw, dtype=np.float64),
    )
