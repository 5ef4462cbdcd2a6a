"""Episode storage, sequence sampling, and the NDJSON on-disk format.

The buffer pins expert episodes (they are never evicted) and oversamples
them during sequence draws so five demonstrations stay influential as the
agent fills the buffer with its own experience. Sampled windows never
cross episode boundaries; masks mark which steps belong to successful
episodes (success mask), which come from the expert (expert mask), and
which are padding past the episode end (validity mask).

Conventions: ``observations[t]`` is the observation *after* executing
``actions[t]``; ``rewards[t]`` is the sparse reward produced by that same
action; ``first_observation`` is the reset observation.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass

import numpy as np

SCHEMA_VERSION = 1


class ReplayError(RuntimeError):
    pass


@dataclass
class EpisodeRecord:
    """One trajectory with episode-level success/expert flags."""

    env_name: str
    seed: int
    first_observation: np.ndarray
    observations: np.ndarray  # (L, obs_dim)
    actions: np.ndarray  # (L, action_dim)
    rewards: np.ndarray  # (L,)
    dones: np.ndarray  # (L,)
    success: bool
    expert: bool
    goal: np.ndarray

    @property
    def length(self):
        return len(self.actions)

    def validate(self):
        L = self.length
        for name in ("observations", "rewards", "dones"):
            arr = getattr(self, name)
            if len(arr) != L:
                raise ReplayError(
                    f"per-step array '{name}' has length {len(arr)}, expected {L}"
                )
        if L < 1:
            raise ReplayError("episode must contain at least one step")
        if self.expert and not self.success:
            raise ReplayError("expert episodes must be successful")
        for name in ("first_observation", "observations", "actions", "rewards", "goal"):
            if not np.isfinite(np.asarray(getattr(self, name), dtype=np.float64)).all():
                raise ReplayError(f"non-finite entries in '{name}'")
        return self


@dataclass
class SequenceBatch:
    """Fixed-length training windows with success/expert/validity masks.

    ``action_in[b, j]`` is the action that produced ``obs[b, j]``;
    ``next_action[b, j]`` is the action the behavior source took *from* that
    state (used for expert matching), valid where ``next_action_valid`` is 1.
    """

    obs: np.ndarray  # (B, K, obs_dim)
    action_in: np.ndarray  # (B, K, action_dim)
    reward: np.ndarray  # (B, K)
    next_action: np.ndarray  # (B, K, action_dim)
    next_action_valid: np.ndarray  # (B, K)
    success_mask: np.ndarray  # (B, K) {0,1}
    expert_mask: np.ndarray  # (B, K) {0,1}
    valid: np.ndarray  # (B, K) {0,1}
    goal: np.ndarray  # (B, goal_dim)
    episode_ids: np.ndarray  # (B, K) source episode index, -1 on padding

    @property
    def batch_size(self):
        return self.obs.shape[0]

    @property
    def length(self):
        return self.obs.shape[1]


class ReplayBuffer:
    """FIFO episode store with pinned expert episodes."""

    def __init__(self, capacity=1000):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._expert = []
        self._agent = deque()
        self._next_id = 0

    def __len__(self):
        return len(self._expert) + len(self._agent)

    @property
    def n_expert(self):
        return len(self._expert)

    def episodes(self):
        return [rec for _, rec in self._expert] + [rec for _, rec in self._agent]

    def append(self, record: EpisodeRecord):
        record.validate()
        entry = (self._next_id, record)
        self._next_id += 1
        if record.expert:
            self._expert.append(entry)
        else:
            self._agent.append(entry)
            while len(self._expert) + len(self._agent) > self.capacity:
                self._agent.popleft()
        return self

    def sample_sequences(self, batch_size, length, rng, expert_ratio=0.25) -> SequenceBatch:
        """Uniform episode/offset windows with expert oversampling.

        Each batch slot draws an expert episode with probability
        ``expert_ratio`` (while any exist; always, if only experts exist),
        otherwise a uniform agent episode. Windows never span two episodes;
        short episodes are zero-padded with validity 0.
        """
        if batch_size < 1 or length < 1:
            raise ValueError("batch_size and length must be >= 1")
        if len(self) == 0:
            raise ReplayError("cannot sample from an empty buffer")
        obs_dim = self.episodes()[0].observations.shape[1]
        act_dim = self.episodes()[0].actions.shape[1]
        goal_dim = len(self.episodes()[0].goal)

        obs = np.zeros((batch_size, length, obs_dim), dtype=np.float32)
        action_in = np.zeros((batch_size, length, act_dim), dtype=np.float32)
        reward = np.zeros((batch_size, length), dtype=np.float32)
        next_action = np.zeros((batch_size, length, act_dim), dtype=np.float32)
        next_valid = np.zeros((batch_size, length), dtype=np.float32)
        m = np.zeros((batch_size, length), dtype=np.float32)
        e = np.zeros((batch_size, length), dtype=np.float32)
        valid = np.zeros((batch_size, length), dtype=np.float32)
        goal = np.zeros((batch_size, goal_dim), dtype=np.float32)
        episode_ids = np.full((batch_size, length), -1, dtype=np.int64)

        for b in range(batch_size):
            if self._expert and (not self._agent or rng.random() < expert_ratio):
                eid, rec = self._expert[rng.integers(len(self._expert))]
            else:
                eid, rec = self._agent[rng.integers(len(self._agent))]
            L = rec.length
            start = int(rng.integers(0, max(L - length, 0) + 1))
            span = min(length, L - start)
            sl = slice(start, start + span)
            obs[b, :span] = rec.observations[sl]
            action_in[b, :span] = rec.actions[sl]
            reward[b, :span] = rec.rewards[sl]
            n_next = min(span, L - start - 1)
            if n_next > 0:
                next_action[b, :n_next] = rec.actions[start + 1 : start + 1 + n_next]
                next_valid[b, :n_next] = 1.0
            valid[b, :span] = 1.0
            m[b, :span] = 1.0 if rec.success else 0.0
            e[b, :span] = 1.0 if rec.expert else 0.0
            goal[b] = rec.goal
            episode_ids[b, :span] = eid
        return SequenceBatch(
            obs, action_in, reward, next_action, next_valid, m, e, valid, goal, episode_ids
        )


# -- NDJSON persistence -------------------------------------------------


def _episode_to_json(rec: EpisodeRecord):
    return {
        "schema": SCHEMA_VERSION,
        "env": rec.env_name,
        "seed": rec.seed,
        "layout": {
            "obs_dim": rec.observations.shape[1],
            "action_dim": rec.actions.shape[1],
            "goal_dim": len(rec.goal),
        },
        "first_observation": rec.first_observation.tolist(),
        "observations": rec.observations.tolist(),
        "actions": rec.actions.tolist(),
        "rewards": rec.rewards.tolist(),
        "dones": [bool(d) for d in rec.dones],
        "success": bool(rec.success),
        "expert": bool(rec.expert),
        "goal": rec.goal.tolist(),
    }


def _episode_from_json(obj) -> EpisodeRecord:
    if obj.get("schema") != SCHEMA_VERSION:
        raise ReplayError(f"unsupported episode schema {obj.get('schema')!r}")
    return EpisodeRecord(
        env_name=obj["env"],
        seed=int(obj["seed"]),
        first_observation=np.asarray(obj["first_observation"], dtype=np.float64),
        observations=np.asarray(obj["observations"], dtype=np.float64),
        actions=np.asarray(obj["actions"], dtype=np.float64),
        rewards=np.asarray(obj["rewards"], dtype=np.float64),
        dones=np.asarray(obj["dones"], dtype=bool),
        success=bool(obj["success"]),
        expert=bool(obj["expert"]),
        goal=np.asarray(obj["goal"], dtype=np.float64),
    ).validate()


def save_demonstrations(path, records, env_name=None, perturbation="none"):
    """Write a header line plus one episode per line.

    Floats serialize through repr, which round-trips IEEE doubles exactly,
    so load(save(x)) is bit-identical.
    """
    header = {
        "kind": "demo_header",
        "schema": SCHEMA_VERSION,
        "env": env_name or (records[0].env_name if records else None),
        "episodes": len(records),
        "perturbation": perturbation,
    }
    with open(path, "w", encoding="utf-8") as f:
        f.write(json.dumps(header) + "\n")
        for rec in records:
            f.write(json.dumps(_episode_to_json(rec)) + "\n")


def load_demonstrations(path):
    """Read (header, records) back from an NDJSON demonstration file."""
    with open(path, "r", encoding="utf-8") as f:
        lines = [ln for ln in f.read().splitlines() if ln.strip()]
    if not lines:
        raise ReplayError(f"empty demonstration file: {path}")
    header = json.loads(lines[0])
    if header.get("kind") != "demo_header":
        raise ReplayError("demonstration file is missing its header line")
    if header.get("schema") != SCHEMA_VERSION:
        raise ReplayError(f"unsupported demo schema {header.get('schema')!r}")
    records = [_episode_from_json(json.loads(ln)) for ln in lines[1:]]
    return header, records


def save_buffer(path, buffer: ReplayBuffer):
    """Snapshot the whole buffer: metadata header plus episode lines."""
    episodes = buffer.episodes()
    header = {
        "kind": "buffer_header",
        "schema": SCHEMA_VERSION,
        "capacity": buffer.capacity,
        "episodes": len(episodes),
        "expert_episodes": buffer.n_expert,
    }
    with open(path, "w", encoding="utf-8") as f:
        f.write(json.dumps(header) + "\n")
        for rec in episodes:
            f.write(json.dumps(_episode_to_json(rec)) + "\n")


def load_buffer(path) -> ReplayBuffer:
    with open(path, "r", encoding="utf-8") as f:
        lines = [ln for ln in f.read().splitlines() if ln.strip()]
    header = json.loads(lines[0])
    if header.get("kind") != "buffer_header":
        raise ReplayError("buffer snapshot is missing its header line")
    buf = ReplayBuffer(capacity=header["capacity"])
    for ln in lines[1:]:
        buf.append(_episode_from_json(json.loads(ln)))
    return buf
