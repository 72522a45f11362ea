"""Networked multi-agent environments.

An environment couples N agents through a shared finite state and a joint
continuous action.  Each agent i picks a real vector a^i; the tuple
``a = (a^1, ..., a^N)`` drives the transition kernel and gives every agent a
private reward r^i(s, a).  The quantity the team optimizes is the globally
averaged reward ``Rbar(s, a) = mean_i r^i(s, a)``.

Two concrete environments are provided:

* :class:`ContinuousBandit` — a single dummy state; all agents share the
  quadratic reward ``-(sum_i a^i - target)^T C (sum_i a^i - target)``, so the
  optimum is any joint action whose components sum to ``target``.
* :class:`FiniteTestMdp` — a small fully-specified MDP with smooth
  action-dependent transitions and bounded smooth rewards, built to make
  every closed-form quantity (stationary distribution, average reward, exact
  policy gradient) computable by the oracle module.

Joint actions are lists of 1-D float arrays, one per agent (agents may have
different action dimensions).
"""

import abc
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch

__all__ = [
    "NetworkedMdp",
    "ContinuousBandit",
    "FiniteTestMdp",
    "bandit_reward",
    "bandit_reward_grad",
    "make_bandit",
    "make_finite_mdp",
    "sample_transition",
    "pack_actions",
    "unpack_actions",
]


def pack_actions(actions) -> np.ndarray:
    """Concatenate per-agent action vectors into one flat vector (agent order)."""
    return np.concatenate([np.asarray(a, dtype=float).ravel() for a in actions])


def unpack_actions(flat, dims) -> list:
    """Split a flat joint-action vector back into per-agent vectors."""
    flat = np.asarray(flat, dtype=float).ravel()
    if flat.size != sum(dims):
        raise DimensionMismatch(f"flat action has {flat.size} entries, expected {sum(dims)}")
    out = []
    k = 0
    for d in dims:
        out.append(flat[k : k + d].copy())
        k += d
    return out


class NetworkedMdp(abc.ABC):
    """Interface every environment implements.

    Attributes
    ----------
    state_count : int
        Number of states (>= 1).
    agent_count : int
        Number of agents N.
    action_dims : tuple of int
        Per-agent action dimensions (n_1, ..., n_N).
    """

    state_count: int
    agent_count: int
    action_dims: tuple

    @abc.abstractmethod
    def transition_prob(self, s: int, actions, s_next: int) -> float:
        """P(s_next | s, a)."""

    @abc.abstractmethod
    def local_reward(self, i: int, s: int, actions) -> float:
        """Agent i's private reward r^i(s, a)."""

    def mean_reward(self, s: int, actions) -> float:
        """Globally averaged reward Rbar(s, a) = mean_i r^i(s, a)."""
        n = self.agent_count
        return float(sum(self.local_reward(i, s, actions) for i in range(n)) / n)

    def local_rewards(self, s: int, actions) -> np.ndarray:
        """All agents' rewards at once, shape (N,)."""
        return np.array([self.local_reward(i, s, actions) for i in range(self.agent_count)])

    def reward_grad_action(self, i: int, s: int, actions) -> np.ndarray:
        """Gradient of the averaged reward w.r.t. agent i's action, shape (n_i,)."""
        raise NotImplementedError("this environment does not expose reward gradients")

    def transition_row(self, s: int, actions) -> np.ndarray:
        """Distribution over next states, shape (state_count,)."""
        return np.array(
            [self.transition_prob(s, actions, sp) for sp in range(self.state_count)]
        )

    def transition(self, s: int, actions, rng: np.random.Generator) -> int:
        """Sample the next state."""
        return sample_transition(self, s, actions, rng)

    def validate_actions(self, actions) -> list:
        """Coerce and shape-check a joint action; returns per-agent arrays."""
        if len(actions) != self.agent_count:
            raise DimensionMismatch(
                f"joint action has {len(actions)} components, expected {self.agent_count}"
            )
        out = []
        for i, a in enumerate(actions):
            a = np.atleast_1d(np.asarray(a, dtype=float))
            if a.shape != (self.action_dims[i],):
                raise DimensionMismatch(
                    f"agent {i} action has shape {a.shape}, expected ({self.action_dims[i]},)"
                )
            out.append(a)
        return out


def sample_transition(mdp: NetworkedMdp, s: int, actions, rng: np.random.Generator) -> int:
    """Draw s' ~ P(. | s, a) by inverse-CDF sampling on the transition row."""
    if mdp.state_count == 1:
        return 0
    row = mdp.transition_row(s, actions)
    cdf = np.cumsum(row)
    u = rng.random() * cdf[-1]
    return int(min(np.searchsorted(cdf, u, side="right"), mdp.state_count - 1))


# ---------------------------------------------------------------------------
# Continuous bandit
# ---------------------------------------------------------------------------


@dataclass
class ContinuousBandit(NetworkedMdp):
    """Single-state team problem with a shared quadratic reward.

    Every agent receives ``r^i(a) = -(sum_j a^j - target)^T cost (sum_j a^j - target)``.
    ``cost`` must be symmetric positive semi-definite for the reward to be a
    sensible (concave) objective; :func:`make_bandit` builds one with
    eigenvalues in {0.1, 1}.
    """

    agent_count: int
    action_dim: int
    cost: np.ndarray
    target: np.ndarray

    state_count: int = field(init=False, default=1)

    def __post_init__(self):
        self.cost = np.asarray(self.cost, dtype=float)
        self.target = np.asarray(self.target, dtype=float).ravel()
        m = self.action_dim
        if self.agent_count < 1 or m < 1:
            raise ValueError("need at least one agent and one action dimension")
        if self.cost.shape != (m, m):
            raise DimensionMismatch(f"cost matrix shape {self.cost.shape}, expected {(m, m)}")
        if self.target.shape != (m,):
            raise DimensionMismatch(f"target shape {self.target.shape}, expected ({m},)")
        if not np.all(np.isfinite(self.cost)) or not np.all(np.isfinite(self.target)):
            raise ValueError("cost/target contain non-finite entries")
        if np.max(np.abs(self.cost - self.cost.T)) > 1e-10:
            raise ValueError("cost matrix must be symmetric")

    @property
    def action_dims(self) -> tuple:
        return (self.action_dim,) * self.agent_count

    def action_sum(self, actions) -> np.ndarray:
        if len(actions) != self.agent_count:
            raise DimensionMismatch(
                f"joint action has {len(actions)} components, expected {self.agent_count}"
            )
        total = np.zeros(self.action_dim)
        for a in actions:
            a = np.asarray(a, dtype=float).ravel()
            if a.shape != (self.action_dim,):
                raise DimensionMismatch(
                    f"action has shape {a.shape}, expected ({self.action_dim},)"
                )
            total += a
        return total

    def transition_prob(self, s, actions, s_next) -> float:
        return 1.0 if s_next == 0 else 0.0

    def transition(self, s, actions, rng) -> int:
        return 0

    def local_reward(self, i, s, actions) -> float:
        return bandit_reward(self, actions)

    def mean_reward(self, s, actions) -> float:
        return bandit_reward(self, actions)

    def mean_reward_batch(self, s, flat_actions: np.ndarray) -> np.ndarray:
        """Vectorized Rbar over a (T, N*m) batch of flat joint actions."""
        flat_actions = np.asarray(flat_actions, dtype=float)
        t, total = flat_actions.shape
        if total != self.agent_count * self.action_dim:
            raise DimensionMismatch("flat action batch has wrong width")
        sums = flat_actions.reshape(t, self.agent_count, self.action_dim).sum(axis=1)
        dev = sums - self.target
        return -np.einsum("tj,jk,tk->t", dev, self.cost, dev)

    def local_rewards(self, s, actions) -> np.ndarray:
        return np.full(self.agent_count, bandit_reward(self, actions))

    def reward_grad_action(self, i, s, actions) -> np.ndarray:
        return bandit_reward_grad(self, actions, i)

    def transition_grad_action(self, i, s, actions) -> np.ndarray:
        return np.zeros((self.action_dim, 1))


def bandit_reward(env: ContinuousBandit, actions) -> float:
    """Shared reward: negative quadratic distance of the action sum from target."""
    dev = env.action_sum(actions) - env.target
    return float(-(dev @ env.cost @ dev))


def bandit_reward_grad(env: ContinuousBandit, actions, i: int) -> np.ndarray:
    """d Rbar / d a^i = -2 C (sum_j a^j - target); identical for every agent."""
    if not 0 <= i < env.agent_count:
        raise IndexError(f"agent index {i} out of range")
    dev = env.action_sum(actions) - env.target
    return -2.0 * (env.cost @ dev)


def make_bandit(agents: int, action_dim: int, seed: int = 0) -> ContinuousBandit:
    """Standard bandit instance: C = Q^T diag(e) Q with e_i in {0.1, 1}.

    Q is the orthogonal factor of a seeded Gaussian matrix and the target is
    the all-fours vector, so the optimal cost is exactly zero at any joint
    action summing to the target.
    """
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((action_dim, action_dim))
    q, r = np.linalg.qr(g)
    # Fix the sign convention so the factor is unique given g.
    q = q * np.sign(np.where(np.diag(r) == 0, 1.0, np.diag(r)))
    eigs = rng.choice([0.1, 1.0], size=action_dim)
    cost = q.T @ np.diag(eigs) @ q
    cost = 0.5 * (cost + cost.T)
    target = np.full(action_dim, 4.0)
    return ContinuousBandit(agents, action_dim, cost, target)


# ---------------------------------------------------------------------------
# Finite test MDP
# ---------------------------------------------------------------------------


def _sigmoid(u: float) -> float:
    # Clamp to avoid overflow in exp for extreme action sums.
    u = np.clip(u, -60.0, 60.0)
    return 1.0 / (1.0 + np.exp(-u))


@dataclass
class FiniteTestMdp(NetworkedMdp):
    """Small finite-state MDP with smooth action-dependent dynamics.

    Transitions blend two strictly positive row-stochastic tables through a
    logistic gate on the scalar action sum:

        P(s'|s, a) = (1 - g(u)) p0[s, s'] + g(u) p1[s, s'],   u = sum_i a^i,

    with g the logistic function, so the kernel is strictly positive (the
    chain is irreducible and aperiodic for every policy) and analytically
    differentiable in every action component.  Rewards are bounded and
    smooth:

        r^i(s, a) = base[i, s] + amp[i, s] * tanh(offset[i, s] + coef[i, :] . a).

    All agents have scalar actions.
    """

    p0: np.ndarray
    p1: np.ndarray
    base: np.ndarray
    amp: np.ndarray
    offset: np.ndarray
    coef: np.ndarray

    def __post_init__(self):
        self.p0 = np.asarray(self.p0, dtype=float)
        self.p1 = np.asarray(self.p1, dtype=float)
        self.base = np.asarray(self.base, dtype=float)
        self.amp = np.asarray(self.amp, dtype=float)
        self.offset = np.asarray(self.offset, dtype=float)
        self.coef = np.asarray(self.coef, dtype=float)
        s = self.p0.shape[0]
        n = self.base.shape[0]
        if self.p0.shape != (s, s) or self.p1.shape != (s, s):
            raise DimensionMismatch("transition tables must be square and same shape")
        for name, tbl in (("p0", self.p0), ("p1", self.p1)):
            if np.min(tbl) <= 0.0:
                raise ValueError(f"{name} must be strictly positive")
            if np.max(np.abs(tbl.sum(axis=1) - 1.0)) > 1e-10:
                raise ValueError(f"{name} rows must sum to 1")
        for name, arr in (
            ("base", self.base),
            ("amp", self.amp),
            ("offset", self.offset),
        ):
            if arr.shape != (n, s):
                raise DimensionMismatch(f"{name} must have shape ({n}, {s})")
        if self.coef.shape != (n, n):
            raise DimensionMismatch(f"coef must have shape ({n}, {n})")

    @property
    def state_count(self) -> int:
        return self.p0.shape[0]

    @property
    def agent_count(self) -> int:
        return self.base.shape[0]

    @property
    def action_dims(self) -> tuple:
        return (1,) * self.agent_count

    @property
    def reward_bound(self) -> float:
        """A bound on |r^i(s, a)| valid for every agent, state and action."""
        return float(np.max(np.abs(self.base)) + np.max(np.abs(self.amp)))

    def _gate(self, actions) -> float:
        u = float(sum(np.asarray(a, dtype=float).sum() for a in actions))
        return _sigmoid(u)

    def transition_row(self, s, actions) -> np.ndarray:
        g = self._gate(actions)
        return (1.0 - g) * self.p0[s] + g * self.p1[s]

    def transition_prob(self, s, actions, s_next) -> float:
        g = self._gate(actions)
        return float((1.0 - g) * self.p0[s, s_next] + g * self.p1[s, s_next])

    def transition_row_batch(self, s, flat_actions: np.ndarray) -> np.ndarray:
        """Vectorized transition rows for a (T, N) batch of flat joint actions."""
        u = np.clip(np.asarray(flat_actions, dtype=float).sum(axis=1), -60.0, 60.0)
        g = 1.0 / (1.0 + np.exp(-u))
        return np.outer(1.0 - g, self.p0[s]) + np.outer(g, self.p1[s])

    def transition_grad_action(self, i, s, actions) -> np.ndarray:
        """Jacobian of the transition row w.r.t. agent i's action, shape (1, S)."""
        g = self._gate(actions)
        return (g * (1.0 - g) * (self.p1[s] - self.p0[s]))[None, :]

    def local_reward(self, i, s, actions) -> float:
        flat = pack_actions(actions)
        z = self.offset[i, s] + float(self.coef[i] @ flat)
        return float(self.base[i, s] + self.amp[i, s] * np.tanh(z))

    def local_rewards(self, s, actions) -> np.ndarray:
        flat = pack_actions(actions)
        z = self.offset[:, s] + self.coef @ flat
        return self.base[:, s] + self.amp[:, s] * np.tanh(z)

    def mean_reward(self, s, actions) -> float:
        return float(self.local_rewards(s, actions).mean())

    def mean_reward_batch(self, s, flat_actions: np.ndarray) -> np.ndarray:
        """Vectorized Rbar over a (T, N) batch of flat joint actions."""
        z = self.offset[:, s][None, :] + np.asarray(flat_actions, dtype=float) @ self.coef.T
        vals = self.base[:, s][None, :] + self.amp[:, s][None, :] * np.tanh(z)
        return vals.mean(axis=1)

    def reward_grad_action(self, i, s, actions) -> np.ndarray:
        """d Rbar / d a^i, shape (1,)."""
        flat = pack_actions(actions)
        z = self.offset[:, s] + self.coef @ flat
        sech2 = 1.0 - np.tanh(z) ** 2
        g = float(np.mean(self.amp[:, s] * sech2 * self.coef[:, i]))
        return np.array([g])


def make_finite_mdp(states: int, agents: int, seed: int = 0) -> FiniteTestMdp:
    """Random, strictly positive instance with bounded smooth rewards."""
    if states < 2 or agents < 1:
        raise ValueError("need at least 2 states and 1 agent")
    rng = np.random.default_rng(seed)

    def _table():
        raw = rng.uniform(0.05, 1.0, size=(states, states))
        return raw / raw.sum(axis=1, keepdims=True)

    return FiniteTestMdp(
        p0=_table(),
        p1=_table(),
        base=rng.uniform(-1.0, 1.0, size=(agents, states)),
        amp=rng.uniform(0.5, 1.5, size=(agents, states)),
        offset=rng.uniform(-1.0, 1.0, size=(agents, states)),
        coef=rng.uniform(-1.0, 1.0, size=(agents, agents)),
    )
