"""Linear function approximation for critics.

A critic is a linear model ``f(s, a) = phi(s, a) . w`` over a feature map.
Feature maps expose both their value and the Jacobian of the features with
respect to each agent's action, which the actor update needs.

Feature families
----------------
* :class:`CompatibleQFeatures` — ``phi(s, a)`` stacks, per agent, the
  parameter-Jacobian of that agent's policy applied to its action (optionally
  action minus the policy's own action, and an optional constant feature).
  With these features the action-gradient of the fitted critic equals the
  policy Jacobian applied to the corresponding weight block, which is what
  makes a linear critic's gradient an unbiased stand-in in the actor update.
* :class:`CompatibleRFeatures` — the same construction always centered at the
  policy action; used by the average-reward critic of the off-policy
  algorithm.
* :class:`FourierFeatures` — random cosine features of (one-hot state,
  action), bounded and smooth; a generic nonlinear-in-(s, a) basis.
* :class:`TabularFeatures` — one-hot state indicators (action-independent).
"""

import abc
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .errors import DimensionMismatch
from .policy import PolicySet

__all__ = [
    "FeatureMap",
    "LinearModel",
    "CompatibleQFeatures",
    "CompatibleRFeatures",
    "FourierFeatures",
    "TabularFeatures",
    "q_value",
    "q_grad_action",
    "r_value",
    "r_grad_action",
]


class FeatureMap(abc.ABC):
    """Feature vector phi(s, a) with per-agent action Jacobians."""

    dim: int
    #: True when computing the features requires agents to exchange their
    #: local policy Jacobians over the network each step.
    exchanges_jacobians: bool = False
    #: True when d phi / d a^i depends only on the state, never on the joint
    #: action (lets batched actor updates share one gradient per state).
    action_independent_grad: bool = False

    @abc.abstractmethod
    def eval(self, s: int, actions) -> np.ndarray:
        """phi(s, a), shape (dim,)."""

    @abc.abstractmethod
    def grad_action(self, s: int, actions, i: int) -> np.ndarray:
        """d phi / d a^i, shape (n_i, dim)."""

    #: Per-agent action dimensions, when the map knows them (used by
    #: eval_batch to split flat joint actions).
    action_dims: tuple = None

    def eval_batch(self, s: int, flat_actions: np.ndarray) -> np.ndarray:
        """phi over a (T, n_total) batch of flat joint actions, shape (T, dim).

        The base implementation loops; subclasses override with vectorized
        versions where the structure allows it.
        """
        flat_actions = np.asarray(flat_actions, dtype=float)
        if self.action_dims is None:
            raise DimensionMismatch("feature map does not know per-agent action dims")
        starts = np.cumsum((0,) + tuple(self.action_dims))
        out = np.empty((flat_actions.shape[0], self.dim))
        for t in range(flat_actions.shape[0]):
            acts = [flat_actions[t, starts[i] : starts[i + 1]] for i in range(len(starts) - 1)]
            out[t] = self.eval(s, acts)
        return out


@dataclass
class LinearModel:
    """f(s, a) = phi(s, a) . weights."""

    features: FeatureMap
    weights: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float).ravel()
        if self.weights.shape != (self.features.dim,):
            raise DimensionMismatch(
                f"weights have shape {self.weights.shape}, expected ({self.features.dim},)"
            )
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("weights contain non-finite entries")

    def value(self, s: int, actions) -> float:
        return float(self.features.eval(s, actions) @ self.weights)

    def grad_action(self, s: int, actions, i: int) -> np.ndarray:
        return self.features.grad_action(s, actions, i) @ self.weights


def q_value(model: LinearModel, s: int, actions) -> float:
    """Fitted action-value Q-hat(s, a)."""
    return model.value(s, actions)


def q_grad_action(model: LinearModel, s: int, actions, i: int) -> np.ndarray:
    """d Q-hat / d a^i, shape (n_i,)."""
    return model.grad_action(s, actions, i)


def r_value(model: LinearModel, s: int, actions) -> float:
    """Fitted average-reward model Rbar-hat(s, a)."""
    return model.value(s, actions)


def r_grad_action(model: LinearModel, s: int, actions, i: int) -> np.ndarray:
    """d Rbar-hat / d a^i, shape (n_i,)."""
    return model.grad_action(s, actions, i)


class _PolicyJacobianFeatures(FeatureMap):
    """Per-agent blocks jac(i, s) @ (a^i - center_i(s)), optionally plus a bias."""

    exchanges_jacobians = True
    action_independent_grad = True  # phi is linear in the joint action

    def __init__(self, policy: PolicySet, centered: bool, bias: bool):
        self.policy = policy
        self.centered = centered
        self.bias = bias
        self.action_dims = policy.action_dims
        self._block_starts = np.cumsum((0,) + policy.param_dims)
        self.dim = policy.total_param_dim + (1 if bias else 0)
        self._grad_cache = {}  # action gradients depend on (s, i) only
        self._jbd_cache = {}  # sparse block-diagonal Jacobians, per state

    def _sparse_blockdiag(self, s: int):
        key = s if self.policy.form == "affine" else 0
        m = self._jbd_cache.get(key)
        if m is None:
            m = sparse.csr_array(self.policy.jac_blockdiag(s))
            self._jbd_cache[key] = m
        return m

    def eval(self, s, actions) -> np.ndarray:
        pol = self.policy
        if len(actions) != pol.agent_count:
            raise DimensionMismatch(
                f"joint action has {len(actions)} components, expected {pol.agent_count}"
            )
        parts = []
        for i, a in enumerate(actions):
            a = np.asarray(a, dtype=float).ravel()
            if a.shape != (pol.action_dims[i],):
                raise DimensionMismatch(
                    f"agent {i} action has shape {a.shape}, expected ({pol.action_dims[i]},)"
                )
            parts.append(a)
        flat = np.concatenate(parts)
        if self.centered:
            flat = flat - pol.act_flat(s)
        out = np.ones(self.dim) if self.bias else np.empty(self.dim)
        out[: pol.total_param_dim] = self._sparse_blockdiag(s) @ flat
        return out

    def grad_action(self, s, actions, i) -> np.ndarray:
        pol = self.policy
        if not 0 <= i < pol.agent_count:
            raise IndexError(f"agent index {i} out of range")
        key = (s if pol.form == "affine" else 0, i)
        g = self._grad_cache.get(key)
        if g is None:
            g = np.zeros((pol.action_dims[i], self.dim))
            lo, hi = self._block_starts[i], self._block_starts[i + 1]
            g[:, lo:hi] = pol.jac(i, s).T
            g.flags.writeable = False
            self._grad_cache[key] = g
        return g

    def eval_batch(self, s, flat_actions) -> np.ndarray:
        pol = self.policy
        flat_actions = np.asarray(flat_actions, dtype=float)
        if flat_actions.ndim != 2 or flat_actions.shape[1] != sum(pol.action_dims):
            raise DimensionMismatch("flat action batch has wrong width")
        a = flat_actions - pol.act_flat(s) if self.centered else flat_actions
        main = (self._sparse_blockdiag(s) @ a.T).T
        if not self.bias:
            return main
        return np.hstack([main, np.ones((main.shape[0], 1))])


class CompatibleQFeatures(_PolicyJacobianFeatures):
    """Action-value features phi(s, a) = stack_i jac(i, s) @ a^i (+ bias).

    ``centered=True`` replaces a^i by a^i - mu^i(s), which changes only the
    value offset, not the action gradients.
    """

    def __init__(self, policy: PolicySet, centered: bool = False, bias: bool = False):
        super().__init__(policy, centered=centered, bias=bias)


class CompatibleRFeatures(_PolicyJacobianFeatures):
    """Reward features w(s, a) = stack_i jac(i, s) @ (a^i - mu^i(s)) (+ bias)."""

    def __init__(self, policy: PolicySet, bias: bool = False):
        super().__init__(policy, centered=True, bias=bias)


class FourierFeatures(FeatureMap):
    """Random cosine features of the one-hot state and the flat joint action.

    phi_k(s, a) = cos(w_k . [onehot(s); a] + b_k), so every feature lies in
    [-1, 1] and action gradients are bounded by the draw's weight scale.
    """

    exchanges_jacobians = False

    def __init__(self, n_states: int, action_dims, dim: int, seed: int = 0, scale: float = 1.0):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.n_states = int(n_states)
        self.action_dims = tuple(int(d) for d in action_dims)
        self.dim = int(dim)
        n_total = sum(self.action_dims)
        rng = np.random.default_rng(seed)
        self._w = scale * rng.standard_normal((self.dim, self.n_states + n_total))
        self._b = rng.uniform(0.0, 2.0 * np.pi, size=self.dim)
        self._starts = np.cumsum((0,) + self.action_dims)

    def _input(self, s, actions) -> np.ndarray:
        if not 0 <= s < self.n_states:
            raise IndexError(f"state {s} out of range")
        flat = np.concatenate([np.asarray(a, dtype=float).ravel() for a in actions])
        if flat.size != self._starts[-1]:
            raise DimensionMismatch("joint action has wrong total dimension")
        x = np.zeros(self.n_states + flat.size)
        x[s] = 1.0
        x[self.n_states :] = flat
        return x

    def eval(self, s, actions) -> np.ndarray:
        return np.cos(self._w @ self._input(s, actions) + self._b)

    def grad_action(self, s, actions, i) -> np.ndarray:
        if not 0 <= i < len(self.action_dims):
            raise IndexError(f"agent index {i} out of range")
        sin = np.sin(self._w @ self._input(s, actions) + self._b)
        cols = slice(
            self.n_states + self._starts[i], self.n_states + self._starts[i + 1]
        )
        # d cos(w.x + b)/d a^i_j = -sin(w.x + b) * w[:, col j]
        return -(self._w[:, cols] * sin[:, None]).T

    def eval_batch(self, s, flat_actions) -> np.ndarray:
        flat_actions = np.asarray(flat_actions, dtype=float)
        if flat_actions.ndim != 2 or flat_actions.shape[1] != self._starts[-1]:
            raise DimensionMismatch("flat action batch has wrong width")
        if not 0 <= s < self.n_states:
            raise IndexError(f"state {s} out of range")
        z = flat_actions @ self._w[:, self.n_states :].T + self._w[:, s] + self._b
        return np.cos(z)


class TabularFeatures(FeatureMap):
    """One-hot state indicators; constant in the action."""

    exchanges_jacobians = False
    action_independent_grad = True

    def __init__(self, n_states: int, action_dims=None):
        if n_states < 1:
            raise ValueError("n_states must be >= 1")
        self.n_states = int(n_states)
        self.action_dims = tuple(int(d) for d in action_dims) if action_dims else None
        self.dim = self.n_states

    def eval(self, s, actions) -> np.ndarray:
        if not 0 <= s < self.n_states:
            raise IndexError(f"state {s} out of range")
        out = np.zeros(self.dim)
        out[s] = 1.0
        return out

    def grad_action(self, s, actions, i) -> np.ndarray:
        n_i = len(np.atleast_1d(np.asarray(actions[i], dtype=float)))
        return np.zeros((n_i, self.dim))

    def eval_batch(self, s, flat_actions) -> np.ndarray:
        if not 0 <= s < self.n_states:
            raise IndexError(f"state {s} out of range")
        flat_actions = np.asarray(flat_actions, dtype=float)
        out = np.zeros((flat_actions.shape[0], self.dim))
        out[:, s] = 1.0
        return out
