"""Deterministic per-agent policies and Gaussian exploration around them.

Each agent i owns a parameter vector theta^i and a differentiable map
``mu^i(s; theta^i)`` from the shared state to its own action.  Two forms are
provided:

* ``constant`` — the action IS the parameter: mu^i(s) = theta^i (state
  ignored; the natural choice for single-state problems).
* ``affine`` — a separate action per state plus a shared intercept:
  mu^i(s) = W^i[:, s] + b^i with theta^i = (vec(W^i), b^i).

Both are linear in theta, so the parameter-Jacobian d mu^i / d theta^i is
exact and state-dependent but action-independent.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch
from .linalg import project_box

__all__ = ["PolicySet", "GaussianNoise", "constant_policy", "affine_policy"]


@dataclass
class PolicySet:
    """Collection of per-agent deterministic policies with box-bounded parameters.

    Parameters
    ----------
    form : {"constant", "affine"}
        Functional form shared by all agents.
    action_dims : tuple of int
        Per-agent action dimensions.
    n_states : int
        Number of states the policies condition on (ignored by "constant").
    theta : list of 1-D arrays
        Per-agent parameter vectors.
    lo, hi : float
        Box bounds applied by :meth:`project`.
    """

    form: str
    action_dims: tuple
    n_states: int
    theta: list
    lo: float = -1e3
    hi: float = 1e3
    # Jacobians depend only on (form, dims, state), never on theta, so they
    # are memoized; cached arrays are read-only.
    _jac_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.form not in ("constant", "affine"):
            raise ValueError(f"unknown policy form {self.form!r}")
        if self.n_states < 1:
            raise ValueError("n_states must be >= 1")
        self.action_dims = tuple(int(d) for d in self.action_dims)
        self.theta = [np.asarray(t, dtype=float).ravel().copy() for t in self.theta]
        if len(self.theta) != len(self.action_dims):
            raise DimensionMismatch("one parameter vector per agent required")
        for i, t in enumerate(self.theta):
            want = self.param_dim(i)
            if t.shape != (want,):
                raise DimensionMismatch(
                    f"agent {i} parameters have shape {t.shape}, expected ({want},)"
                )
        if self.lo > self.hi:
            raise ValueError("projection box is empty")

    # -- dimensions ---------------------------------------------------------

    @property
    def agent_count(self) -> int:
        return len(self.action_dims)

    def param_dim(self, i: int) -> int:
        n = self.action_dims[i]
        return n if self.form == "constant" else n * self.n_states + n

    @property
    def param_dims(self) -> tuple:
        return tuple(self.param_dim(i) for i in range(self.agent_count))

    @property
    def total_param_dim(self) -> int:
        return sum(self.param_dims)

    # -- evaluation ---------------------------------------------------------

    def act_agent(self, i: int, s: int) -> np.ndarray:
        """mu^i(s), shape (n_i,)."""
        t = self.theta[i]
        n = self.action_dims[i]
        if self.form == "constant":
            return t.copy()
        w = t[: n * self.n_states].reshape(n, self.n_states)
        b = t[n * self.n_states :]
        return w[:, s] + b

    def act(self, s: int) -> list:
        """Joint action [mu^1(s), ..., mu^N(s)]."""
        return [self.act_agent(i, s) for i in range(self.agent_count)]

    def act_flat(self, s: int) -> np.ndarray:
        return np.concatenate(self.act(s))

    def jac(self, i: int, s: int) -> np.ndarray:
        """d mu^i(s) / d theta^i, shape (param_dim(i), n_i), read-only."""
        key = (i, s if self.form == "affine" else 0)
        cached = self._jac_cache.get(key)
        if cached is not None:
            return cached
        n = self.action_dims[i]
        m = self.param_dim(i)
        j = np.zeros((m, n))
        if self.form == "constant":
            j[np.arange(n), np.arange(n)] = 1.0
        else:
            for p in range(n):
                j[p * self.n_states + s, p] = 1.0  # state-s column of W^i
                j[n * self.n_states + p, p] = 1.0  # intercept
        j.flags.writeable = False
        self._jac_cache[key] = j
        return j

    def jac_blockdiag(self, s: int) -> np.ndarray:
        """Block-diagonal stack of all agents' Jacobians, read-only.

        Shape (total_param_dim, sum(action_dims)); block i maps agent i's
        action coordinates to agent i's parameter coordinates.
        """
        key = ("block", s if self.form == "affine" else 0)
        cached = self._jac_cache.get(key)
        if cached is not None:
            return cached
        total_p = self.total_param_dim
        total_a = sum(self.action_dims)
        out = np.zeros((total_p, total_a))
        rp = ra = 0
        for i in range(self.agent_count):
            mp, na = self.param_dim(i), self.action_dims[i]
            out[rp : rp + mp, ra : ra + na] = self.jac(i, s)
            rp += mp
            ra += na
        out.flags.writeable = False
        self._jac_cache[key] = out
        return out

    # -- parameter access ---------------------------------------------------

    def theta_flat(self) -> np.ndarray:
        return np.concatenate(self.theta)

    def set_theta_flat(self, flat) -> None:
        flat = np.asarray(flat, dtype=float).ravel()
        if flat.size != self.total_param_dim:
            raise DimensionMismatch(
                f"flat parameters have {flat.size} entries, expected {self.total_param_dim}"
            )
        k = 0
        for i in range(self.agent_count):
            m = self.param_dim(i)
            self.theta[i] = flat[k : k + m].copy()
            k += m

    def project(self) -> None:
        """Clamp every agent's parameters into [lo, hi] in place."""
        for i in range(self.agent_count):
            self.theta[i] = project_box(self.theta[i], self.lo, self.hi)

    def copy(self) -> "PolicySet":
        return PolicySet(
            form=self.form,
            action_dims=self.action_dims,
            n_states=self.n_states,
            theta=[t.copy() for t in self.theta],
            lo=self.lo,
            hi=self.hi,
        )


def constant_policy(action_dims, theta0=None, lo: float = -1e3, hi: float = 1e3) -> PolicySet:
    """State-independent policies mu^i = theta^i (zeros by default)."""
    action_dims = tuple(int(d) for d in action_dims)
    if theta0 is None:
        theta0 = [np.zeros(d) for d in action_dims]
    return PolicySet("constant", action_dims, 1, theta0, lo, hi)


def affine_policy(
    n_states: int, action_dims, theta0=None, lo: float = -1e3, hi: float = 1e3
) -> PolicySet:
    """Per-state action tables with intercepts, all parameters zero by default."""
    action_dims = tuple(int(d) for d in action_dims)
    if theta0 is None:
        theta0 = [np.zeros(d * n_states + d) for d in action_dims]
    return PolicySet("affine", action_dims, n_states, theta0, lo, hi)


@dataclass(frozen=True)
class GaussianNoise:
    """Isotropic Gaussian exploration of scale sigma around a joint action."""

    sigma: float = 0.0

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")

    def perturb(self, actions, rng: np.random.Generator) -> list:
        """Add N(0, sigma^2 I) noise to each agent's action."""
        if self.sigma == 0.0:
            return [np.asarray(a, dtype=float).copy() for a in actions]
        sizes = [np.asarray(a).size for a in actions]
        noise = self.sigma * rng.standard_normal(sum(sizes))
        out = []
        k = 0
        for a, n in zip(actions, sizes):
            out.append(np.asarray(a, dtype=float) + noise[k : k + n])
            k += n
        return out

    def sample(self, policy: PolicySet, s: int, rng: np.random.Generator) -> list:
        """Draw a joint action from N(mu_theta(s), sigma^2 I)."""
        return self.perturb(policy.act(s), rng)
