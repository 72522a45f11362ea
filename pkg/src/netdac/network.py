"""Communication graphs, Metropolis consensus weights, and link failures.

Agents share critic parameters by repeated local averaging: each step every
agent replaces its vector with a convex combination of its neighbors' vectors
using a weight matrix C sampled for that step.  Metropolis weights

    c_ij = 1 / (1 + max(deg(i), deg(j)))        for edges {i, j},
    c_ii = 1 - sum_{j in N(i)} c_ij,

are symmetric and doubly stochastic for any undirected graph.  A
:class:`GraphProcess` makes the matrix random by deleting each edge
independently each step (link failures); the deleted edge's weight is folded
back into the two endpoint diagonals, which preserves symmetry and double
stochasticity, so the averaging assumptions hold per sample.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch
from .linalg import spectral_norm

__all__ = [
    "CommGraph",
    "path_graph",
    "ring_graph",
    "star_graph",
    "complete_graph",
    "edgeless_graph",
    "load_edge_list",
    "metropolis_weights",
    "GraphProcess",
    "consensus_step",
    "ConsensusReport",
    "check_assumption_random_matrices",
]

#: Smallest weight a surviving link is allowed to carry.
MIN_POSITIVE_WEIGHT = 1e-3


@dataclass(frozen=True)
class CommGraph:
    """Undirected simple graph on nodes 0..n-1 with a sorted edge tuple."""

    n: int
    edges: tuple

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("graph needs at least one node")
        seen = set()
        for e in self.edges:
            if len(e) != 2:
                raise ValueError(f"edge {e!r} is not a pair")
            i, j = e
            if not (0 <= i < self.n and 0 <= j < self.n) or i == j:
                raise ValueError(f"edge {e!r} out of range or a self-loop")
            if (i, j) in seen or (j, i) in seen:
                raise ValueError(f"duplicate edge {e!r}")
            if i > j:
                raise ValueError(f"edge {e!r} must be ordered (i < j)")
            seen.add((i, j))
        object.__setattr__(self, "edges", tuple(sorted(self.edges)))

    def degrees(self) -> np.ndarray:
        d = np.zeros(self.n, dtype=int)
        for i, j in self.edges:
            d[i] += 1
            d[j] += 1
        return d

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.n, self.n), dtype=bool)
        for i, j in self.edges:
            a[i, j] = a[j, i] = True
        return a

    def is_connected(self) -> bool:
        if self.n == 1:
            return True
        adj = self.adjacency()
        seen = {0}
        frontier = [0]
        while frontier:
            v = frontier.pop()
            for w in np.flatnonzero(adj[v]):
                if int(w) not in seen:
                    seen.add(int(w))
                    frontier.append(int(w))
        return len(seen) == self.n


def path_graph(n: int) -> CommGraph:
    return CommGraph(n, tuple((i, i + 1) for i in range(n - 1)))


def ring_graph(n: int) -> CommGraph:
    if n < 3:
        return path_graph(n)
    return CommGraph(n, tuple((i, i + 1) for i in range(n - 1)) + ((0, n - 1),))


def star_graph(n: int) -> CommGraph:
    return CommGraph(n, tuple((0, i) for i in range(1, n)))


def complete_graph(n: int) -> CommGraph:
    return CommGraph(n, tuple((i, j) for i in range(n) for j in range(i + 1, n)))


def edgeless_graph(n: int) -> CommGraph:
    return CommGraph(n, ())


def load_edge_list(text: str, n: int = None) -> CommGraph:
    """Parse an edge-list description: one ``i j`` pair per line.

    Blank lines and ``#`` comments are ignored.  Node count defaults to
    1 + the largest index mentioned; pass ``n`` to include isolated nodes.
    """
    edges = []
    top = -1
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"edge list line {ln}: expected two node indices, got {raw!r}")
        try:
            i, j = int(parts[0]), int(parts[1])
        except ValueError as exc:
            raise ValueError(f"edge list line {ln}: non-integer node index in {raw!r}") from exc
        if i == j:
            raise ValueError(f"edge list line {ln}: self-loop {i}")
        if i < 0 or j < 0:
            raise ValueError(f"edge list line {ln}: negative node index")
        edges.append((min(i, j), max(i, j)))
        top = max(top, i, j)
    count = (top + 1) if n is None else int(n)
    if count < 1:
        raise ValueError("graph needs at least one node")
    return CommGraph(count, tuple(sorted(set(edges))))


def metropolis_weights(graph: CommGraph) -> np.ndarray:
    """Symmetric doubly-stochastic weight matrix from node degrees."""
    deg = graph.degrees()
    c = np.zeros((graph.n, graph.n))
    for i, j in graph.edges:
        w = 1.0 / (1.0 + max(deg[i], deg[j]))
        c[i, j] = c[j, i] = w
    np.fill_diagonal(c, 1.0 - c.sum(axis=1))
    return c


@dataclass
class GraphProcess:
    """Random weight-matrix sequence over a fixed base graph.

    Each call to :meth:`sample_weights` deletes every base edge independently
    with probability ``failure_prob`` and returns the base Metropolis matrix
    with each deleted edge's weight moved onto the two endpoint diagonals.
    ``failure_prob = 0`` gives the constant base matrix (and consumes no
    random numbers).
    """

    base: CommGraph
    failure_prob: float = 0.0
    rng: np.random.Generator = None

    base_weights: np.ndarray = field(init=False)

    def __post_init__(self):
        if not 0.0 <= self.failure_prob < 1.0:
            raise ValueError("failure_prob must lie in [0, 1)")
        if self.rng is None:
            self.rng = np.random.default_rng(0)
        self.base_weights = metropolis_weights(self.base)
        self.base_weights.flags.writeable = False  # shared by the p=0 fast path
        self._edges = tuple(self.base.edges)  # already sorted
        self._base_directed = 2 * len(self._edges)

    def sample_graph(self, rng: np.random.Generator = None) -> CommGraph:
        """The surviving-edge graph for one step."""
        if self.failure_prob == 0.0:
            return self.base
        rng = rng or self.rng
        keep = rng.random(len(self._edges)) >= self.failure_prob
        return CommGraph(self.base.n, tuple(e for e, k in zip(self._edges, keep) if k))

    def sample_weights(self, rng: np.random.Generator = None) -> np.ndarray:
        """One step's consensus matrix C_t (symmetric, doubly stochastic).

        With ``failure_prob = 0`` the (read-only) base matrix itself is
        returned; otherwise a fresh matrix is built for the sampled edge set.
        """
        if self.failure_prob == 0.0:
            return self.base_weights
        c = self.base_weights.copy()
        rng = rng or self.rng
        keep = rng.random(len(self._edges)) >= self.failure_prob
        for (i, j), k in zip(self._edges, keep):
            if not k:
                c[i, i] += c[i, j]
                c[j, j] += c[j, i]
                c[i, j] = c[j, i] = 0.0
        return c

    def directed_edge_count(self, c: np.ndarray) -> int:
        """Number of directed messages one averaging round over ``c`` sends."""
        if c is self.base_weights:
            return self._base_directed
        return int(np.count_nonzero(c) - np.count_nonzero(np.diag(c)))

    def weights_for_graph(self, graph: CommGraph) -> np.ndarray:
        """Deterministic matrix for a given surviving-edge set."""
        c = self.base_weights.copy()
        alive = set(graph.edges)
        for i, j in self._edges:
            if (i, j) not in alive:
                c[i, i] += c[i, j]
                c[j, j] += c[j, i]
                c[i, j] = c[j, i] = 0.0
        return c


def consensus_step(c: np.ndarray, params) -> np.ndarray:
    """One averaging round: row i of the result is sum_j c[i, j] * params[j].

    ``params`` may be an (N, d) array or a list of equal-length vectors;
    the result is always an (N, d) array.
    """
    p = np.asarray(params, dtype=float)
    if p.ndim == 1:
        p = p[:, None]
    if p.ndim != 2:
        raise DimensionMismatch("params must be a list of vectors or a 2-D array")
    c = np.asarray(c, dtype=float)
    if c.shape != (p.shape[0], p.shape[0]):
        raise DimensionMismatch(
            f"weight matrix shape {c.shape} does not match {p.shape[0]} agents"
        )
    return c @ p


@dataclass(frozen=True)
class ConsensusReport:
    """Empirical check of the averaging-matrix assumptions.

    ``mixing_norm`` is the spectral norm of the estimated
    E[C^T (I - 11^T/N) C]; values below 1 mean disagreement contracts in
    expectation.
    """

    samples: int
    row_residual: float
    mean_col_residual: float
    min_positive_entry: float
    mixing_norm: float
    ok: bool


def check_assumption_random_matrices(
    process: GraphProcess, samples: int = 1000, rng: np.random.Generator = None
) -> ConsensusReport:
    """Sample C_t and test: rows stochastic per sample, mean column-stochastic,
    positive entries bounded away from zero, and mean mixing matrix contractive."""
    if samples < 1:
        raise ValueError("need at least one sample")
    n = process.base.n
    ones = np.ones(n)
    j_perp = np.eye(n) - np.ones((n, n)) / n
    acc = np.zeros((n, n))
    mean_c = np.zeros((n, n))
    row_res = 0.0
    min_pos = np.inf
    for _ in range(samples):
        c = process.sample_weights(rng)
        row_res = max(row_res, float(np.max(np.abs(c @ ones - ones))))
        pos = c[c > 0]
        if pos.size:
            min_pos = min(min_pos, float(pos.min()))
        acc += c.T @ j_perp @ c
        mean_c += c
    acc /= samples
    mean_c /= samples
    col_res = float(np.max(np.abs(ones @ mean_c - ones)))
    mix = spectral_norm(acc)
    ok = (
        row_res <= 1e-12
        and col_res <= 1e-3
        and mix < 1.0 - 1e-6
        and (min_pos >= MIN_POSITIVE_WEIGHT or not process.base.edges)
    )
    return ConsensusReport(
        samples=samples,
        row_residual=row_res,
        mean_col_residual=col_res,
        min_positive_entry=float(min_pos) if np.isfinite(min_pos) else 1.0,
        mixing_norm=float(mix),
        ok=bool(ok),
    )
