"""Stochastic block model graphs and their derived matrices.

A graph instance carries the sampled adjacency (sparse, symmetric, zero
diagonal), the block layout, and the parameters it was drawn from.  The two
linear operators of interest are the normalized adjacency B = A/(Nρ) and its
annealed surrogate B̂ with entries w_{k(i)k(j)}/N for every pair (i,j),
diagonal included.
"""

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ._util import (
    ConfigError,
    atomic_write_text,
    block_offsets,
    block_sizes_from_fractions,
    fmt_real,
    seed_sequence,
)


@dataclass(eq=False)
class SbmParams:
    """Parameters of a stochastic block model.

    n: vertex count; block_fractions: π_k, summing to 1; rho: density
    parameter; weights: symmetric K×K matrix w_kl, so edge ij has
    probability rho·w_{k(i)k(j)}.
    """

    n: int
    block_fractions: np.ndarray
    rho: float
    weights: np.ndarray

    def __post_init__(self):
        self.n = int(self.n)
        self.block_fractions = np.asarray(self.block_fractions, dtype=np.float64)
        self.rho = float(self.rho)
        self.weights = np.asarray(self.weights, dtype=np.float64)

    @property
    def k(self):
        return len(self.block_fractions)

    def validate(self, c_block=0.05, mean_weight_bounds=None):
        """Raise ConfigError unless the parameters are a valid model.

        mean_weight_bounds, if given, is (m, M) bracketing Σ w_kl π_k π_l.
        """
        if self.n < 1:
            raise ConfigError(f"n must be >= 1, got {self.n}")
        pi = self.block_fractions
        if pi.ndim != 1 or len(pi) < 1:
            raise ConfigError("block_fractions must be a non-empty 1-d sequence")
        if abs(pi.sum() - 1.0) > 1e-12:
            raise ConfigError(f"block_fractions must sum to 1, got {pi.sum()!r}")
        if np.any(pi < c_block):
            raise ConfigError(
                f"every block fraction must be >= c_block={c_block}, got {pi.tolist()}"
            )
        if not (0.0 <= self.rho <= 1.0):
            raise ConfigError(f"rho must lie in [0, 1], got {self.rho}")
        w = self.weights
        if w.shape != (self.k, self.k):
            raise ConfigError(f"weights must be {self.k}x{self.k}, got {w.shape}")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ConfigError("weights must be finite and nonnegative")
        if not np.array_equal(w, w.T):
            raise ConfigError("weights must be symmetric")
        if self.rho * w.max() > 1.0 + 1e-12:
            raise ConfigError(
                f"rho*max(w) = {self.rho * w.max()} exceeds 1; edge probabilities invalid"
            )
        if mean_weight_bounds is not None:
            m, big_m = mean_weight_bounds
            mean_w = float(pi @ w @ pi)
            if not (m <= mean_w <= big_m):
                raise ConfigError(
                    f"mean weight {mean_w} outside configured bounds [{m}, {big_m}]"
                )

    def block_sizes(self):
        """Largest-remainder block sizes N_k (sum exactly n)."""
        return block_sizes_from_fractions(self.n, self.block_fractions)

    def to_json_dict(self):
        return {
            "n": self.n,
            "fractions": self.block_fractions.tolist(),
            "rho": self.rho,
            "weights": self.weights.tolist(),
        }

    @classmethod
    def from_json_dict(cls, obj):
        try:
            return cls(
                n=obj["n"],
                block_fractions=obj["fractions"],
                rho=obj["rho"],
                weights=obj["weights"],
            )
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"invalid SBM parameter object: {exc}") from exc

    def __eq__(self, other):
        if not isinstance(other, SbmParams):
            return NotImplemented
        return (
            self.n == other.n
            and self.rho == other.rho
            and np.array_equal(self.block_fractions, other.block_fractions)
            and np.array_equal(self.weights, other.weights)
        )


@dataclass(eq=False)
class Graph:
    """A realized SBM instance: adjacency + block layout + provenance."""

    params: SbmParams
    seed: int
    blocks: np.ndarray  # vertex -> block index
    adjacency: sp.csr_matrix = field(repr=False)

    @property
    def n(self):
        return self.params.n

    @property
    def k(self):
        return self.params.k

    @property
    def block_sizes(self):
        return np.bincount(self.blocks, minlength=self.k).astype(np.int64)

    @property
    def n_edges(self):
        return self.adjacency.nnz // 2

    def degrees(self):
        """Realized degrees δ_i as an int64 vector."""
        return np.diff(self.adjacency.indptr).astype(np.int64)

    def edge_array(self):
        """Edges as an (E,2) array with i<j, sorted lexicographically."""
        upper = sp.triu(self.adjacency, k=1).tocoo()
        order = np.lexsort((upper.col, upper.row))
        return np.column_stack((upper.row[order], upper.col[order])).astype(np.int64)


@dataclass
class DegreeStats:
    """Realized degrees δ_i, expected degrees d_i, their mean d and max D."""

    realized: np.ndarray
    expected: np.ndarray
    d: float
    D: float


def _sample_linear_indices(rng, m, p):
    """Success positions among m independent Bernoulli(p) slots.

    Geometric gap sampling: expected O(mp) draws instead of m trials.
    """
    if m <= 0 or p <= 0.0:
        return np.empty(0, dtype=np.int64)
    if p >= 1.0:
        return np.arange(m, dtype=np.int64)
    chunks = []
    pos = -1
    while True:
        expect = (m - pos) * p
        n_draw = int(expect + 4.0 * math.sqrt(expect + 1.0) + 16.0)
        gaps = rng.geometric(p, size=n_draw).astype(np.int64)
        nxt = pos + np.cumsum(gaps)
        if nxt[-1] >= m:
            chunks.append(nxt[nxt < m])
            break
        chunks.append(nxt)
        pos = int(nxt[-1])
    return chunks[0] if len(chunks) == 1 else np.concatenate(chunks)


def _decode_triangular(lin, n):
    """Map linear index to pair (i, j), i<j, for the lexicographic pair list."""
    # count of pairs before row i: C(i) = i*(2n-i-1)/2; invert by quadratic
    lin = lin.astype(np.int64)
    disc = (2 * n - 1) ** 2 - 8 * lin
    i = ((2 * n - 1) - np.sqrt(disc.astype(np.float64))) / 2.0
    i = np.floor(i).astype(np.int64)
    i = np.clip(i, 0, n - 2)
    # fix float sqrt off-by-one in either direction
    c = i * (2 * n - i - 1) // 2
    too_high = c > lin
    i[too_high] -= 1
    c = i * (2 * n - i - 1) // 2
    nxt = (i + 1) * (2 * n - i - 2) // 2
    too_low = lin >= nxt
    i[too_low] += 1
    c = i * (2 * n - i - 1) // 2
    j = lin - c + i + 1
    return i, j


def sbm_generate(params, seed):
    """Sample an SBM graph: each pair {i,j} kept with probability rho·w_kl.

    Deterministic given (params, seed).  Vertices are laid out block by
    block (block 0 first).
    """
    params.validate()
    rng = np.random.default_rng(seed_sequence(seed, 0x5B3))
    sizes = params.block_sizes()
    offs = block_offsets(sizes)
    k = params.k
    rows, cols = [], []
    for a in range(k):
        for b in range(a, k):
            p = params.rho * float(params.weights[a, b])
            if a == b:
                n_a = int(sizes[a])
                m = n_a * (n_a - 1) // 2
                lin = _sample_linear_indices(rng, m, p)
                if len(lin):
                    i, j = _decode_triangular(lin, n_a)
                    rows.append(i + offs[a])
                    cols.append(j + offs[a])
            else:
                n_a, n_b = int(sizes[a]), int(sizes[b])
                m = n_a * n_b
                lin = _sample_linear_indices(rng, m, p)
                if len(lin):
                    rows.append(lin // n_b + offs[a])
                    cols.append(lin % n_b + offs[b])
    blocks = np.repeat(np.arange(k, dtype=np.int32), sizes)
    if rows:
        i = np.concatenate(rows)
        j = np.concatenate(cols)
        data = np.ones(2 * len(i), dtype=np.float64)
        adj = sp.csr_matrix(
            (data, (np.concatenate((i, j)), np.concatenate((j, i)))),
            shape=(params.n, params.n),
        )
    else:
        adj = sp.csr_matrix((params.n, params.n), dtype=np.float64)
    return Graph(params=params, seed=int(seed), blocks=blocks, adjacency=adj)


def graph_from_edges(params, edges, blocks=None, seed=-1):
    """Build a Graph from an explicit edge list (each edge once, i<j)."""
    params.validate()
    n = params.n
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if len(edges):
        i, j = edges[:, 0], edges[:, 1]
        if np.any(i >= j) or np.any(i < 0) or np.any(j >= n):
            raise ConfigError("edges must satisfy 0 <= i < j < n")
        if len(np.unique(edges, axis=0)) != len(edges):
            raise ConfigError("duplicate edges in edge list")
        data = np.ones(2 * len(edges), dtype=np.float64)
        adj = sp.csr_matrix(
            (data, (np.concatenate((i, j)), np.concatenate((j, i)))), shape=(n, n)
        )
    else:
        adj = sp.csr_matrix((n, n), dtype=np.float64)
    if blocks is None:
        blocks = np.repeat(np.arange(params.k, dtype=np.int32), params.block_sizes())
    else:
        blocks = np.asarray(blocks, dtype=np.int32)
        if blocks.shape != (n,) or (blocks < 0).any() or (blocks >= params.k).any():
            raise ConfigError("blocks must map every vertex to a block in range")
        counts = np.bincount(blocks, minlength=params.k)
        if np.any(counts == 0) and params.k > 1:
            raise ConfigError("every block must be non-empty")
    return Graph(params=params, seed=int(seed), blocks=blocks, adjacency=adj)


def degree_stats(graph):
    """Realized and expected degree statistics of a graph."""
    realized = graph.degrees()
    params = graph.params
    sizes = graph.block_sizes.astype(np.float64)
    w = params.weights
    # d_i = sum_{j != i} p_ij = rho * (sum_l w_kl N_l - w_kk), block-constant
    per_block = params.rho * (w @ sizes - np.diag(w))
    expected = per_block[graph.blocks]
    d = float(expected.mean())
    big_d = float(expected.max())
    return DegreeStats(realized=realized, expected=expected, d=d, D=big_d)


def normalized_adjacency_apply(graph, v):
    """B·v with B = A/(Nρ), matrix-free in the dense sense (sparse matvec)."""
    rho = graph.params.rho
    if rho <= 0.0:
        raise ConfigError("normalized adjacency requires rho > 0")
    v = np.asarray(v, dtype=np.float64)
    if v.shape[0] != graph.n:
        raise ConfigError(f"vector length {v.shape[0]} != n = {graph.n}")
    return graph.adjacency @ v / (graph.n * rho)


def block_means(values, blocks, k):
    """Per-block means of a vector or per-column of a matrix."""
    values = np.asarray(values, dtype=np.float64)
    counts = np.bincount(blocks, minlength=k).astype(np.float64)
    if values.ndim == 1:
        sums = np.bincount(blocks, weights=values, minlength=k)
        return sums / counts
    out = np.empty((k, values.shape[1]))
    for s in range(values.shape[1]):
        out[:, s] = np.bincount(blocks, weights=values[:, s], minlength=k)
    return out / counts[:, None]


def annealed_matrix_apply(params, blocks, v):
    """B̂·v in O(N + K²) using block means.

    B̂_ij = w_{k(i)k(j)}/N for every ordered pair including the diagonal, so
    (B̂v)_i = Σ_l w_kl (N_l/N) v̄_l depends on i only through its block.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.shape[0] != params.n:
        raise ConfigError(f"vector length {v.shape[0]} != n = {params.n}")
    k = params.k
    sizes = np.bincount(blocks, minlength=k).astype(np.float64)
    pi_hat = sizes / params.n
    vbar = block_means(v, blocks, k)
    per_block = params.weights @ (pi_hat[:, None] * vbar if v.ndim > 1 else pi_hat * vbar)
    return per_block[blocks]


@dataclass
class SpectralEstimate:
    """Power-iteration estimate of a spectral norm, with convergence flag."""

    value: float
    iterations: int
    converged: bool

    def __float__(self):
        return self.value


def spectral_deviation(graph, tol=1e-6, max_iter=None):
    """‖B − B̂‖₂ by matrix-free power iteration on the symmetric deviation.

    Stops when the geometric extrapolation of the estimate sequence projects
    a remaining change below tol (with an internal safety factor); returns
    the extrapolated value.  Non-convergence is flagged, not fatal.
    """
    if tol <= 0:
        raise ConfigError("tol must be positive")
    n = graph.n
    if max_iter is None:
        max_iter = 2000 + int(200 * math.log(n + 1))
    rng = np.random.default_rng(
        seed_sequence(graph.seed if graph.seed >= 0 else 0, 0x5BEC, n)
    )
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    params, blocks = graph.params, graph.blocks
    prev1 = prev2 = None
    est = 0.0
    for it in range(1, max_iter + 1):
        w = normalized_adjacency_apply(graph, v) - annealed_matrix_apply(
            params, blocks, v
        )
        nw = float(np.linalg.norm(w))
        if nw == 0.0:
            return SpectralEstimate(0.0, it, True)
        est = nw
        v = w / nw
        if prev1 is not None and prev2 is not None:
            d1 = abs(est - prev1)
            d0 = abs(prev1 - prev2)
            if d1 == 0.0 and d0 == 0.0:
                return SpectralEstimate(est, it, True)
            if d0 > 0.0 and d1 < d0:
                r = d1 / d0
                tail = d1 * r / (1.0 - r)
                if d1 + tail <= 0.2 * tol * max(est, 1e-300):
                    signed = est - prev1
                    return SpectralEstimate(
                        est + signed * r / (1.0 - r), it, True
                    )
        prev2, prev1 = prev1, est
    return SpectralEstimate(est, max_iter, False)


def save_graph(graph, path):
    """Write the edge-list text format: 'N K rho' header, block lines, edges."""
    parts = [f"{graph.n} {graph.k} {fmt_real(graph.params.rho)}"]
    parts.extend(str(int(b)) for b in graph.blocks)
    for i, j in graph.edge_array():
        parts.append(f"{i} {j}")
    atomic_write_text(path, "\n".join(parts) + "\n")


def load_graph(path, params=None):
    """Read the edge-list format back into a Graph.

    The format carries no weights or fractions, so params are required for
    K>1; for K=1 a trivial parameter set (w=1) is reconstructed.  Loaded
    graphs get seed=-1 (the file has no seed field).
    """
    with open(path) as fh:
        tokens = fh.read().split("\n")
    header = tokens[0].split()
    if len(header) != 3:
        raise ConfigError(f"{path}: header must be 'N K rho'")
    n, k, rho = int(header[0]), int(header[1]), float(header[2])
    if params is None:
        if k != 1:
            raise ConfigError(
                f"{path}: K={k} graphs need explicit SBM parameters "
                "(edge-list format carries no weights)"
            )
        params = SbmParams(n=n, block_fractions=(1.0,), rho=rho, weights=((1.0,),))
    else:
        if params.n != n or params.k != k or params.rho != rho:
            raise ConfigError(
                f"{path}: header ({n}, {k}, {rho}) disagrees with supplied params "
                f"({params.n}, {params.k}, {params.rho})"
            )
    lines = [t for t in tokens[1:] if t.strip()]
    if len(lines) < n:
        raise ConfigError(f"{path}: expected {n} block lines")
    blocks = np.array([int(t) for t in lines[:n]], dtype=np.int32)
    edges = [tuple(map(int, t.split())) for t in lines[n:]]
    return graph_from_edges(params, np.array(edges, dtype=np.int64).reshape(-1, 2),
                            blocks=blocks, seed=-1)
