"""Initial-condition families and the within-block homogeneity statistic.

Each generator returns per-vertex probability rows z_{i,s}(0) over the
process states, tagged with provenance.  The homogeneity statistic
(1/N) Σ_k Σ_{i∈I_k} (z_{i,s}(0) − z̄_{k,s}(0))² gates the sharper
error regime when it is below c₀/d.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.csgraph as csgraph

from . import graph as graphmod
from ._kernels import modularity_climb
from ._util import ConfigError, atomic_write_text, fmt_real, rng_from, seed_sequence


@dataclass(eq=False)
class InitialCondition:
    """Per-vertex state probabilities z0 (N×|S|) plus generator provenance."""

    z0: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.z0 = np.asarray(self.z0, dtype=np.float64)
        if self.z0.ndim != 2:
            raise ConfigError("z0 must be an N x n_states matrix")
        validate_simplex_rows(self.z0)

    @property
    def n(self):
        return self.z0.shape[0]

    @property
    def n_states(self):
        return self.z0.shape[1]

    def block_means(self, graph):
        """Exact per-block means z̄_{k,s}(0)."""
        return graphmod.block_means(self.z0, graph.blocks, graph.k)


@dataclass
class HomogeneityReport:
    """Per-state within-block variance statistic against the c₀/d gate."""

    per_state_statistic: np.ndarray
    threshold: float
    satisfied: np.ndarray
    c0: float
    d: float

    @property
    def all_satisfied(self):
        return bool(self.satisfied.all())


def validate_simplex_rows(z, tol=1e-12):
    if np.any(z < 0) or np.any(z > 1):
        raise ConfigError("probabilities must lie in [0, 1]")
    err = np.abs(z.sum(axis=1) - 1.0).max()
    if err > tol:
        raise ConfigError(f"rows must sum to 1 within {tol}, worst deviation {err}")


def ic_block_constant(values, graph):
    """Every vertex of block k gets the same probability row values[k]."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2 or values.shape[0] != graph.k:
        raise ConfigError(f"values must be K x n_states with K={graph.k}")
    validate_simplex_rows(values)
    z0 = values[graph.blocks]
    return InitialCondition(z0, {"kind": "block_constant", "values": values.tolist()})


def ic_degree_proportional(graph, kappa, states, infected_state="I",
                           susceptible_state="S"):
    """z_{i,I}(0) = κ·δ_i/d from realized degrees; remainder on S.

    Refuses (rather than clamps) κ large enough to push a probability
    past 1.
    """
    states = tuple(states)
    stats = graphmod.degree_stats(graph)
    if stats.d <= 0:
        raise ConfigError("degree-proportional ic needs a graph with edges")
    zi = kappa * stats.realized / stats.d
    if kappa < 0 or zi.max() > 1.0:
        raise ConfigError(
            f"kappa={kappa} gives max probability {zi.max():.4g} outside [0, 1]; "
            "refusing to clamp"
        )
    z0 = np.zeros((graph.n, len(states)))
    z0[:, states.index(infected_state)] = zi
    z0[:, states.index(susceptible_state)] = 1.0 - zi
    return InitialCondition(
        z0, {"kind": "degree_proportional", "kappa": float(kappa)}
    )


def ic_perron(graph, kappa, states, infected_state="I", susceptible_state="S",
              tol=1e-12, max_iter=5000):
    """Infection mass proportional to the Perron vector of B, ℓ1-normalized.

    Power iteration from the uniform vector on B + cI (the shift keeps the
    eigenvector but breaks the ± eigenvalue symmetry of bipartite graphs,
    which would otherwise make the iteration oscillate).  On disconnected
    graphs this converges to the dominant component's vector, and the
    component count is recorded in provenance.
    """
    states = tuple(states)
    if graph.n_edges < 1:
        raise ConfigError("Perron ic needs a graph with at least one edge")
    n_comp, _ = csgraph.connected_components(graph.adjacency, directed=False)
    shift = graph.degrees().max() / (graph.n * graph.params.rho)
    v = np.full(graph.n, 1.0 / np.sqrt(graph.n))
    it = 0
    for it in range(1, max_iter + 1):
        w = graphmod.normalized_adjacency_apply(graph, v) + shift * v
        nw = np.linalg.norm(w)
        if nw == 0:
            raise ConfigError("adjacency annihilated the start vector")
        w /= nw
        if np.linalg.norm(w - v) < tol:
            v = w
            break
        v = w
    v = np.clip(v, 0.0, None)
    v /= v.sum()
    zi = kappa * v
    if kappa < 0 or zi.max() > 1.0:
        raise ConfigError(
            f"kappa={kappa} gives max probability {zi.max():.4g} outside [0, 1]"
        )
    z0 = np.zeros((graph.n, len(states)))
    z0[:, states.index(infected_state)] = zi
    z0[:, states.index(susceptible_state)] = 1.0 - zi
    return InitialCondition(
        z0,
        {
            "kind": "perron",
            "kappa": float(kappa),
            "iterations": it,
            "components": int(n_comp),
        },
    )


def modularity_set(graph, restarts=32, seed=0, max_passes=200):
    """Vertex set H maximizing |e(H) − (d/N)|H|²| by restarted local search.

    e(H) counts ordered pairs (u'Au).  Returns (indicator u, best signed
    deviation, set size).  Best-of-restarts with per-restart seeds, so the
    achieved |deviation| is nondecreasing in `restarts`.
    """
    if graph.k != 1:
        raise ConfigError("modularity-set search is defined for K=1 graphs")
    n = graph.n
    if graph.n_edges == 0:
        return np.zeros(n, dtype=np.uint8), 0.0, 0
    d = graphmod.degree_stats(graph).d
    indptr = graph.adjacency.indptr
    indices = graph.adjacency.indices
    best_u, best_signed, best_h = None, 0.0, 0
    for r in range(int(restarts)):
        rng = rng_from(seed, 0x40D, r)
        u0 = rng.integers(0, 2, size=n).astype(np.uint8)
        u, signed, h, _ = modularity_climb(indptr, indices, u0, d / n,
                                           max_passes)
        if best_u is None or abs(signed) > abs(best_signed):
            best_u, best_signed, best_h = u, float(signed), int(h)
    return best_u, best_signed, best_h


def ic_modularity_set(graph, restarts=32, seed=0, states=("a", "b", "c")):
    """Adversarial catalyst start: z_a = z_c = u/2, z_b = 1−u for u = 1_H.

    H comes from the modularity-set search; the achieved deviation
    |e(H) − (d/N)|H|²| is recorded in provenance.
    """
    states = tuple(states)
    if len(states) != 3:
        raise ConfigError("modularity-set ic is a 3-state (catalyst) condition")
    u, signed, h = modularity_set(graph, restarts=restarts, seed=seed)
    uf = u.astype(np.float64)
    z0 = np.empty((graph.n, 3))
    z0[:, 0] = uf / 2.0
    z0[:, 1] = 1.0 - uf
    z0[:, 2] = uf / 2.0
    return InitialCondition(
        z0,
        {
            "kind": "modularity_set",
            "restarts": int(restarts),
            "seed": int(seed),
            "deviation": abs(signed),
            "signed_deviation": signed,
            "set_size": h,
        },
    )


def ic_bernoulli_sample(ic, seed):
    """Draw each vertex's initial state independently from its z0 row."""
    rng = np.random.default_rng(seed)
    u = rng.random(ic.n)
    cum = np.cumsum(ic.z0, axis=1)
    assignment = (u[:, None] >= cum).sum(axis=1)
    return np.minimum(assignment, ic.n_states - 1).astype(np.int64)


def homogeneity_statistic(ic, graph, c0=1.0):
    """Within-block variance of z0 per state, compared to c₀/d."""
    zbar = ic.block_means(graph)
    dev = ic.z0 - zbar[graph.blocks]
    stat = (dev * dev).sum(axis=0) / graph.n
    d = graphmod.degree_stats(graph).d
    threshold = c0 / d if d > 0 else np.inf
    return HomogeneityReport(
        per_state_statistic=stat,
        threshold=float(threshold),
        satisfied=stat <= threshold,
        c0=float(c0),
        d=float(d),
    )


def generator_from_config(config, states):
    """Build an ic generator callable(graph, seed) from a config mapping.

    Supported kinds: block_constant (values), degree_proportional (kappa,
    infected_state, susceptible_state), perron (same), modularity_set
    (restarts).  The returned callable is pure in (graph, seed).
    """
    if not isinstance(config, dict) or "kind" not in config:
        raise ConfigError("ic config must be an object with a 'kind' field")
    kind = config["kind"]
    states = tuple(states)
    if kind == "block_constant":
        if "values" not in config:
            raise ConfigError("ic.values required for block_constant")
        values = np.asarray(config["values"], dtype=np.float64)

        def gen(graph, seed):
            return ic_block_constant(values, graph)

    elif kind == "degree_proportional":
        kappa = float(config.get("kappa", 0.1))
        inf = config.get("infected_state", "I")
        sus = config.get("susceptible_state", "S")

        def gen(graph, seed):
            return ic_degree_proportional(graph, kappa, states, inf, sus)

    elif kind == "perron":
        kappa = float(config.get("kappa", 0.1))
        inf = config.get("infected_state", "I")
        sus = config.get("susceptible_state", "S")

        def gen(graph, seed):
            return ic_perron(graph, kappa, states, inf, sus)

    elif kind == "modularity_set":
        restarts = int(config.get("restarts", 32))

        def gen(graph, seed):
            return ic_modularity_set(graph, restarts=restarts, seed=seed,
                                     states=states)

    else:
        raise ConfigError(f"unknown ic kind {kind!r}")
    return gen


def save_ic(ic, path, states=None):
    """CSV with columns vertex,state,probability (17 significant digits)."""
    if states is None:
        states = [str(s) for s in range(ic.n_states)]
    lines = ["vertex,state,probability"]
    for i in range(ic.n):
        for s in range(ic.n_states):
            lines.append(f"{i},{states[s]},{fmt_real(ic.z0[i, s])}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_ic(path, states=None):
    """Read the vertex,state,probability CSV back into an InitialCondition."""
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "vertex,state,probability":
            raise ConfigError(f"{path}: unexpected header {header!r}")
        rows = []
        for line in fh:
            line = line.strip()
            if line:
                v, s, p = line.split(",")
                rows.append((int(v), s, float(p)))
    if not rows:
        raise ConfigError(f"{path}: empty initial condition")
    labels = []
    for _, s, _ in rows:
        if s not in labels:
            labels.append(s)
    if states is not None:
        if set(labels) != set(states):
            raise ConfigError(f"{path}: states {labels} != expected {list(states)}")
        labels = list(states)
    n = max(v for v, _, _ in rows) + 1
    z0 = np.zeros((n, len(labels)))
    seen = np.zeros((n, len(labels)), dtype=bool)
    for v, s, p in rows:
        z0[v, labels.index(s)] = p
        seen[v, labels.index(s)] = True
    if not seen.all():
        raise ConfigError(f"{path}: missing (vertex, state) entries")
    return InitialCondition(z0, {"kind": "file", "path": str(path)}), tuple(labels)
