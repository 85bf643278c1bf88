"""Exact stochastic simulation (Gillespie) and a master-equation oracle.

Trajectories carry integer block-state counts at grid times; block averages
are derived, so the per-block state fractions always sum to exactly one at
the counts level.  The master equation enumerates all |S|^N configurations
(capped) and integrates the forward Kolmogorov equation, giving exact means
to compare Monte Carlo ensembles against.
"""

import multiprocessing
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import initcond as icmod
from ._kernels import gillespie_kernel
from ._util import CapacityError, ConfigError, atomic_write_text, fmt_real, seed_sequence


@dataclass(eq=False)
class TrajectorySample:
    """Block-state counts of one CTMC path on the sample grid."""

    time_grid: np.ndarray
    block_counts: np.ndarray  # (T, K, S) int64
    block_sizes: np.ndarray
    seed: int
    replicate_id: int
    n_events: int = 0
    max_rate_drift: float = 0.0

    @property
    def block_averages(self):
        """ξ̄_{k,s}(t): counts over block sizes, shape (T, K, S)."""
        return self.block_counts / self.block_sizes[None, :, None].astype(np.float64)


@dataclass(eq=False)
class MasterSolution:
    """Exact E(ξ̄) and E(ξ̄²) curves from full state-space integration."""

    time_grid: np.ndarray
    exact_block_means: np.ndarray  # (T, K, S)
    exact_block_second_moments: np.ndarray  # (T, K, S)


def _check_grid(t_grid):
    t_grid = np.asarray(t_grid, dtype=np.float64)
    if t_grid.ndim != 1 or len(t_grid) < 1:
        raise ConfigError("t_grid must be a non-empty 1-d sequence")
    if t_grid[0] != 0.0:
        raise ConfigError("t_grid must start at 0")
    if np.any(np.diff(t_grid) < 0):
        raise ConfigError("t_grid must be sorted")
    return t_grid


def _kernel_args(graph, spec):
    if graph.params.rho <= 0:
        raise ConfigError("simulation requires rho > 0")
    adj = graph.adjacency
    return (
        adj.indptr,
        adj.indices,
        graph.blocks,
        graph.k,
        spec.spontaneous,
        spec.spontaneous_out(),
        spec.interaction,
        spec.interaction_out(),
        1.0 / (graph.n * graph.params.rho),
    )


def gillespie_run(graph, spec, assignment, t_grid, seed, replicate_id=0,
                  refresh_every=100_000):
    """One statistically exact CTMC path; deterministic given seed."""
    t_grid = _check_grid(t_grid)
    assignment = np.asarray(assignment, dtype=np.int64)
    if assignment.shape != (graph.n,):
        raise ConfigError("assignment must give one state per vertex")
    if assignment.min() < 0 or assignment.max() >= spec.n_states:
        raise ConfigError("assignment contains out-of-range state indices")
    (indptr, indices, blocks, k, spont, spont_out, inter, inter_out,
     inv_nrho) = _kernel_args(graph, spec)
    state = assignment.copy()
    out_counts = np.zeros((len(t_grid), k, spec.n_states), dtype=np.int64)
    kseed = int(seed_sequence(seed, 0xD7).generate_state(1, np.uint32)[0])
    n_events, max_drift = gillespie_kernel(
        indptr, indices, blocks, k, state, spont, spont_out, inter, inter_out,
        inv_nrho, t_grid, kseed, refresh_every, out_counts,
    )
    return TrajectorySample(
        time_grid=t_grid,
        block_counts=out_counts,
        block_sizes=graph.block_sizes,
        seed=int(seed),
        replicate_id=int(replicate_id),
        n_events=int(n_events),
        max_rate_drift=float(max_drift),
    )


# Worker context for ensemble replicates.  Set in the parent before forking;
# child processes inherit it, so the (graph, spec, ic) payload is never
# pickled per task.
_CTX = None

_KERNEL_WARM = False


def _warm_kernel():
    """Run the jit kernel once in this process so forked workers inherit the
    loaded machine code instead of each paying the compile-cache load."""
    global _KERNEL_WARM
    if _KERNEL_WARM:
        return
    from .graph import SbmParams, sbm_generate
    from .process import ProcessSpec

    tiny = sbm_generate(
        SbmParams(n=2, block_fractions=(1.0,), rho=0.5, weights=((0.0,),)), 0
    )
    spec = ProcessSpec(states=("a", "b"), spontaneous=np.zeros((2, 2)),
                       interaction=np.zeros((2, 2, 2)))
    gillespie_run(tiny, spec, np.zeros(2, dtype=np.int64),
                  np.array([0.0, 1.0]), 0)
    _KERNEL_WARM = True


def _replicate_seeds(master_seed, r):
    ic_seed = seed_sequence(master_seed, r, 0)
    dyn_seed = int(seed_sequence(master_seed, r, 1).generate_state(1, np.uint64)[0])
    return ic_seed, dyn_seed


def _run_replicate(r):
    graph, spec, ic, t_grid, master_seed, refresh_every = _CTX
    ic_seed, dyn_seed = _replicate_seeds(master_seed, r)
    assignment = icmod.ic_bernoulli_sample(ic, ic_seed)
    sample = gillespie_run(graph, spec, assignment, t_grid, dyn_seed,
                           replicate_id=r, refresh_every=refresh_every)
    return sample


def gillespie_ensemble(graph, spec, ic, t_grid, n_replicates, master_seed,
                       parallelism=1, refresh_every=100_000):
    """Independent replicates with per-replicate derived seeds.

    Replicate r draws its initial assignment from seed (master_seed, r, 0)
    and its dynamics from (master_seed, r, 1); output is ordered by
    replicate id and bit-identical at any parallelism.
    """
    if n_replicates < 1:
        raise ConfigError("n_replicates must be >= 1")
    if ic.n != graph.n or ic.n_states != spec.n_states:
        raise ConfigError("initial condition shape does not match graph/process")
    global _CTX
    _CTX = (graph, spec, ic, np.asarray(t_grid, dtype=np.float64), int(master_seed),
            int(refresh_every))
    try:
        if parallelism is None:
            parallelism = os.cpu_count() or 1
        if parallelism <= 1 or n_replicates == 1:
            return [_run_replicate(r) for r in range(n_replicates)]
        _warm_kernel()
        chunk = max(1, n_replicates // (int(parallelism) * 8))
        with ProcessPoolExecutor(
            max_workers=int(parallelism),
            mp_context=multiprocessing.get_context("fork"),
        ) as pool:
            return list(pool.map(_run_replicate, range(n_replicates),
                                 chunksize=chunk))
    finally:
        _CTX = None


def master_equation_solve(graph, spec, ic, t_grid, cap=200_000,
                          max_rate_step=0.1):
    """Exact forward equation on the full configuration space.

    Enforces |S|^N <= cap; integrates with fixed-step RK4 chosen so that
    step · max total outflow rate <= max_rate_step.
    """
    t_grid = _check_grid(t_grid)
    n, s = graph.n, spec.n_states
    n_configs = s ** n
    if n_configs > cap:
        raise CapacityError(
            f"configuration space |S|^N = {s}^{n} = {n_configs} exceeds cap {cap}"
        )
    if ic.n != n or ic.n_states != s:
        raise ConfigError("initial condition shape does not match graph/process")
    if graph.params.rho <= 0:
        raise ConfigError("master equation requires rho > 0")
    inv_nrho = 1.0 / (n * graph.params.rho)

    powers = s ** np.arange(n, dtype=np.int64)
    digits = (np.arange(n_configs, dtype=np.int64)[:, None] // powers[None, :]) % s
    digits = digits.astype(np.int8)

    adj = graph.adjacency
    rows, cols, data = [], [], []
    out_rate = np.zeros(n_configs)
    base = np.arange(n_configs, dtype=np.int64)
    for i in range(n):
        nbrs = adj.indices[adj.indptr[i]:adj.indptr[i + 1]]
        counts_i = np.zeros((n_configs, s))
        for a in range(s):
            for j in nbrs:
                counts_i[:, a] += digits[:, j] == a
        di = digits[:, i].astype(np.int64)
        for s_from in range(s):
            sel = di == s_from
            if not sel.any():
                continue
            for s_to in range(s):
                if s_to == s_from:
                    continue
                r = spec.spontaneous[s_from, s_to] + inv_nrho * (
                    counts_i[sel] @ spec.interaction[:, s_from, s_to]
                )
                nz = r > 0
                if not nz.any():
                    continue
                src = base[sel][nz]
                dst = src + (s_to - s_from) * powers[i]
                rows.append(dst)
                cols.append(src)
                data.append(r[nz])
                out_rate[src] += r[nz]
    if rows:
        gen = sp.csr_matrix(
            (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
            shape=(n_configs, n_configs),
        )
        gen = gen - sp.diags(out_rate)
    else:
        gen = sp.csr_matrix((n_configs, n_configs))

    p = np.ones(n_configs)
    for i in range(n):
        p *= ic.z0[i, digits[:, i]]

    sizes = graph.block_sizes.astype(np.float64)
    frac = np.zeros((n_configs, graph.k, s))
    for i in range(n):
        b = graph.blocks[i]
        for a in range(s):
            frac[:, b, a] += (digits[:, i] == a) / sizes[b]
    frac2 = frac * frac

    maxrate = float(out_rate.max()) if n_configs else 0.0
    means = np.empty((len(t_grid), graph.k, s))
    second = np.empty((len(t_grid), graph.k, s))

    def record(idx, pvec):
        means[idx] = np.tensordot(pvec, frac, axes=1)
        second[idx] = np.tensordot(pvec, frac2, axes=1)

    record(0, p)
    for idx in range(1, len(t_grid)):
        span = t_grid[idx] - t_grid[idx - 1]
        if span == 0:
            record(idx, p)
            continue
        n_steps = 1 if maxrate == 0 else max(1, int(np.ceil(span * maxrate / max_rate_step)))
        h = span / n_steps
        for _ in range(n_steps):
            k1 = gen @ p
            k2 = gen @ (p + 0.5 * h * k1)
            k3 = gen @ (p + 0.5 * h * k2)
            k4 = gen @ (p + h * k3)
            p = p + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        record(idx, p)
    return MasterSolution(
        time_grid=t_grid,
        exact_block_means=means,
        exact_block_second_moments=second,
    )


def save_trajectories(samples, path, states=None):
    """CSV with columns replicate,t,block,state,xbar."""
    lines = ["replicate,t,block,state,xbar"]
    for sample in samples:
        xbar = sample.block_averages
        if states is None:
            states = [str(s) for s in range(xbar.shape[2])]
        for ti, t in enumerate(sample.time_grid):
            for k in range(xbar.shape[1]):
                for s in range(xbar.shape[2]):
                    lines.append(
                        f"{sample.replicate_id},{fmt_real(t)},{k},{states[s]},"
                        f"{fmt_real(xbar[ti, k, s])}"
                    )
    atomic_write_text(path, "\n".join(lines) + "\n")
