"""Deterministic mean-field solvers: quenched NIMFA, annealed NIMFA, BHMFA.

All three integrate the same bilinear vector field

    dz_{u,s}/dt = Σ_{s'} q_{s'→s} z_{u,s'} + Σ_{s',s̃} q_{s̃;s'→s} z_{u,s'} P_{u,s̃}

with derived-diagonal rate tables; they differ only in the coupling field P:
B·z (quenched), B̂·z (annealed, block-mean driven), or the K-level mixture
Σ_l w_kl π_l x_{l,s̃} (BHMFA).  The integrator is fixed-step classical RK4;
since averaging over a block commutes with every RK4 stage when P is
block-constant, the annealed solution block-averages onto the BHMFA one to
rounding error.
"""

from dataclasses import dataclass

import numpy as np

from . import graph as graphmod
from ._util import ConfigError, NumericalError, block_sizes_from_fractions


@dataclass(eq=False)
class OdeSolution:
    """Time-gridded solution values (T, units, states) plus integrator report."""

    time_grid: np.ndarray
    values: np.ndarray
    variant: str
    integrator_report: dict


def _check_grid(t_grid):
    t_grid = np.asarray(t_grid, dtype=np.float64)
    if t_grid.ndim != 1 or len(t_grid) < 1 or t_grid[0] != 0.0 or np.any(
        np.diff(t_grid) < 0
    ):
        raise ConfigError("t_grid must be sorted and start at 0")
    return t_grid


def _rate_tables(spec):
    qs = spec.spontaneous_full()
    qi = spec.interaction_full()
    lam_spont = float(spec.spontaneous_out().max(initial=0.0))
    lam_inter = float(spec.interaction_out().max(initial=0.0))
    return qs, qi, lam_spont, lam_inter


def _integrate(z0, rhs, t_grid, h_target, variant, tol):
    z = np.array(z0, dtype=np.float64)
    values = np.empty((len(t_grid),) + z.shape)
    values[0] = z
    total_steps = 0
    for idx in range(1, len(t_grid)):
        span = t_grid[idx] - t_grid[idx - 1]
        if span == 0.0:
            values[idx] = z
            continue
        n_steps = max(1, int(np.ceil(span / h_target)))
        h = span / n_steps
        # divergence shows up as inf/nan and is reported below, so the
        # intermediate overflow warnings carry no extra information
        with np.errstate(over="ignore", invalid="ignore"):
            for _ in range(n_steps):
                k1 = rhs(z)
                k2 = rhs(z + 0.5 * h * k1)
                k3 = rhs(z + 0.5 * h * k2)
                k4 = rhs(z + h * k3)
                z = z + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        total_steps += n_steps
        values[idx] = z
    if not np.all(np.isfinite(values)):
        raise NumericalError(f"{variant}: non-finite values during integration")
    violation = max(
        float(np.maximum(-values, 0.0).max()),
        float(np.maximum(values - 1.0, 0.0).max()),
        float(np.abs(values.sum(axis=2) - 1.0).max()),
    )
    report = {
        "variant": variant,
        "step": h_target,
        "n_steps": total_steps,
        "max_simplex_violation": violation,
        "tol": tol,
    }
    if violation > tol:
        raise NumericalError(
            f"{variant}: simplex violation {violation:.3e} exceeds tol {tol:.1e} "
            f"(step {h_target}); not clamping"
        )
    return values, report


def _step_for(lam_spont, lam_inter, coupling_max, step, max_rate_step=0.1):
    if step is not None:
        if step <= 0:
            raise ConfigError("step override must be positive")
        return float(step)
    lam = lam_spont + coupling_max * lam_inter
    if lam <= 0:
        return 0.01
    return min(0.01, max_rate_step / lam)


def _bilinear_rhs(qs, qi, field):
    """RHS closure: spontaneous flow plus coupling-field interaction flow."""
    n_states = qs.shape[0]

    def rhs(z):
        p = field(z)
        out = z @ qs
        for a in range(n_states):
            out += (z @ qi[a]) * p[:, a:a + 1]
        return out

    return rhs


def nimfa_solve(graph, spec, ic, t_grid, tol=1e-8, step=None):
    """Quenched NIMFA on the realized graph (coupling field B·z)."""
    t_grid = _check_grid(t_grid)
    if ic.n != graph.n or ic.n_states != spec.n_states:
        raise ConfigError("initial condition shape does not match graph/process")
    if graph.params.rho <= 0:
        raise ConfigError("NIMFA requires rho > 0")
    qs, qi, lam_s, lam_i = _rate_tables(spec)
    inv_nrho = 1.0 / (graph.n * graph.params.rho)
    coupling_max = float(graph.degrees().max(initial=0)) * inv_nrho
    h = _step_for(lam_s, lam_i, coupling_max, step)
    adj = graph.adjacency

    def field(z):
        return adj @ z * inv_nrho

    values, report = _integrate(ic.z0, _bilinear_rhs(qs, qi, field), t_grid, h,
                                "nimfa", tol)
    return OdeSolution(t_grid, values, "nimfa", report)


def annealed_nimfa_solve(params, blocks, spec, ic, t_grid, tol=1e-8, step=None):
    """Annealed NIMFA: same dynamics with B replaced by B̂ (block-mean driven)."""
    t_grid = _check_grid(t_grid)
    blocks = np.asarray(blocks)
    if ic.n != params.n or ic.n_states != spec.n_states:
        raise ConfigError("initial condition shape does not match params/process")
    qs, qi, lam_s, lam_i = _rate_tables(spec)
    pi_hat = np.bincount(blocks, minlength=params.k) / params.n
    coupling_max = float((params.weights @ pi_hat).max())
    h = _step_for(lam_s, lam_i, coupling_max, step)

    def field(z):
        return graphmod.annealed_matrix_apply(params, blocks, z)

    values, report = _integrate(ic.z0, _bilinear_rhs(qs, qi, field), t_grid, h,
                                "annealed_nimfa", tol)
    return OdeSolution(t_grid, values, "annealed_nimfa", report)


def bhmfa_solve(params, spec, x0, t_grid, tol=1e-8, step=None, block_sizes=None):
    """Block-homogeneous mean field: K·|S| equations with mixture coupling.

    Uses realized block fractions N_l/N; by default block sizes come from
    the same largest-remainder rounding as graph generation, so the solution
    matches the block-average of the annealed solver exactly.
    """
    t_grid = _check_grid(t_grid)
    x0 = np.asarray(x0, dtype=np.float64)
    if x0.shape != (params.k, spec.n_states):
        raise ConfigError(f"x0 must be K x n_states = {params.k} x {spec.n_states}")
    if np.any(x0 < 0) or np.any(x0 > 1) or np.abs(x0.sum(axis=1) - 1).max() > 1e-12:
        raise ConfigError("x0 rows must lie on the probability simplex")
    if block_sizes is None:
        block_sizes = block_sizes_from_fractions(params.n, params.block_fractions)
    pi_hat = np.asarray(block_sizes, dtype=np.float64) / params.n
    qs, qi, lam_s, lam_i = _rate_tables(spec)
    w = params.weights
    coupling_max = float((w @ pi_hat).max())
    h = _step_for(lam_s, lam_i, coupling_max, step)

    def field(x):
        return w @ (pi_hat[:, None] * x)

    values, report = _integrate(x0, _bilinear_rhs(qs, qi, field), t_grid, h,
                                "bhmfa", tol)
    return OdeSolution(t_grid, values, "bhmfa", report)


def block_average_solution(solution, blocks, k):
    """Block-average a vertex-level OdeSolution onto a (T, K, S) solution."""
    out = np.empty((len(solution.time_grid), k, solution.values.shape[2]))
    for idx in range(len(solution.time_grid)):
        out[idx] = graphmod.block_means(solution.values[idx], blocks, k)
    return OdeSolution(
        time_grid=solution.time_grid,
        values=out,
        variant=solution.variant + "-blockavg",
        integrator_report=dict(solution.integrator_report),
    )
