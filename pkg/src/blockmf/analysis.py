"""Approximation-error estimation, closed-form oracles, and scaling sweeps.

The estimand is the second-moment norm ‖ξ̄_{k,s}(τ) − x_{k,s}(τ)‖ =
√E[(ξ̄−x)²] over the joint randomness of graph, initial condition, and
dynamics; x is the block-homogeneous mean-field solution of the realized
graph.  Aggregation uses compensated summation so results do not depend on
replicate or graph ordering.  Sweeps couple density to size via d = ⌈N^α⌉
and fit log-log slopes with percentile-bootstrap confidence intervals.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import graph as graphmod
from . import initcond as icmod
from . import meanfield, simulate
from ._util import ConfigError, fmt_real, rng_from, seed_sequence


@dataclass(eq=False)
class ErrorReport:
    """Estimated ‖ξ̄−x‖ per (τ, block, state) with bootstrap uncertainty."""

    t_grid: np.ndarray
    estimate: np.ndarray  # (T, K, S)
    se: np.ndarray  # (T, K, S)
    summary: float  # sup over grid, max over (block, state)
    summary_se: float
    n_graphs: int
    n_replicates: int
    per_graph_mean_square: np.ndarray = field(default=None, repr=False)

    def to_json_dict(self):
        return {
            "t_grid": self.t_grid.tolist(),
            "estimate": self.estimate.tolist(),
            "se": self.se.tolist(),
            "summary": self.summary,
            "summary_se": self.summary_se,
            "n_graphs": self.n_graphs,
            "n_replicates": self.n_replicates,
        }

    def to_csv(self):
        lines = ["t,block,state,estimate,se"]
        for ti, t in enumerate(self.t_grid):
            for k in range(self.estimate.shape[1]):
                for s in range(self.estimate.shape[2]):
                    lines.append(
                        f"{fmt_real(t)},{k},{s},{fmt_real(self.estimate[ti, k, s])},"
                        f"{fmt_real(self.se[ti, k, s])}"
                    )
        return "\n".join(lines) + "\n"


def fsum_mean_stack(arrays):
    """Cellwise mean of equal-shaped arrays by exact compensated summation.

    Independent of the order of `arrays` bit for bit.
    """
    arrays = list(arrays)
    flat = [np.asarray(a, dtype=np.float64).ravel() for a in arrays]
    shape = np.asarray(arrays[0]).shape
    out = np.empty(flat[0].shape[0])
    for c in range(out.shape[0]):
        out[c] = math.fsum(f[c] for f in flat) / len(flat)
    return out.reshape(shape)


def error_estimate(graph_source, spec, ic_generator, t_grid, n_graphs,
                   n_replicates, master_seed, parallelism=1,
                   n_bootstrap=1000):
    """Monte Carlo estimate of √E[(ξ̄−x)²] per grid cell.

    graph_source: SbmParams (a fresh graph per seed) or a fixed Graph.
    ic_generator: callable (graph, seed) -> InitialCondition.
    Standard errors come from a graph-level bootstrap, falling back to
    replicate-level when n_graphs == 1.
    """
    if n_graphs * n_replicates < 2:
        raise ConfigError("need n_graphs * n_replicates >= 2")
    t_grid = np.asarray(t_grid, dtype=np.float64)
    fixed_graph = isinstance(graph_source, graphmod.Graph)
    per_graph = []
    first_graph_sq = None
    for g in range(n_graphs):
        if fixed_graph:
            graph = graph_source
        else:
            gseed = int(seed_sequence(master_seed, g, 0).generate_state(1, np.uint64)[0])
            graph = graphmod.sbm_generate(graph_source, gseed)
        ic_seed = int(seed_sequence(master_seed, g, 1).generate_state(1, np.uint64)[0])
        ic = ic_generator(graph, ic_seed)
        x0 = ic.block_means(graph)
        x = meanfield.bhmfa_solve(graph.params, spec, x0, t_grid,
                                  block_sizes=graph.block_sizes).values
        ens_seed = int(seed_sequence(master_seed, g, 2).generate_state(1, np.uint64)[0])
        samples = simulate.gillespie_ensemble(
            graph, spec, ic, t_grid, n_replicates, ens_seed,
            parallelism=parallelism,
        )
        sq = [(s.block_averages - x) ** 2 for s in samples]
        per_graph.append(fsum_mean_stack(sq))
        if g == 0 and n_graphs == 1:
            first_graph_sq = np.stack(sq)
    mean_sq = fsum_mean_stack(per_graph)
    estimate = np.sqrt(mean_sq)
    summary = float(estimate.max())

    rng = rng_from(master_seed, 0xB007)
    if n_graphs > 1:
        stack = np.stack(per_graph)  # (G, T, K, S)
    else:
        stack = first_graph_sq  # (R, T, K, S)
    m = stack.shape[0]
    idx = rng.integers(0, m, size=(n_bootstrap, m))
    boot = np.sqrt(stack[idx].mean(axis=1))  # (B, T, K, S)
    se = boot.std(axis=0, ddof=1)
    summary_se = float(boot.reshape(n_bootstrap, -1).max(axis=1).std(ddof=1))
    return ErrorReport(
        t_grid=t_grid,
        estimate=estimate,
        se=se,
        summary=summary,
        summary_se=summary_se,
        n_graphs=int(n_graphs),
        n_replicates=int(n_replicates),
        per_graph_mean_square=np.stack(per_graph),
    )


def degree_error_closed_form(n, d, t):
    """Exact ‖ξ̄_a(t) − x_a(t)‖ for the degree process started from all-a.

    Evaluates the binomial moment generating functions exactly:
    E e^{−δt/d} = (1 − ρ(1−e^{−t/d}))^{N−1} with ρ = d/(N−1), plus the
    two-vertex term with its shared-edge factor.
    """
    n = int(n)
    if n < 2:
        raise ConfigError("need n >= 2")
    rho = d / (n - 1)
    if not (0.0 < rho <= 1.0):
        raise ConfigError(f"d={d} gives rho={rho} outside (0, 1]")
    if t < 0:
        raise ConfigError("t must be nonnegative")
    g1 = -np.expm1(-t / d)  # 1 - e^{-t/d}
    g2 = -np.expm1(-2.0 * t / d)
    e1 = np.exp((n - 1) * np.log1p(-rho * g1))
    e2 = np.exp((n - 1) * np.log1p(-rho * g2))
    e12 = (1.0 - rho * g2) * np.exp(2.0 * (n - 2) * np.log1p(-rho * g1))
    err2 = (
        (e1 - e2) / n
        + (1.0 - 1.0 / n) * e12
        + e2 / n
        - 2.0 * math.exp(-t) * e1
        + math.exp(-2.0 * t)
    )
    return math.sqrt(max(err2, 0.0))


@dataclass
class CatalystGapReport:
    """Exact |z̄_a(t) − x_a(t)| for the catalyst process, plus the lower bound.

    lower_bound is the t=1 inequality e^{−z̄_c(0)}·(1/N)z_a(0)'(B−B̂)z_c(0)
    − ‖B−B̂‖₂²/2; it is reported for any t but only claimed at t=1.
    """

    t: float
    gap: float
    lower_bound: float
    inner_term: float
    spectral_value: float


def catalyst_closed_form_gap(graph, ic, t=1.0, spectral_tol=1e-4):
    """Deterministic catalyst gap from the closed forms, no integration.

    ic columns are interpreted in preset order (a, b, c).
    """
    if ic.n_states != 3:
        raise ConfigError("catalyst gap needs a 3-state (a, b, c) initial condition")
    if ic.n != graph.n:
        raise ConfigError("initial condition does not match graph size")
    za0 = ic.z0[:, 0]
    zc0 = ic.z0[:, 2]
    bzc = graphmod.normalized_adjacency_apply(graph, zc0)
    zbar_a = float(np.mean(za0 * np.exp(-t * bzc)))

    sizes = graph.block_sizes.astype(np.float64)
    pi_hat = sizes / graph.n
    x0 = ic.block_means(graph)
    mix = graph.params.weights @ (pi_hat * x0[:, 2])
    xbar_a = float(pi_hat @ (x0[:, 0] * np.exp(-t * mix)))

    gap = abs(zbar_a - xbar_a)
    dev = bzc - graphmod.annealed_matrix_apply(graph.params, graph.blocks, zc0)
    inner = float(za0 @ dev) / graph.n
    spectral = graphmod.spectral_deviation(graph, tol=spectral_tol)
    zc_mean = float(zc0.mean())
    lower = math.exp(-zc_mean) * inner - 0.5 * float(spectral) ** 2
    return CatalystGapReport(
        t=float(t),
        gap=gap,
        lower_bound=lower,
        inner_term=inner,
        spectral_value=float(spectral),
    )


@dataclass(eq=False)
class DiagnosticsReport:
    """Error-decomposition magnitudes and concentration-event flags."""

    t_grid: np.ndarray
    delta_rms: np.ndarray  # (T,), (1/N)·‖running sup |z−ẑ|‖₂², monotone
    delta_star_rms: np.ndarray  # (T,), same for ẑ−z̃
    h_curves: np.ndarray  # (T, K, S), |block mean of z − x|
    degree_event: bool  # max realized degree <= c1'·d
    spectral_event: bool  # ‖B−B̂‖₂ <= c1/√d
    joint_event: bool
    spectral_value: float
    max_degree: int
    d: float
    c1_prime: float
    c1: float


def diagnostics(graph, spec, ic, t_grid, tol=1e-8, c1_prime=2.0, c1=3.0,
                spectral_tol=1e-4):
    """Solve z, ẑ, z̃ and report the decomposition magnitudes and event flags."""
    z = meanfield.nimfa_solve(graph, spec, ic, t_grid, tol=tol)
    zhat = meanfield.annealed_nimfa_solve(graph.params, graph.blocks, spec, ic,
                                          t_grid, tol=tol)
    x = meanfield.bhmfa_solve(graph.params, spec, ic.block_means(graph), t_grid,
                              tol=tol, block_sizes=graph.block_sizes)
    ztilde = x.values[:, graph.blocks, :]  # block-constant start stays block-constant

    def running_sup_rms(a, b):
        dev = np.abs(a - b).max(axis=2)  # (T, N), max over states
        dev = np.maximum.accumulate(dev, axis=0)  # running sup over grid
        return (dev * dev).mean(axis=1)

    delta_rms = running_sup_rms(z.values, zhat.values)
    delta_star_rms = running_sup_rms(zhat.values, ztilde)
    zbar = meanfield.block_average_solution(z, graph.blocks, graph.k)
    h_curves = np.abs(zbar.values - x.values)

    stats = graphmod.degree_stats(graph)
    max_deg = int(stats.realized.max(initial=0))
    spectral = graphmod.spectral_deviation(graph, tol=spectral_tol)
    degree_event = max_deg <= c1_prime * stats.d
    spectral_event = float(spectral) <= c1 / math.sqrt(stats.d) if stats.d > 0 else True
    return DiagnosticsReport(
        t_grid=np.asarray(t_grid, dtype=np.float64),
        delta_rms=delta_rms,
        delta_star_rms=delta_star_rms,
        h_curves=h_curves,
        degree_event=bool(degree_event),
        spectral_event=bool(spectral_event),
        joint_event=bool(degree_event and spectral_event),
        spectral_value=float(spectral),
        max_degree=max_deg,
        d=stats.d,
        c1_prime=float(c1_prime),
        c1=float(c1),
    )


def d_from_alpha(n, alpha):
    """d = ⌈N^α⌉ with a tiny slack so exact integer powers stay exact.

    Clamped to [1, N−1] so the realized ρ = d/(N−1) is a valid density.
    """
    return min(max(1, int(math.ceil(n ** alpha - 1e-9))), n - 1)


@dataclass
class SweepPoint:
    n: int
    d: int
    rho: float
    error: float
    se: float


@dataclass(eq=False)
class SweepResult:
    """Design points plus log-log slope fits of error vs d and vs N."""

    alpha: float
    t: float
    estimator: str
    points: list
    slope_vs_d: dict
    slope_vs_n: dict
    bound_violations: int = 0

    def to_json_dict(self):
        return {
            "alpha": self.alpha,
            "t": self.t,
            "estimator": self.estimator,
            "points": [
                {"N": p.n, "d": p.d, "rho": p.rho, "error": p.error, "se": p.se}
                for p in self.points
            ],
            "slope_vs_d": self.slope_vs_d,
            "slope_vs_N": self.slope_vs_n,
            "bound_violations": self.bound_violations,
        }

    def to_csv(self):
        lines = ["N,d,rho,error,se"]
        for p in self.points:
            lines.append(
                f"{p.n},{p.d},{fmt_real(p.rho)},{fmt_real(p.error)},{fmt_real(p.se)}"
            )
        return "\n".join(lines) + "\n"


def _fit_slope(xs, errors):
    mask = np.asarray(errors) > 0
    if mask.sum() < 2:
        return 0.0
    return float(np.polyfit(np.log(np.asarray(xs, dtype=float)[mask]),
                            np.log(np.asarray(errors)[mask]), 1)[0])


def scaling_sweep(spec, ic_config, alpha, n_list, t, n_graphs, n_replicates,
                  master_seed, estimator="mc", n_points=41, parallelism=1,
                  n_bootstrap=1000):
    """Error-vs-(N, d) sweep along the coupling d = ⌈N^α⌉, ρ = d/(N−1).

    estimator: 'mc' (full Monte Carlo pipeline), 'degree_closed_form'
    (exact oracle, requires the degree preset started from all-a), or
    'catalyst_gap' (exact deterministic catalyst gap with modularity-set
    ic; also checks the closed-form lower-bound inequality per instance).
    """
    n_list = [int(n) for n in n_list]
    if len(n_list) < 4:
        raise ConfigError("scaling sweep needs at least 4 values of N")
    points = []
    per_point_values = []  # per-instance values for slope bootstrap
    bound_violations = 0
    t_grid = np.linspace(0.0, t, int(n_points))

    for n in n_list:
        d = d_from_alpha(n, alpha)
        rho = d / (n - 1)
        if estimator == "degree_closed_form":
            err = degree_error_closed_form(n, d, t)
            points.append(SweepPoint(n, d, rho, err, 0.0))
            per_point_values.append(None)
            continue
        params = graphmod.SbmParams(n=n, block_fractions=(1.0,), rho=rho,
                                    weights=((1.0,),))
        if estimator == "catalyst_gap":
            gaps = []
            for g in range(n_graphs):
                gseed = int(seed_sequence(master_seed, n, g).generate_state(
                    1, np.uint64)[0])
                graph = graphmod.sbm_generate(params, gseed)
                gen = icmod.generator_from_config(ic_config, ("a", "b", "c"))
                ic = gen(graph, gseed)
                rep = catalyst_closed_form_gap(graph, ic, t=t)
                if rep.gap < rep.lower_bound:
                    bound_violations += 1
                gaps.append(rep.gap)
            gaps = np.asarray(gaps)
            err = math.sqrt(fsum_mean_stack([g * g for g in gaps]).item())
            rng = rng_from(master_seed, 0xB007, n)
            idx = rng.integers(0, len(gaps), size=(n_bootstrap, len(gaps)))
            boot = np.sqrt((gaps[idx] ** 2).mean(axis=1))
            se = float(boot.std(ddof=1)) if len(gaps) > 1 else 0.0
            points.append(SweepPoint(n, d, rho, err, se))
            per_point_values.append(gaps ** 2)
        elif estimator == "mc":
            gen = icmod.generator_from_config(ic_config, spec.states)
            report = error_estimate(params, spec, gen, t_grid, n_graphs,
                                    n_replicates, int(seed_sequence(
                                        master_seed, n).generate_state(
                                        1, np.uint64)[0]),
                                    parallelism=parallelism)
            points.append(SweepPoint(n, d, rho, report.summary,
                                     report.summary_se))
            # per-graph sup-cell mean squares for the slope bootstrap
            per_point_values.append(
                report.per_graph_mean_square.reshape(n_graphs, -1))
        else:
            raise ConfigError(f"unknown estimator {estimator!r}")

    ds = [p.d for p in points]
    ns = [p.n for p in points]
    errs = [p.error for p in points]
    est_d = _fit_slope(ds, errs)
    est_n = _fit_slope(ns, errs)

    if estimator == "degree_closed_form":
        slope_d = {"est": est_d, "lo": est_d, "hi": est_d}
        slope_n = {"est": est_n, "lo": est_n, "hi": est_n}
    else:
        rng = rng_from(master_seed, 0x510BE)
        sd, sn = [], []
        for _ in range(n_bootstrap):
            boot_errs = []
            for values in per_point_values:
                m = values.shape[0]
                pick = values[rng.integers(0, m, size=m)]
                cellmeans = pick.mean(axis=0)
                boot_errs.append(math.sqrt(cellmeans.max()))
            sd.append(_fit_slope(ds, boot_errs))
            sn.append(_fit_slope(ns, boot_errs))
        slope_d = {
            "est": est_d,
            "lo": float(np.percentile(sd, 2.5)),
            "hi": float(np.percentile(sd, 97.5)),
        }
        slope_n = {
            "est": est_n,
            "lo": float(np.percentile(sn, 2.5)),
            "hi": float(np.percentile(sn, 97.5)),
        }
    return SweepResult(
        alpha=float(alpha),
        t=float(t),
        estimator=estimator,
        points=points,
        slope_vs_d=slope_d,
        slope_vs_n=slope_n,
        bound_violations=bound_violations,
    )
