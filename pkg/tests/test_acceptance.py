"""End-to-end acceptance checks.

Each test prints one CRITERION line (surfaced by -rA) and asserts both the
quantitative target and its runtime budget.  Tolerances: closed-form matches
at 1e-8, Monte Carlo at 4 standard errors, scaling exponents inside fixed
windows, randomized property suites at 1000 cases per property.
"""

import json
import os
import time

import numpy as np

from blockmf import (
    SbmParams,
    annealed_nimfa_solve,
    bhmfa_solve,
    catalyst_closed_form_gap,
    degree_error_closed_form,
    error_estimate,
    gillespie_ensemble,
    gillespie_run,
    homogeneity_statistic,
    ic_block_constant,
    ic_degree_proportional,
    ic_modularity_set,
    master_equation_solve,
    nimfa_solve,
    normalized_adjacency_apply,
    preset_catalyst,
    preset_degree,
    preset_sir,
    sbm_generate,
    scaling_sweep,
    spectral_deviation,
)
from blockmf.analysis import fsum_mean_stack
from blockmf.cli import main as cli_main
from blockmf.initcond import InitialCondition
from blockmf.meanfield import block_average_solution
from blockmf.process import ProcessSpec

WORKERS = min(8, os.cpu_count() or 1)


def er_params(n, d):
    return SbmParams(n=n, block_fractions=(1.0,), rho=d / (n - 1),
                     weights=((1.0,),))


def report(num, ok, detail):
    line = f"CRITERION {num} {'PASS' if ok else 'FAIL'}: {detail}"
    print(line)
    return line


def random_process(rng, n_states, max_rate=2.0):
    labels = tuple(f"s{i}" for i in range(n_states))
    spont = rng.uniform(0, max_rate, size=(n_states, n_states))
    inter = rng.uniform(0, max_rate, size=(n_states, n_states, n_states))
    np.fill_diagonal(spont, 0.0)
    for a in range(n_states):
        np.fill_diagonal(inter[a], 0.0)
    return ProcessSpec(states=labels, spontaneous=spont, interaction=inter)


def test_criterion_1_closed_form_solvers():
    start = time.perf_counter()
    n, d = 1000, 50
    params = er_params(n, d)
    g = sbm_generate(params, 101)
    grid = np.linspace(0.0, 2.0, 41)

    rng = np.random.default_rng(11)
    ic = InitialCondition(rng.dirichlet([2.0, 1.0, 2.0], size=n))
    sol = nimfa_solve(g, preset_catalyst(), ic, grid)
    bz_c = normalized_adjacency_apply(g, ic.z0[:, 2])
    worst = 0.0
    for ti, t in enumerate(grid):
        za = ic.z0[:, 0] * np.exp(-bz_c * t)
        worst = max(worst,
                    np.abs(sol.values[ti, :, 0] - za).max(),
                    np.abs(sol.values[ti, :, 2] - ic.z0[:, 2]).max())

    z0 = np.zeros((n, 2))
    z0[:, 0] = 1.0
    sol_d = nimfa_solve(g, preset_degree(), InitialCondition(z0), grid)
    deg = g.degrees().astype(float)
    for ti, t in enumerate(grid):
        expect = np.exp(-deg * t / (n * params.rho))
        worst = max(worst, np.abs(sol_d.values[ti, :, 0] - expect).max())

    wall = time.perf_counter() - start
    ok = worst <= 1e-8 and wall < 10.0
    report(1, ok, f"quenched solver vs closed forms, max err {worst:.2e} "
                  f"(tol 1e-8), {wall:.1f}s (<10s)")
    assert ok


def test_criterion_2_block_averaging_identity():
    start = time.perf_counter()
    rng = np.random.default_rng(202)
    worst = 0.0
    for trial in range(20):
        k = int(rng.integers(1, 4))
        fractions = rng.dirichlet(np.full(k, 5.0))
        fractions = 0.15 + 0.85 * fractions  # keep every block populated
        fractions /= fractions.sum()
        w = rng.uniform(0.2, 1.5, size=(k, k))
        w = (w + w.T) / 2
        n = int(rng.integers(60, 151))
        params = SbmParams(n=n, block_fractions=tuple(fractions),
                           rho=float(rng.uniform(0.05, 0.5)),
                           weights=tuple(map(tuple, w)))
        g = sbm_generate(params, 1000 + trial)
        if trial == 0:
            spec = preset_sir(1.3, 0.7)
        elif trial == 1:
            spec = preset_catalyst()
        elif trial == 2:
            spec = preset_degree()
        else:
            spec = random_process(rng, int(rng.integers(2, 5)))
        ic = InitialCondition(rng.dirichlet(np.ones(spec.n_states), size=n))
        grid = np.linspace(0.0, 1.0, 9)
        sol_v = annealed_nimfa_solve(params, g.blocks, spec, ic, grid)
        avg = block_average_solution(sol_v, g.blocks, k)
        sol_x = bhmfa_solve(params, spec, ic.block_means(g), grid,
                            block_sizes=g.block_sizes)
        worst = max(worst, float(np.abs(avg.values - sol_x.values).max()))
    wall = time.perf_counter() - start
    ok = worst <= 2e-8 and wall < 30.0
    report(2, ok, f"block-averaged annealed vs block system over 20 triples, "
                  f"max gap {worst:.2e} (tol 2e-8), {wall:.1f}s (<30s)")
    assert ok


def test_criterion_3_gillespie_vs_master_equation():
    start = time.perf_counter()
    reps = 10_000
    rng = np.random.default_rng(303)
    sis_inter = np.zeros((2, 2, 2))
    sis_inter[1, 0, 1] = 2.0
    sis_spont = np.zeros((2, 2))
    sis_spont[1, 0] = 1.0
    si_inter = np.zeros((2, 2, 2))
    si_inter[1, 0, 1] = 1.5
    instances = [
        ("SI n=16", 16, 0.4,
         ProcessSpec(states=("S", "I"), spontaneous=np.zeros((2, 2)),
                     interaction=si_inter),
         rng.dirichlet([3.0, 1.0], size=16)),
        ("SIS n=12", 12, 0.5,
         ProcessSpec(states=("S", "I"), spontaneous=sis_spont,
                     interaction=sis_inter),
         rng.dirichlet([2.0, 1.0], size=12)),
        ("SIR n=10", 10, 0.5, preset_sir(2.0, 1.0),
         rng.dirichlet([4.0, 1.0, 0.5], size=10)),
        ("catalyst n=10", 10, 0.5, preset_catalyst(),
         rng.dirichlet([1.0, 1.0, 1.0], size=10)),
        ("degree n=14", 14, 0.35, preset_degree(),
         np.column_stack([np.ones(14), np.zeros(14)])),
    ]
    worst_z = 0.0
    for idx, (name, n, rho, spec, z0) in enumerate(instances):
        params = SbmParams(n=n, block_fractions=(1.0,), rho=rho,
                           weights=((1.0,),))
        g = sbm_generate(params, 500 + idx)
        ic = InitialCondition(z0)
        grid = np.linspace(0.0, 1.0, 6)
        exact = master_equation_solve(g, spec, ic, grid)
        samples = gillespie_ensemble(g, spec, ic, grid, reps, 900 + idx,
                                     parallelism=WORKERS)
        mc = np.mean([s.block_averages for s in samples], axis=0)
        var = np.maximum(
            exact.exact_block_second_moments - exact.exact_block_means ** 2,
            0.0)
        se = np.sqrt(var / reps)
        diff = np.abs(mc - exact.exact_block_means)
        live = se > 0
        assert diff[~live].max(initial=0.0) < 1e-12
        worst_z = max(worst_z, float((diff[live] / se[live]).max()))
    wall = time.perf_counter() - start
    ok = worst_z <= 4.0 and wall < 300.0
    report(3, ok, f"ensemble means vs master equation on 5 instances x "
                  f"{reps} replicates, max |z| {worst_z:.2f} (<4), "
                  f"{wall:.0f}s (<300s)")
    assert ok


def test_criterion_4_degree_error_formula():
    start = time.perf_counter()
    grid = np.linspace(0.0, 1.0, 41)
    spec = preset_degree()

    def gen(graph, seed):
        z = np.zeros((graph.n, 2))
        z[:, 0] = 1.0
        return InitialCondition(z)

    worst_z = 0.0
    details = []
    for n, d in [(2 ** 12, 2 ** 4), (2 ** 12, 2 ** 6), (2 ** 14, 2 ** 5)]:
        rep = error_estimate(er_params(n, d), spec, gen, grid, n_graphs=30,
                             n_replicates=100, master_seed=7,
                             parallelism=WORKERS)
        est = rep.estimate[-1, 0, 0]
        se = rep.se[-1, 0, 0]
        cf = degree_error_closed_form(n, d, 1.0)
        z = abs(est - cf) / se
        worst_z = max(worst_z, z)
        details.append(f"(2^{n.bit_length()-1},2^{d.bit_length()-1}) z={z:.2f}")
    wall = time.perf_counter() - start
    ok = worst_z <= 4.0 and wall < 600.0
    report(4, ok, f"Monte Carlo error vs exact formula, {'; '.join(details)} "
                  f"(<4 SE), {wall:.0f}s (<600s)")
    assert ok


def test_criterion_5_error_scaling_degree():
    start = time.perf_counter()
    n_list = [2 ** a for a in range(10, 17)]
    ic_cfg = {"kind": "block_constant", "values": [[1.0, 0.0]]}
    res_d = scaling_sweep(preset_degree(), ic_cfg, 0.4, n_list, 2.0, 1, 1, 0,
                          estimator="degree_closed_form")
    res_n = scaling_sweep(preset_degree(), ic_cfg, 0.8, n_list, 2.0, 1, 1, 0,
                          estimator="degree_closed_form")
    slope_d = res_d.slope_vs_d["est"]
    slope_n = res_n.slope_vs_n["est"]
    wall = time.perf_counter() - start
    ok = (-1.15 <= slope_d <= -0.85) and (-0.65 <= slope_n <= -0.35) \
        and wall < 1800.0
    report(5, ok, f"error exponents: slope vs d {slope_d:.3f} in "
                  f"[-1.15,-0.85] (alpha=0.4), slope vs N {slope_n:.3f} in "
                  f"[-0.65,-0.35] (alpha=0.8), {wall:.1f}s (<1800s)")
    assert ok


def test_criterion_6_catalyst_gap_scaling():
    start = time.perf_counter()
    res = scaling_sweep(
        preset_catalyst(), {"kind": "modularity_set", "restarts": 32},
        alpha=0.4, n_list=[2 ** a for a in range(10, 15)], t=1.0,
        n_graphs=10, n_replicates=0, master_seed=11,
        estimator="catalyst_gap", parallelism=WORKERS)
    slope = res.slope_vs_d["est"]
    wall = time.perf_counter() - start
    ok = (-0.65 <= slope <= -0.35) and res.bound_violations == 0 \
        and wall < 1200.0
    report(6, ok, f"deterministic catalyst gap slope vs d {slope:.3f} in "
                  f"[-0.65,-0.35], lower-bound violations "
                  f"{res.bound_violations}/50, {wall:.0f}s (<1200s)")
    assert ok


def test_criterion_7_homogeneity_gate():
    start = time.perf_counter()
    params = er_params(2 ** 12, 2 ** 6)
    hom_ok = 0
    mod_violations = 0
    for seed in range(30):
        g = sbm_generate(params, 7000 + seed)
        ic = ic_degree_proportional(g, 0.1, ("S", "I", "R"))
        if homogeneity_statistic(ic, g).all_satisfied:
            hom_ok += 1
        icm = ic_modularity_set(g, restarts=32, seed=seed)
        if not homogeneity_statistic(icm, g).all_satisfied:
            mod_violations += 1
    wall = time.perf_counter() - start
    ok = hom_ok >= 28 and mod_violations == 30 and wall < 300.0
    report(7, ok, f"degree-proportional ic passes gate {hom_ok}/30 (>=28), "
                  f"modularity ic violates {mod_violations}/30 (=30), "
                  f"{wall:.0f}s (<300s)")
    assert ok


def test_criterion_8_spectral_concentration():
    start = time.perf_counter()
    n = 2 ** 12
    ds = [2 ** a for a in range(4, 9)]
    means = []
    for d in ds:
        params = er_params(n, d)
        vals = [float(spectral_deviation(sbm_generate(params, 8000 + 10 * d + s),
                                         tol=1e-3)) for s in range(5)]
        means.append(float(np.mean(vals)))
    band = [np.sqrt(d) * m for d, m in zip(ds, means)]
    width = max(band) - min(band)
    slope = float(np.polyfit(np.log(ds), np.log(means), 1)[0])
    wall = time.perf_counter() - start
    ok = width < 0.5 and (-0.6 <= slope <= -0.4) and wall < 600.0
    report(8, ok, f"sqrt(d)//B-Bhat// band width {width:.3f} (<0.5), "
                  f"log-log slope {slope:.3f} in [-0.6,-0.4], "
                  f"{wall:.0f}s (<600s)")
    assert ok


def _suite_simplex(cases, rng):
    graphs = [sbm_generate(er_params(int(rng.integers(20, 61)), 8),
                           int(rng.integers(1 << 30)))
              for _ in range(8)]
    for _ in range(cases):
        g = graphs[int(rng.integers(len(graphs)))]
        spec = random_process(rng, int(rng.integers(2, 5)),
                              max_rate=float(rng.uniform(0.5, 3.0)))
        ic = InitialCondition(rng.dirichlet(np.ones(spec.n_states), size=g.n))
        grid = np.linspace(0.0, float(rng.uniform(0.2, 0.6)), 4)
        kind = int(rng.integers(3))
        if kind == 0:
            sol = nimfa_solve(g, spec, ic, grid)
        elif kind == 1:
            sol = annealed_nimfa_solve(g.params, g.blocks, spec, ic, grid)
        else:
            sol = bhmfa_solve(g.params, spec, ic.block_means(g), grid,
                              block_sizes=g.block_sizes)
        if sol.integrator_report["max_simplex_violation"] > 1e-8:
            return False
    return True


def _suite_conservation(cases, rng):
    graphs = [sbm_generate(er_params(int(rng.integers(20, 61)), 6),
                           int(rng.integers(1 << 30)))
              for _ in range(8)]
    for _ in range(cases):
        g = graphs[int(rng.integers(len(graphs)))]
        spec = random_process(rng, int(rng.integers(2, 4)),
                              max_rate=float(rng.uniform(0.5, 4.0)))
        assignment = rng.integers(0, spec.n_states, size=g.n)
        grid = np.linspace(0.0, float(rng.uniform(0.5, 2.0)), 4)
        out = gillespie_run(g, spec, assignment, grid,
                            int(rng.integers(1 << 30)), refresh_every=1000)
        totals = out.block_counts.sum(axis=(1, 2))
        if not np.all(totals == g.n):
            return False
        if out.max_rate_drift > 1e-6:
            return False
    return True


def _suite_cli_determinism(cases, rng, tmp_path):
    presets = [
        ({"preset": "sir", "beta": 2.0, "gamma": 1.0},
         {"kind": "block_constant", "values": [[0.8, 0.2, 0.0]]}),
        ({"preset": "catalyst"},
         {"kind": "block_constant", "values": [[0.5, 0.0, 0.5]]}),
        ({"preset": "degree"},
         {"kind": "block_constant", "values": [[1.0, 0.0]]}),
    ]
    for case in range(cases):
        process, ic = presets[int(rng.integers(len(presets)))]
        cfg_obj = {
            "graph": {"n": int(rng.integers(16, 49)), "fractions": [1.0],
                      "rho": float(rng.uniform(0.1, 0.5)),
                      "weights": [[1.0]]},
            "process": process,
            "ic": ic,
            "t_grid": {"t_end": 0.5, "n_points": 3},
            "replication": {"n_graphs": 1,
                            "n_replicates": int(rng.integers(2, 6))},
            "master_seed": int(rng.integers(1 << 30)),
        }
        cfg = tmp_path / f"c{case}.json"
        cfg.write_text(json.dumps(cfg_obj))
        out1 = tmp_path / f"a{case}"
        out2 = tmp_path / f"b{case}"
        if cli_main(["simulate", "--config", str(cfg), "--out", str(out1),
                     "--parallelism", "1"]) != 0:
            return False
        if cli_main(["simulate", "--config", str(cfg), "--out", str(out2),
                     "--parallelism", "2"]) != 0:
            return False
        if (out1 / "trajectories.csv").read_bytes() != \
                (out2 / "trajectories.csv").read_bytes():
            return False
    return True


def _suite_permutation(cases, rng):
    g = sbm_generate(er_params(40, 8), 77)
    for _ in range(cases):
        arrays = [rng.normal(size=(3, 1, 2)) * 10.0 ** rng.integers(-6, 7)
                  for _ in range(int(rng.integers(3, 20)))]
        perm = rng.permutation(len(arrays))
        a = fsum_mean_stack(arrays)
        b = fsum_mean_stack([arrays[i] for i in perm])
        if not np.array_equal(a, b):
            return False
        z = rng.dirichlet([1.0, 1.0], size=g.n)
        vperm = rng.permutation(g.n)
        r1 = homogeneity_statistic(InitialCondition(z), g)
        r2 = homogeneity_statistic(InitialCondition(z[vperm]), g)
        if not np.allclose(r1.per_state_statistic, r2.per_state_statistic,
                           rtol=0, atol=1e-15):
            return False
    return True


def test_criterion_9_property_suites(tmp_path):
    start = time.perf_counter()
    rng = np.random.default_rng(909)
    results = {
        "simplex": _suite_simplex(1000, rng),
        "conservation+drift": _suite_conservation(1000, rng),
        "cli-parallel-determinism": _suite_cli_determinism(1000, rng, tmp_path),
        "permutation-invariance": _suite_permutation(1000, rng),
    }
    wall = time.perf_counter() - start
    ok = all(results.values()) and wall < 300.0
    detail = ", ".join(f"{k}:{'ok' if v else 'FAIL'}" for k, v in results.items())
    report(9, ok, f"1000-case property suites [{detail}], {wall:.0f}s (<300s)")
    assert ok
