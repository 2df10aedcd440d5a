"""End-to-end acceptance criteria at full size.

Each test prints one ``PASS``/``FAIL criterion N: ...`` line, repeated in
the terminal summary, and asserts the stated tolerance.
"""

import os
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np
import pytest

from starris import fp_core as fp
from starris.experiments import ExperimentConfig, run_experiment
from starris.oracle import evaluate_fixed_ris, exhaustive_ms
from starris.scenario import ScenarioSpec, build_channels, trial_rngs
from starris.solver import solve
from starris.star_mode import StarConfig
from starris.verify import check_beamforming, check_convergence, check_fp_equivalence, check_p1, check_ris_pair

WORKERS = max(1, min(4, os.cpu_count() or 1))
LINES = []


def report(n, ok, detail, elapsed, budget):
    ok = ok and elapsed < budget
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail} ({elapsed:.1f}s, budget {budget}s)"
    print(line)
    LINES.append(line)
    return ok


def timed(fn, *args, **kw):
    t0 = time.perf_counter()
    out = fn(*args, **kw)
    return out, time.perf_counter() - t0


@pytest.mark.acceptance
def test_criterion_1_p1_optimality():
    res, dt = timed(check_p1, 1000)
    assert report(1, res.passed, res.detail, dt, 10)


@pytest.mark.acceptance
def test_criterion_2_fp_equivalence():
    res, dt = timed(check_fp_equivalence, 200)
    assert report(2, res.passed, res.detail, dt, 5)


@pytest.mark.acceptance
def test_criterion_3_beamforming():
    res, dt = timed(check_beamforming, 100)
    assert report(3, res.passed, res.detail, dt, 30)


@pytest.mark.acceptance
def test_criterion_4_ris_pair():
    res, dt = timed(check_ris_pair, 100)
    assert report(4, res.passed, res.detail, dt, 10)


@pytest.mark.acceptance
def test_criterion_5_convergence():
    res, dt = timed(check_convergence, 50)
    assert report(5, res.passed, res.detail, dt, 300)


ORACLE_SPEC = ScenarioSpec(n_antennas=4, m_elements=6, k_reflect=1, k_transmit=1, noise_dbm=-80)


def _oracle_trial(args):
    p_dbm, t = args
    spec = ScenarioSpec(**{**ORACLE_SPEC.to_dict(), "p_bs_dbm": p_dbm})
    ch_rng, init_rng = trial_rngs(0, t)
    ch = build_channels(spec, ch_rng)
    rep = solve(ch, StarConfig.from_case(4, 2), rng=init_rng)
    _, best, _ = exhaustive_ms(ch, 2)
    f = rep.final_feasible
    got = float(fp.nats_to_bits(evaluate_fixed_ris(ch, f.v_t[None], f.v_r[None])[0]))
    return p_dbm, got, best


@pytest.mark.acceptance
def test_criterion_6_oracle_gap():
    t0 = time.perf_counter()
    jobs = [(p, t) for p in (10, 20, 30) for t in range(20)]
    with ProcessPoolExecutor(WORKERS) as pool:
        res = list(pool.map(_oracle_trial, jobs))
    dt = time.perf_counter() - t0
    gaps = {p: float(np.mean([(b - g) / b for q, g, b in res if q == p])) for p in (10, 20, 30)}
    excess = max(g - b for _, g, b in res)
    ok = all(v <= 0.10 for v in gaps.values()) and excess <= 1e-9
    detail = ", ".join(f"P={p} dBm mean gap {v:.2%}" for p, v in gaps.items()) + f"; max excess {excess:.1e} bits"
    assert report(6, ok, detail, dt, 600)


MODES_SPEC = ScenarioSpec(n_antennas=8, m_elements=16, k_reflect=2, k_transmit=2, p_bs_dbm=30)


def _modes_trial(args):
    case, t = args
    ch_rng, init_rng = trial_rngs(0, t)
    ch = build_channels(MODES_SPEC, ch_rng)
    return case, solve(ch, StarConfig.from_case(case, 2, 4), rng=init_rng).final_sum_rate_feasible


@pytest.mark.acceptance
def test_criterion_7_mode_comparison():
    t0 = time.perf_counter()
    jobs = [(c, t) for c in (3, 5, 6, 7) for t in range(30)]
    with ProcessPoolExecutor(WORKERS) as pool:
        res = list(pool.map(_modes_trial, jobs))
    dt = time.perf_counter() - t0
    mean = {c: float(np.mean([r for k, r in res if k == c])) for c in (3, 5, 6, 7)}
    disc = (mean[5] - mean[6]) / mean[5]
    coup = (mean[5] - mean[7]) / mean[5]
    ok = disc <= 0.08 and coup <= 0.05 and mean[5] >= mean[3]
    detail = (f"ES {mean[5]:.3f}, ES L=2 {mean[6]:.3f} (loss {disc:.2%}), coupled {mean[7]:.3f} "
              f"(loss {coup:.2%}), MS {mean[3]:.3f} bits")
    assert report(7, ok, detail, dt, 900)


@pytest.mark.acceptance
def test_criterion_8_determinism(tmp_path):
    t0 = time.perf_counter()
    cfg = ExperimentConfig(
        scenario=ScenarioSpec(n_antennas=2, m_elements=4, k_reflect=1, k_transmit=1), trials=2, seed=123
    )
    outs = [tmp_path / "a", tmp_path / "b"]
    run_experiment(cfg, outs[0])
    run_experiment(cfg, outs[1], workers=2)
    same = all((outs[0] / n).read_bytes() == (outs[1] / n).read_bytes() for n in ("runs.csv", "aggregate.csv"))
    dt = time.perf_counter() - t0
    assert report(8, same, "runs.csv and aggregate.csv byte-identical across reruns", dt, 600)
