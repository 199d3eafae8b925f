"""Acceptance criteria, one test and one printed pass/fail line each.

The ensembles are 20 rough densities (lambda = 1/2, Lambda = 2, seeds 0..19):
every stage at 64^2, and the stability stages at 128^2.  Expect about a
quarter of an hour on one core.

    pytest tests/test_acceptance.py -v
"""
import sys
import time

import numpy as np
import pytest

from ma_lab.convex.body import ConvexBody
from ma_lab.convex.john import john_normalize, normalization_report
from ma_lab.lab.pipeline import STABILITY_STAGES, STAGES, ensemble
from ma_lab.solver.problem import Density, MAProblem
from ma_lab.solver.solve import solve

SEEDS = list(range(20))
LINES = []

pytestmark = pytest.mark.slow


def record(name, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}"
    LINES.append(line)
    print(line)
    return ok


@pytest.fixture(scope="module")
def ens64():
    t0 = time.perf_counter()
    reps = ensemble(SEEDS, 64, STAGES)
    return reps, time.perf_counter() - t0


@pytest.fixture(scope="module")
def ens128():
    return ensemble(SEEDS, 128, STABILITY_STAGES)


def const(reps, key):
    return np.array([r.constants[key] for r in reps], float)


def rows(reps, prefix):
    return [row for r in reps for row in r.rows
            if row["inequality_id"].split(":")[0] == prefix]


def all_pass(reps, *ids):
    return all(r.verdict(i) for r in reps for i in ids)


# ---------------------------------------------------------------------------

def test_solver_oracle():
    prob = MAProblem({"kind": "disc", "radius": 1.0}, Density("const", 1, 1))
    err, secs = {}, {}
    for N in (64, 128):
        t0 = time.perf_counter()
        u = solve(prob, N).u
        secs[N] = time.perf_counter() - t0
        I = u.interior
        err[N] = float(np.abs(u.values[I] - 0.5 * (np.sum(u.nodes[I] ** 2, 1) - 1)).max())
    rate = err[64] / err[128]
    ok = err[64] <= 0.02 and rate >= 1.5 and max(secs.values()) <= 60
    assert record("solver oracle", ok,
                  f"err64={err[64]:.3e} err128={err[128]:.3e} factor={rate:.2f} "
                  f"time={secs[64]:.1f}s/{secs[128]:.1f}s")


def test_john_normalization():
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst_in, worst_out, det_ok = np.inf, 0.0, True
    for _ in range(100):
        pts = rng.normal(size=(int(rng.integers(3, 40)), 2))
        pts = pts @ rng.normal(size=(2, 2)) * rng.uniform(0.05, 20) + rng.normal(size=2)
        B = ConvexBody(pts)
        r = normalization_report(B, john_normalize(B))
        worst_in = min(worst_in, r["inner_radius"])
        worst_out = max(worst_out, r["outer_radius"])
        det_ok &= bool(r["det_ok"])
    secs = time.perf_counter() - t0
    ok = worst_in >= 1 - 1e-6 and worst_out <= 2 + 1e-6 and det_ok and secs <= 5
    assert record("John normalization", ok,
                  f"min inradius={worst_in:.9f} max circumradius={worst_out:.9f} "
                  f"det bounds={det_ok} time={secs:.2f}s")


def test_section_geometry(ens64, quad_pipeline):
    reps, _ = ens64
    samples = sum(r.info["chain_samples"] for r in reps)
    chain = all_pass(reps, "dilation_chain", "secprop_ii", "normalize_2S",
                     "secprop_i")
    q = quad_pipeline.report.constants
    beta_err = abs(q["beta_half"] / np.sqrt(0.5) - 1)
    theta = q["theta"]
    ok = samples >= 2000 and chain and beta_err <= 0.05 and theta <= 9 * 1.05
    assert record("section geometry", ok,
                  f"samples={samples} chains={chain} quadratic beta(1/2) error="
                  f"{beta_err:.2%} theta={theta:.3f}")


def test_covering(ens64):
    reps, _ = ens64
    K = const(reps, "K")
    eps_ok = all_pass(reps, "covering")
    ok = eps_ok and np.all(np.isfinite(K))
    drift = max(max(r["lhs"], r["rhs"]) / min(r["lhs"], r["rhs"])
                for r in rows(reps, "covering") if r["inequality_id"] == "covering:stable")
    assert record("covering", ok,
                  f"K in [{K.min():.3f}, {K.max():.3f}], worst K drift between "
                  f"eps=0.1 and 0.01 = {drift:.3f}x")


def test_alexandrov_band(ens64, ens128):
    reps, _ = ens64
    c1, c2 = const(reps, "c1").min(), const(reps, "c2").max()
    d1, d2 = const(ens128, "c1").min(), const(ens128, "c2").max()
    stable = max(c1 / d1, d1 / c1, c2 / d2, d2 / c2) <= 2
    ok = c2 / c1 <= 20 and stable
    assert record("Alexandrov band", ok,
                  f"64^2 [{c1:.4f}, {c2:.4f}] ratio {c2 / c1:.2f}; 128^2 "
                  f"[{d1:.4f}, {d2:.4f}] ratio {d2 / d1:.2f}")


def test_hessmean(ens64, ens128, quad_pipeline):
    reps, _ = ens64
    C64, C128 = const(reps, "C1"), const(ens128, "C1")
    secs = min(r["sections"] for r in rows(reps, "hessmean") + rows(ens128, "hessmean"))
    drift = np.max(np.maximum(C64 / C128, C128 / C64))
    qC1 = quad_pipeline.report.constants["C1"]
    ok = (np.all(C64 > 0) and np.all(C128 > 0) and secs >= 100 and drift <= 2
          and abs(qC1 - 1) <= 0.05)
    assert record("Lemma hessmean", ok,
                  f"C1 64^2 in [{C64.min():.4f}, {C64.max():.4f}], 128^2 in "
                  f"[{C128.min():.4f}, {C128.max():.4f}], worst per seed drift "
                  f"{drift:.3f}x, >= {secs} sections, quadratic C1={qC1:.4f}")


def test_hesssupermean(ens64):
    reps, _ = ens64
    share = min(r["pass_share"] for r in rows(reps, "hesssupermean"))
    ok = all_pass(reps, "A", "hesssupermean", "abp_chain")
    assert record("Lemma hesssupermean", ok,
                  f"C2 min={const(reps, 'C2').min():.4f} C3 min="
                  f"{const(reps, 'C3').min():.4f} eps1 min="
                  f"{const(reps, 'eps1').min():.2f} worst pass share={share:.2%}")


def test_levelsets(ens64):
    reps, _ = ens64
    C4, C5 = const(reps, "C4"), const(reps, "C5")
    Cp = const(reps, "C_prime")
    ok = (all_pass(reps, "levelsets", "maximalineq") and np.all(np.isfinite(C4))
          and np.all(np.isfinite(Cp)))
    replay = all_pass(reps, "levelsets_replay")
    assert record("level sets", ok,
                  f"C4 max={C4.max():.4f} C5 min={C5.min():.4f} C' max={Cp.max():.4f} "
                  f"alpha0 max={const(reps, 'alpha0').max():.3f} "
                  f"covering replay={replay}")


def test_main_theorem(ens64, ens128):
    reps, _ = ens64
    parts, ok = [], all_pass(reps, "main", "layer_cake") and all_pass(ens128, "main",
                                                                      "layer_cake")
    for k in (0, 1, 2):
        a, b = const(reps, f"C_main_{k}").max(), const(ens128, f"C_main_{k}").max()
        ok &= bool(np.isfinite(a) and max(a / b, b / a) <= 2)
        parts.append(f"C({k})={a:.4f}/{b:.4f}")
    layer = max(r["constant"] for r in rows(reps, "layer_cake") + rows(ens128, "layer_cake"))
    ok &= layer <= 0.01
    assert record("Theorem main", ok,
                  " ".join(parts) + f" (64^2/128^2), worst layer-cake gap {layer:.2e}")


def test_reg_reduction(ens64):
    reps, _ = ens64
    N = const(reps, "N")
    ok = all_pass(reps, "comp", "reg_reduction") and np.all(np.isfinite(N))
    worst = max(r["lhs"] / r["rhs"] for r in rows(reps, "reg_reduction"))
    assert record("Theorem reg reduction", ok,
                  f"N in [{N.min():.0f}, {N.max():.0f}], r1 min="
                  f"{const(reps, 'r1').min():.4f} r2 max={const(reps, 'r2').max():.4f}, "
                  f"worst I_k / assembled bound {worst:.3f}")


def test_full_ensemble(ens64):
    reps, secs = ens64
    again = ensemble(SEEDS, 64, STAGES)
    same = all(a.to_csv() == b.to_csv() for a, b in zip(reps, again))
    ok = secs <= 1800 and same
    fails = sorted({i.split(":")[0] for r in reps for i in r.failures()})
    assert record("full ensemble", ok,
                  f"{len(reps)} instances in {secs:.0f}s on one core, identical CSV "
                  f"on rerun={same}; rows failing outside the criteria: "
                  f"{', '.join(fails) or 'none'}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
