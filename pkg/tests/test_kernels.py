import os
import subprocess
import sys

import numpy as np
import pytest

from ma_lab import kernels as K

pytestmark = pytest.mark.skipif(not K.HAVE_NUMBA, reason="numba not installed")


def _same(a, b, tol=1e-10):
    if isinstance(a, tuple):
        return all(_same(x, y, tol) for x, y in zip(a, b))
    return np.allclose(np.asarray(a, float), np.asarray(b, float), atol=tol, rtol=tol)


@pytest.fixture(scope="module")
def cases(request):
    sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "benchmarks"))
    from bench_kernels import cases
    return list(cases(32))


def test_paths_agree(cases):
    assert {c[0] for c in cases} == {"hull2d", "pl_max", "clip_cells", "rung_sums"}
    for name, (fa, fb), args in cases:
        assert _same(fa(*args), fb(*args)), name


def test_hull_matches_scipy(rng):
    from scipy.spatial import ConvexHull
    pts = rng.normal(size=(500, 2))
    pts = pts[np.lexsort((pts[:, 1], pts[:, 0]))]
    for fn in (K.hull2d_numba, K.hull2d_numpy):
        assert set(fn(pts, 1e-12).tolist()) == set(ConvexHull(pts).vertices.tolist())


@pytest.mark.parametrize("flag, expected", [("1", "False"), ("0", "True")])
def test_env_flag_selects_path(flag, expected):
    env = dict(os.environ, MA_LAB_DISABLE_NUMBA=flag)
    out = subprocess.run([sys.executable, "-c",
                          "from ma_lab import kernels; print(kernels.USE_NUMBA)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == expected


def test_solver_agrees_without_numba(tmp_path):
    code = ("import numpy as np; from ma_lab.lab.pipeline import rough_problem;"
            "from ma_lab.solver.solve import solve;"
            f"np.save({str(tmp_path / '%s.npy')!r} % __import__('os').environ"
            "['MA_LAB_DISABLE_NUMBA'], solve(rough_problem(4), 24).u.values)")
    for flag in ("0", "1"):
        subprocess.run([sys.executable, "-c", code], check=True,
                       env=dict(os.environ, MA_LAB_DISABLE_NUMBA=flag))
    a, b = np.load(tmp_path / "0.npy"), np.load(tmp_path / "1.npy")
    assert np.allclose(a, b, atol=1e-10)
