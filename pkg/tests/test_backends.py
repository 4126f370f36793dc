import os
import subprocess
import sys

import numpy as np
import pytest

from s2hreg import _accel
from s2hreg.assignment import hungarian, project_to_ppm
from s2hreg.geometry import PointCloud, nearest_neighbor, pairwise_sq_dists
from s2hreg.pipeline import RegistrationConfig, register
from s2hreg.sinkhorn import SinkhornConfig, augmented_sinkhorn
from s2hreg.synthdata import PairSpec, make_pair, procedural_shape


def both(fn):
    with _accel.using("numba"):
        a = fn()
    with _accel.using("numpy"):
        b = fn()
    return a, b


def test_distances_and_nn(rng):
    q, r = rng.normal(size=(70, 3)), rng.normal(size=(90, 3))
    a, b = both(lambda: pairwise_sq_dists(q, r))
    assert np.array_equal(a, b)
    (ia, da), (ib, db) = both(lambda: nearest_neighbor(q, r))
    assert np.array_equal(ia, ib) and np.allclose(da, db, rtol=1e-15)


def test_hungarian(rng):
    for n in (1, 5, 40, 120):
        A = rng.normal(size=(n, n))
        a, b = both(lambda: hungarian(A))
        assert A[np.arange(n), a].sum() == pytest.approx(A[np.arange(n), b].sum(), abs=1e-9)


def test_sinkhorn(rng):
    S = -rng.uniform(0, 4, size=(30, 25))
    a, b = both(lambda: augmented_sinkhorn(S, SinkhornConfig()))
    assert a.iterations == b.iterations
    np.testing.assert_allclose(a.P, b.P, rtol=1e-10, atol=1e-300)
    ma, mb = both(lambda: project_to_ppm(a.P))
    assert np.array_equal(ma.row_to_col, mb.row_to_col)


def test_full_registration():
    base = procedural_shape("composite", 256, 1)
    pair = make_pair(base, PairSpec(seed=1, base_size=256, sample_size=192))
    a, b = both(lambda: register(pair.source, pair.target, RegistrationConfig(iterations=3)))
    assert np.array_equal(a.matching.row_to_col, b.matching.row_to_col)
    np.testing.assert_allclose(a.motion.rotation, b.motion.rotation, atol=1e-9)


def test_environment_flag():
    env = dict(os.environ, S2HREG_BACKEND="numpy")
    out = subprocess.run([sys.executable, "-c", "import s2hreg; print(s2hreg.backend())"], env=env,
                         capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"
    env["S2HREG_BACKEND"] = "fortran"
    bad = subprocess.run([sys.executable, "-c", "import s2hreg"], env=env, capture_output=True, text=True)
    assert bad.returncode != 0 and "S2HREG_BACKEND" in bad.stderr


def test_set_backend_validation():
    with pytest.raises(ValueError):
        _accel.set_backend("gpu")
    with _accel.using("numpy"):
        assert _accel.backend() == "numpy"
    assert _accel.backend() in ("numba", "numpy")


def test_benchmark_runs(capsys):
    import importlib.util
    from pathlib import Path

    path = Path(__file__).resolve().parents[1] / "benchmarks" / "bench_kernels.py"
    spec = importlib.util.spec_from_file_location("bench_kernels", path)
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    mod.main(["--size", "32", "--repeat", "1"])
    out = capsys.readouterr().out.splitlines()
    assert out[0].split()[:3] == ["kernel", "numba", "s"] and len(out) == 8
