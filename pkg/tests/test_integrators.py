import os
import subprocess
import sys

import numpy as np
import pytest

from slgbm.integrators import (
    TrajectoryConfig,
    run_trajectory,
    simulate,
    step_euler,
    step_exponential,
)
from slgbm.linalg import gram, log_det
from slgbm.noise import noise_coefficients, sample_increment
from slgbm.rng import RngStream


@pytest.mark.parametrize("scheme", ["euler", "exponential"])
def test_kernel_matches_manual_stepping(scheme):
    cfg = TrajectoryConfig(3, 0.05, 0.01, scheme=scheme, p_max=3, master_seed=4, stream_index=2)
    rec = run_trajectory(cfg)
    coeffs = noise_coefficients(3)
    rng = RngStream(4, 2)
    F = np.eye(3)
    for _ in range(cfg.n_steps):
        inc, rng = sample_increment(coeffs, cfg.dt, rng)
        F = step_exponential(F, inc) if scheme == "exponential" else step_euler(F, inc)
    G = gram(F)
    want = [np.trace(np.linalg.matrix_power(G, k)) for k in (1, 2, 3)]
    np.testing.assert_allclose(rec.summaries[-1].trace_powers, want, rtol=1e-12)
    assert rec.final_log_det == pytest.approx(log_det(F), abs=1e-12)
    assert not rec.diverged


def test_zero_noise_stays_at_identity():
    cfg = TrajectoryConfig(4, 1.0, 0.1, noise_scale=0.0, checkpoints=(0.0, 0.5, 1.0))
    rec = run_trajectory(cfg)
    for s in rec.summaries:
        assert s.trace_powers == (4.0, 4.0)
        assert s.log_det == 0.0


def test_exponential_scheme_preserves_determinant():
    cfg = TrajectoryConfig(3, 1.0, 1e-2, master_seed=1, checkpoints=tuple(np.arange(1, 11) / 10))
    ens = simulate(cfg, 200)
    assert np.max(np.abs(ens.log_det)) < 1e-10


def test_checkpoints_snap_and_validate():
    cfg = TrajectoryConfig(2, 1.0, 0.3, checkpoints=(0.0, 0.62, 1.0))
    assert list(cfg.checkpoint_steps) == [0, 2, 3]
    assert cfg.snap_error == pytest.approx(0.1)
    with pytest.raises(ValueError, match="empty horizon"):
        TrajectoryConfig(3, 0.0, 0.1)
    with pytest.raises(ValueError):
        TrajectoryConfig(3, 1.0, 0.1, checkpoints=(0.5, 0.5))
    with pytest.raises(ValueError):
        TrajectoryConfig(3, 1.0, 0.1, checkpoints=(2.0,))
    with pytest.raises(ValueError):
        TrajectoryConfig(3, 1.0, 0.1, scheme="rk4")
    with pytest.raises(ValueError):
        TrajectoryConfig(1, 1.0, 0.1)


def test_divergence_is_flagged():
    # huge steps blow up the Euler scheme
    cfg = TrajectoryConfig(3, 400.0, 1.0, scheme="euler", noise_scale=30.0, master_seed=2)
    ens = simulate(cfg, 20)
    assert ens.n_diverged > 0
    assert np.all(np.isnan(ens.trace_powers[ens.diverged]))


def test_paths_are_independent_of_ensemble_size():
    cfg = TrajectoryConfig(3, 0.2, 0.01, master_seed=8)
    a = simulate(cfg, 10)
    b = simulate(cfg, 3)
    assert np.array_equal(a.trace_powers[:3], b.trace_powers)
    c = simulate(TrajectoryConfig(3, 0.2, 0.01, master_seed=8, stream_index=2), 1)
    assert np.array_equal(a.trace_powers[2], c.trace_powers[0])


_SCRIPT = """
import numpy as np
from slgbm.integrators import TrajectoryConfig, simulate
cfg = TrajectoryConfig(3, 0.5, 0.01, p_max=2, master_seed=5, checkpoints=(0.25, 0.5))
for w in (1, 4, 16):
    e = simulate(cfg, 64, workers=w, control_variate=True)
    print(w, e.trace_powers.tobytes().hex()[:64], hash(e.trace_powers.tobytes()), hash(e.control.tobytes()))
"""


def test_bitwise_identical_across_worker_counts():
    env = dict(os.environ, NUMBA_NUM_THREADS="16", PYTHONWARNINGS="ignore")
    out = subprocess.run([sys.executable, "-c", _SCRIPT], env=env, capture_output=True, text=True,
                         check=True).stdout.split("\n")
    lines = [l.split(None, 1)[1] for l in out if l.strip()]
    assert len(lines) == 3 and len(set(lines)) == 1
