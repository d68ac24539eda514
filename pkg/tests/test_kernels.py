import os
import subprocess
import sys

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from melnikovkit import _kernels, instances
from melnikovkit.model import AugmentedState, Domain, SystemConfig, perturbed_field

needs_c = pytest.mark.skipif(_kernels.CSystem is None, reason="compiled kernel not built")
Y0 = np.array([0.3, 0.5, 0.2, 0.05])
ETA = np.array([0.1])


def run(kern, y0=Y0, s1=10.0, eps=1e-2, **kw):
    args = dict(rtol=1e-10, atol=1e-12, max_step=np.inf, freeze=False, steps=None, record=False,
                max_steps=200000, check_domain=False)
    args.update(kw)
    return kern.integrate(y0, ETA, 0.0, s1, eps, args["rtol"], args["atol"], args["max_step"],
                          args["freeze"], args["steps"], args["record"], args["max_steps"],
                          args["check_domain"])


def test_python_kernel_matches_scipy():
    cfg = instances.reference()
    kern = _kernels.make_system(cfg, "python")
    y, status, s, _ = run(kern)
    assert status == _kernels.OK and s == 10.0

    ref = solve_ivp(lambda t, y: _field(cfg, y, t), (0, 10), Y0, method="DOP853", rtol=1e-12, atol=1e-14)
    assert np.allclose(y, ref.y[:, -1], atol=1e-8)


def _field(cfg, y, t):
    wide = SystemConfig(cfg.penduli, cfg.rotator, cfg.perturbation, cfg.clock, Domain(tube=10.0), cfg.eps)
    x = AugmentedState(y[:1], y[1:2], y[2:3], y[3:4], ETA + t)
    f = perturbed_field(wide, x, 1e-2)
    return f.dynamic_vector()


@needs_c
def test_backends_agree():
    cfg = instances.reference()
    yp = run(_kernels.make_system(cfg, "python"))[0]
    yc = run(_kernels.make_system(cfg, "cython"))[0]
    assert np.max(np.abs(yp - yc)) <= 1e-12


@pytest.mark.parametrize("backend", ["python", "cython"])
def test_replay_is_deterministic(backend):
    if backend == "cython" and _kernels.CSystem is None:
        pytest.skip("compiled kernel not built")
    kern = _kernels.make_system(instances.reference(), backend)
    y1, _, _, steps = run(kern, record=True)
    y2, _, _, _ = run(kern, steps=steps)
    assert np.array_equal(y1, y2)
    y3, _, _, _ = run(kern, y0=Y0 + 1e-9, steps=steps)
    assert 0 < np.max(np.abs(y3 - y1)) < 1e-6


def test_domain_and_budget_status():
    kern = _kernels.make_system(instances.reference(), "python")
    _, status, s, _ = run(kern, y0=np.array([0.5, 0.5, 0.2, 0.05]), check_domain=True)
    assert status == _kernels.DOMAIN and 0 <= s < 10
    _, status, _, _ = run(kern, max_steps=3)
    assert status == _kernels.MAXSTEPS


def test_freeze_keeps_pendulum_at_rest():
    kern = _kernels.make_system(instances.reference(), "python")
    y, status, _, _ = run(kern, y0=np.array([0.0, 0.0, 0.2, 0.05]), freeze=True)
    assert status == _kernels.OK
    assert y[0] == 0.0 and y[1] == 0.0


def test_pure_python_selected_by_environment():
    env = dict(os.environ, MELNIKOVKIT_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "from melnikovkit import _kernels; print(_kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
