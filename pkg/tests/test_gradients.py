import numpy as np
import pytest

from disharmony import _accel
from gradcheck import fd_check, tape_loss_value, tape_vs_fused


@pytest.mark.parametrize("seed", range(0, 120, 7))
def test_fused_gradient_matches_finite_differences(seed, backend):
    ok, rel, kind = fd_check(seed)
    assert ok, f"{kind}: worst relative error {rel:.2e}"


@pytest.mark.parametrize("seed", range(40))
def test_tape_matches_fused(seed, backend):
    assert tape_vs_fused(seed) < 1e-12


@pytest.mark.parametrize("seed", range(20))
def test_tape_and_fused_losses_agree(seed):
    fused, tape = tape_loss_value(seed)
    assert fused == pytest.approx(tape, rel=1e-13, abs=1e-13)


@pytest.mark.skipif(not _accel.HAS_NUMBA, reason="numba not installed")
@pytest.mark.parametrize("seed", range(20))
def test_backends_agree(seed):
    from gradcheck import random_problem
    obj, params, X, T, masks, _ = random_problem(seed)
    prev = _accel.set_backend("numba")
    try:
        l1, g1 = obj.value_and_grad(params.values, X, T, masks)
        _accel.set_backend("numpy")
        l2, g2 = obj.value_and_grad(params.values, X, T, masks)
    finally:
        _accel.set_backend(prev)
    assert abs(l1 - l2) <= 1e-12 * max(1.0, abs(l1))
    assert np.max(np.abs(g1 - g2)) <= 1e-12
