import numpy as np
import pytest

from peplatent.errors import InvalidArgumentError
from peplatent.models.schedule import WarmupSpec
from peplatent.services.schedule import (
    BETA_MAX,
    build_schedule,
    marginal_coeffs,
    schedule_table,
    warmup_lr,
)


@pytest.fixture(scope="module")
def sched():
    return build_schedule(1000, 0.008)


def test_alpha_bar_starts_at_one(sched):
    assert sched.alpha_bar_at(0) == 1.0


def test_alpha_bar_strictly_decreasing(sched):
    assert np.all(np.diff(sched.alpha_bar) < 0)


def test_alpha_bar_midpoint(sched):
    assert sched.alpha_bar_at(500) == pytest.approx(0.4938, abs=1e-3)


def test_beta_clipped(sched):
    assert sched.beta.max() <= BETA_MAX
    # the raw curve reaches zero at t = T, so the last beta is the clip value
    assert sched.beta_at(1000) == pytest.approx(BETA_MAX)
    assert sched.alpha_bar_at(1000) > 0


def test_sigma_first_step_is_zero(sched):
    assert sched.sigma_at(1) == 0.0
    assert np.all(sched.sigma[1:] > 0)


def test_alpha_bar_is_product_of_alphas(sched):
    assert np.allclose(sched.alpha_bar[1:], np.cumprod(sched.alpha))


def test_arrays_are_read_only(sched):
    with pytest.raises(ValueError):
        sched.alpha_bar[3] = 0.5


def test_index_convention(sched):
    assert sched.alpha.shape == (1000,)
    assert sched.alpha_bar.shape == (1001,)
    assert sched.alpha_at(1) == sched.alpha[0]


@pytest.mark.parametrize("T,s", [(0, 0.008), (10, 0.0), (10, -1.0)])
def test_invalid_parameters(T, s):
    with pytest.raises(InvalidArgumentError):
        build_schedule(T, s)


def test_marginal_coeffs_out_of_range(sched):
    with pytest.raises(InvalidArgumentError):
        marginal_coeffs(sched, 0)
    with pytest.raises(InvalidArgumentError):
        marginal_coeffs(sched, 1001)


def test_marginal_coeffs_unit_energy(sched):
    a, b = marginal_coeffs(sched, 300)
    assert a * a + b * b == pytest.approx(1.0)


def test_warmup_ramp_then_constant():
    spec = WarmupSpec(base_lr=1.0, total_steps=100, warmup_fraction=0.1)
    assert warmup_lr(spec, 0) == 0.0
    assert warmup_lr(spec, 5) == pytest.approx(0.5)
    assert warmup_lr(spec, 10) == 1.0
    assert warmup_lr(spec, 100) == 1.0


def test_warmup_step_out_of_range():
    spec = WarmupSpec(base_lr=1.0, total_steps=100)
    with pytest.raises(InvalidArgumentError):
        warmup_lr(spec, 101)


def test_schedule_table_shape(sched):
    lines = schedule_table(sched).splitlines()
    assert lines[0] == "t,beta,alpha,alpha_bar,sigma"
    assert len(lines) == 1001
    alpha_bar = [float(line.split(",")[3]) for line in lines[1:]]
    assert all(a > b for a, b in zip(alpha_bar, alpha_bar[1:]))
