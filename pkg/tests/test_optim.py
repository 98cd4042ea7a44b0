import numpy as np
import pytest

from adpm.errors import ConfigError
from adpm.optim import Adam, Sgd, lr_at, make_optimizer


def test_adam_zero_gradient_is_noop():
    params = {"w": np.array([[1.0, -2.0], [0.5, 3.0]])}
    before = params["w"].copy()
    opt = Adam(lr=0.1)
    opt.step(params, {"w": np.zeros((2, 2))})
    assert np.array_equal(params["w"], before)


def test_sgd_zero_gradient_is_noop():
    params = {"w": np.array([[1.0, -2.0]])}
    before = params["w"].copy()
    Sgd(lr=0.1).step(params, {"w": np.zeros((1, 2))})
    assert np.array_equal(params["w"], before)


def test_adam_state_round_trip():
    rng = np.random.default_rng(0)
    params = {"w": rng.standard_normal((3, 3))}
    opt = Adam(lr=0.01)
    for _ in range(5):
        opt.step(params, {"w": rng.standard_normal((3, 3))})
    state = opt.state_dict()
    clone = Adam(lr=0.01)
    clone.load_state_dict(state)
    g = rng.standard_normal((3, 3))
    a = {"w": params["w"].copy()}
    b = {"w": params["w"].copy()}
    opt.step(a, {"w": g})
    clone.step(b, {"w": g})
    assert np.array_equal(a["w"], b["w"])


def test_make_optimizer_rejects_unknown():
    with pytest.raises(ConfigError):
        make_optimizer("lbfgs", 0.1)


def test_lr_schedule_endpoints_and_max():
    total = 200
    base = 1e-3
    warmup = max(1, round(0.1 * total))
    assert lr_at(0, total, base) == pytest.approx(base / warmup)
    values = [lr_at(s, total, base) for s in range(total + 1)]
    assert max(values) == pytest.approx(base)
    assert values[warmup] == pytest.approx(base)  # peak right after warmup
    assert lr_at(total, total, base) >= 0.0
    assert lr_at(total, total, base) == pytest.approx(0.0, abs=1e-18)


def test_lr_schedule_monotone_warmup_then_decay():
    total = 100
    values = np.array([lr_at(s, total, 1e-2) for s in range(total + 1)])
    warmup = 10
    assert (np.diff(values[:warmup]) > 0).all()
    assert (np.diff(values[warmup:]) <= 1e-18).all()
