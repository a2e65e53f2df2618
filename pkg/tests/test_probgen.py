import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from falbp.probgen import (CALTECH_LIKE, SignalSpec, caltech_like, default_delta, evaluate,
                           generate, noise_std_for_snr, parse_plan, sparsity_for)


def test_generation_is_deterministic():
    a = generate(SignalSpec("dct-100db", 512, 128, 5, seed=7))
    b = generate(SignalSpec("dct-100db", 512, 128, 5, seed=7))
    assert np.array_equal(a.x_true, b.x_true) and np.array_equal(a.b, b.b)
    assert np.array_equal(a.operator.rows, b.operator.rows)
    c = generate(SignalSpec("dct-100db", 512, 128, 5, seed=8))
    assert not np.array_equal(a.x_true, c.x_true)


@given(seed=st.integers(0, 2**32), s=st.integers(2, 30))
@settings(max_examples=30, deadline=None)
def test_100db_dynamic_range(seed, s):
    inst = generate(SignalSpec("dct-100db", 256, 64, s, seed))
    mags = np.abs(inst.x_true[inst.x_true != 0])
    assert mags.size == s
    assert np.sum(mags == 1.0) == 1 and np.sum(mags == 1e5) == 1
    assert mags.min() == 1.0 and mags.max() == 1e5
    assert np.allclose(inst.b, inst.operator.to_dense() @ inst.x_true, atol=1e-8)


def test_100db_needs_two_nonzeros():
    with pytest.raises(ValueError):
        generate(SignalSpec("dct-100db", 64, 16, 1))


def test_signal_spec_validation():
    with pytest.raises(ValueError):
        SignalSpec("dct-100db", 64, 16, 0)
    with pytest.raises(ValueError):
        SignalSpec("dct-100db", 64, 80, 5)
    with pytest.raises(ValueError):
        SignalSpec("nope", 64, 16, 2)
    with pytest.raises(ValueError):
        generate(SignalSpec("gaussian-noisy", 64, 16, 2))


def test_noisy_seed_shares_everything_but_noise_scale():
    a = generate(SignalSpec("gaussian-noisy", 200, 50, 5, seed=3, snr_db=40))
    b = generate(SignalSpec("gaussian-noisy", 200, 50, 5, seed=3, snr_db=20))
    assert np.array_equal(a.x_true, b.x_true)
    assert np.array_equal(a.operator.matrix, b.operator.matrix)
    na, nb = a.b - a.operator.matrix @ a.x_true, b.b - b.operator.matrix @ b.x_true
    assert np.allclose(nb, na * (b.noise_std / a.noise_std))
    assert np.isclose(a.noise_std, np.sqrt(5 * 1e-4))
    assert np.isclose(a.delta, default_delta(50, a.noise_std))


def test_gaussian_entries_sanity():
    for seed in range(3):
        A = generate(SignalSpec("gaussian-noisy", 400, 100, 5, seed, snr_db=30)).operator.matrix
        se = 1.0 / np.sqrt(A.size)
        assert abs(A.mean()) <= 3 * se
        # E|z| = sqrt(2/pi) for a standard normal
        assert abs(np.abs(A).mean() - np.sqrt(2 / np.pi)) <= 3 * np.sqrt(1 - 2 / np.pi) * se


def test_noise_std_for_snr():
    assert noise_std_for_snr(10, float("inf")) == 0.0
    assert np.isclose(noise_std_for_snr(100, 20), 1.0)


def test_parse_plan():
    assert parse_plan("1e5:33,1:5") == [(1e5, 33), (1.0, 5)]
    with pytest.raises(ValueError):
        parse_plan("1e5")


def test_hard_plan_l1_norm():
    inst = caltech_like("caltech1")
    assert np.abs(inst.x_true).sum() == 3300005.0
    for name, cfg in CALTECH_LIKE.items():
        inst = caltech_like(name, 1)
        assert np.count_nonzero(inst.x_true) == sum(c for _, c in cfg["plan"])
        assert inst.m == cfg["m"]


def test_hard_plan_count_mismatch():
    with pytest.raises(ValueError):
        generate(SignalSpec("hard-magnitude", 64, 16, 4, magnitude_plan=[(1.0, 3)]))


def test_sparsity_for():
    assert sparsity_for(1024, "sparse") == 10 and sparsity_for(1024, "dense") == 102
    assert sparsity_for(50, "sparse") == 2


def test_evaluate_metrics():
    inst = generate(SignalSpec("dct-100db", 128, 32, 3, 0))
    row = evaluate(inst.x_true, inst)
    assert row["rel_l1_gap"] == 0 and row["inf_err_zero"] == 0 and row["inf_err_plus"] == 0
    assert row["residual"] <= 1e-9 and row["nnz"] == 3
    x = inst.x_true.copy()
    x[np.flatnonzero(x == 0)[0]] = 0.5
    assert evaluate(x, inst)["inf_err_zero"] == 0.5
