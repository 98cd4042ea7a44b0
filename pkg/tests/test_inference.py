import numpy as np
import pytest

from adpm.data import DatasetTable, LongTailSpec, generate_longtail, split_fractions
from adpm.errors import ConfigError
from adpm.inference import classify_dataset, inference_schedule
from adpm.trainer import TrainConfig, fit


@pytest.fixture(scope="module")
def trained():
    table = generate_longtail(LongTailSpec(k=3, head_count=15, decay=0.6, d=3,
                                           separation=6.0, spread=1.0, seed=21))
    train, test = split_fractions(table, (0.7, 0.3), seed=21)
    cfg = TrainConfig(T=20, sample_steps=8, epochs=3, warmup_epochs=10, seed=21,
                      hidden=6, attn_dim=4, time_dim=4, prior_hidden=6, batch_size=16)
    return fit(train, cfg), test


def test_classify_deterministic_and_ordered(trained):
    ckpt, test = trained
    a = classify_dataset(ckpt, test)
    b = classify_dataset(ckpt, test)
    assert np.array_equal(a.predictions, b.predictions)
    assert np.array_equal(a.results[0].y0, b.results[0].y0)
    assert len(a.results) == test.n


def test_per_input_streams_independent_of_subset(trained):
    # input i's chain is keyed by its index, so evaluating a prefix gives
    # the same results as evaluating everything
    ckpt, test = trained
    full = classify_dataset(ckpt, test)
    prefix = classify_dataset(ckpt, test.take(range(4)))
    assert np.array_equal(full.predictions[:4], prefix.predictions)
    for i in range(4):
        assert np.array_equal(full.results[i].y0, prefix.results[i].y0)


def test_steps_override_and_trace(trained):
    ckpt, test = trained
    out = classify_dataset(ckpt, test.take([0]), steps=5, trace=True)
    assert len(out.results[0].trace) == 6


def test_lambda_comes_from_frozen_prior_census(trained):
    ckpt, test = trained
    lam_table = inference_schedule(ckpt).lam
    out = classify_dataset(ckpt, test)
    assert set(r.lam for r in out.results) <= set(float(v) for v in lam_table)


def test_k_mismatch_rejected(trained):
    ckpt, test = trained
    wide = DatasetTable(test.features, test.labels, 5)
    with pytest.raises(ConfigError):
        classify_dataset(ckpt, wide)
