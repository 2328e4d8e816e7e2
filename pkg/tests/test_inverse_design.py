import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import random_model, zero_model
from lucid import kernels
from lucid.inverse_design import (InverseDesignConfig, NonFiniteGradient, format_categorical,
                                  generate_canonical_set, inverse_design_step, mean_loss,
                                  sample_uniform_inputs, write_canonical_set)
from lucid.nn_core import MlpModel, backward, cross_entropy, forward

POS = [0, 1]


# ---------------------------------------------------------------- sampling

def test_uniform_inputs_range_and_means():
    X = sample_uniform_inputs(50, 1000, seed=4)
    assert X.shape == (1000, 50)
    assert X.min() >= 0.0 and X.max() < 1.0
    # std of a slot mean is 1/sqrt(12*1000) ~ 0.009
    assert np.all(np.abs(X.mean(axis=0) - 0.5) < 0.05)


def test_uniform_inputs_deterministic_and_row_keyed(tiny_schema):
    a = sample_uniform_inputs(tiny_schema, 10, seed=1)
    assert a.tobytes() == sample_uniform_inputs(tiny_schema, 10, seed=1).tobytes()
    assert np.array_equal(sample_uniform_inputs(tiny_schema, 4, seed=1), a[:4])
    assert not np.array_equal(sample_uniform_inputs(tiny_schema, 10, seed=2), a)


# ---------------------------------------------------------------- formatting

def test_format_examples(tiny_schema):
    v = np.array([1.7, 0.2, 0.7, 0.1, -3.0, 0.5, 0.5])
    out = format_categorical(tiny_schema, v)
    np.testing.assert_array_equal(out, [1.7, 0, 1, 0, -3.0, 1, 0])
    np.testing.assert_array_equal(format_categorical(tiny_schema, out), out)
    np.testing.assert_array_equal(v, [1.7, 0.2, 0.7, 0.1, -3.0, 0.5, 0.5])  # input untouched


@given(arrays(np.float64, (5, 7), elements=st.floats(-1e3, 1e3)))
def test_format_idempotent_and_one_hot(tiny_schema, X):
    F = format_categorical(tiny_schema, X)
    np.testing.assert_array_equal(format_categorical(tiny_schema, F), F)
    for g in tiny_schema.categorical_groups():
        assert np.all(F[:, g].sum(axis=1) == 1.0)
    np.testing.assert_array_equal(F[:, [0, 4]], X[:, [0, 4]])


# ---------------------------------------------------------------- single step

def test_step_zero_lr_and_zero_model_leave_input(tiny_schema):
    x = np.linspace(0, 1, 7)
    cfg = InverseDesignConfig(seed=0)
    m = random_model(np.random.default_rng(0), (7, 5, 2))
    np.testing.assert_array_equal(inverse_design_step(m, x, cfg, learning_rate=0.0), x)
    np.testing.assert_array_equal(inverse_design_step(zero_model((7, 5, 2)), x, cfg), x)


def test_step_leaves_model_untouched():
    m = random_model(np.random.default_rng(1), (6, 4, 2))
    fp = m.fingerprint()
    inverse_design_step(m, np.ones(6), InverseDesignConfig(seed=0))
    assert m.fingerprint() == fp


def test_step_does_not_clamp_numerics():
    m = MlpModel((1, 2), (np.array([[-1.0], [1.0]]),), (np.zeros(2),))
    x = np.array([0.99])
    for _ in range(5):
        x = inverse_design_step(m, x, InverseDesignConfig(seed=0, learning_rate=1.0))
    assert x[0] > 1.0


def test_small_step_decreases_loss():
    rng = np.random.default_rng(77)
    cfg = InverseDesignConfig(seed=0, learning_rate=1e-3)
    wins = 0
    for _ in range(100):
        # all-dead ReLU layers give an exactly zero gradient; descent needs a signal
        while True:
            m = random_model(rng, (5, 6, 4, 2))
            x = rng.random(5)
            if np.any(backward(m, x, POS).wrt_input != 0):
                break
        before = cross_entropy(forward(m, x), POS)
        after = cross_entropy(forward(m, inverse_design_step(m, x, cfg)), POS)
        wins += after < before
    assert wins >= 99


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_gradient_aborts():
    big = MlpModel((2, 2, 2), (np.full((2, 2), 1e308), np.full((2, 2), 1e308)),
                   (np.zeros(2), np.zeros(2)))
    with pytest.raises(NonFiniteGradient):
        inverse_design_step(big, np.ones(2), InverseDesignConfig(seed=0))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
@pytest.mark.parametrize("backend", kernels.available_backends())
def test_non_finite_gradient_in_kernel_names_row(backend):
    big = MlpModel((2, 2, 2), (np.full((2, 2), 1e308), np.full((2, 2), 1e308)),
                   (np.zeros(2), np.zeros(2)))
    X = np.zeros((3, 2))
    X[1] = 1.0
    with pytest.raises(NonFiniteGradient) as e:
        kernels.descend_rows(big, X, 1, 0.1, 3, backend=backend)
    assert e.value.row == 1 and e.value.epoch == 0


# ---------------------------------------------------------------- canonical set

def test_config_validation():
    with pytest.raises(ValueError):
        InverseDesignConfig(seed=0, learning_rate=0.0)
    with pytest.raises(ValueError):
        InverseDesignConfig(seed=0, learning_rate=11.0)
    with pytest.raises(ValueError):
        InverseDesignConfig(seed=0, preferred_output=(0.5, 0.5))
    with pytest.raises(ValueError):
        InverseDesignConfig.from_dict({"epochs": 3})
    d = InverseDesignConfig(seed=3)
    assert (d.num_inputs, d.epochs, d.learning_rate) == (1000, 200, 0.1)
    assert InverseDesignConfig.from_dict(d.to_dict()) == d


def test_canonical_set_shapes_and_invariants(tiny_schema, small_model):
    cfg = InverseDesignConfig(seed=5, num_inputs=64, epochs=30, learning_rate=0.5,
                              record_trajectory=True)
    fp = small_model.fingerprint()
    cs = generate_canonical_set(small_model, tiny_schema, cfg)
    assert small_model.fingerprint() == fp == cs.model_fingerprint
    for X in (cs.initial, cs.optimized, cs.formatted):
        assert X.shape == (64, tiny_schema.encoded_dim)
    for P in (cs.predictions_initial, cs.predictions_optimized, cs.predictions_formatted):
        assert P.shape == (64, 2)
    assert cs.initial.min() >= 0 and cs.initial.max() < 1
    num = tiny_schema.numeric_slots()
    np.testing.assert_array_equal(cs.formatted[:, num], cs.optimized[:, num])
    for g in tiny_schema.categorical_groups():
        assert np.all(np.sort(cs.formatted[:, g], axis=1)[:, -1] == 1.0)
        assert np.all(cs.formatted[:, g].sum(axis=1) == 1.0)
    assert len(cs.trajectory) == 31
    assert cs.trajectory[-1] < cs.trajectory[0]
    assert mean_loss(small_model, cs.optimized, 1) < mean_loss(small_model, cs.initial, 1)


def test_zero_epochs_is_identity(tiny_schema, small_model):
    cs = generate_canonical_set(small_model, tiny_schema,
                                InverseDesignConfig(seed=1, num_inputs=20, epochs=0))
    assert np.array_equal(cs.optimized, cs.initial)


def test_rows_independent_of_batch(tiny_schema, small_model):
    big = generate_canonical_set(small_model, tiny_schema,
                                 InverseDesignConfig(seed=9, num_inputs=40, epochs=25))
    small = generate_canonical_set(small_model, tiny_schema,
                                   InverseDesignConfig(seed=9, num_inputs=7, epochs=25))
    assert small.optimized.tobytes() == big.optimized[:7].tobytes()


def test_parallel_matches_sequential(tiny_schema, small_model):
    cfg = InverseDesignConfig(seed=2, num_inputs=50, epochs=20, record_trajectory=True)
    seq = generate_canonical_set(small_model, tiny_schema, cfg)
    par = generate_canonical_set(small_model, tiny_schema, cfg, workers=4)
    assert seq.optimized.tobytes() == par.optimized.tobytes()
    assert seq.trajectory.tobytes() == par.trajectory.tobytes()


def test_kernel_agrees_with_reference_steps(tiny_schema, small_model):
    cfg = InverseDesignConfig(seed=4, num_inputs=5, epochs=15, learning_rate=0.3)
    cs = generate_canonical_set(small_model, tiny_schema, cfg)
    for i in range(5):
        x = cs.initial[i]
        for _ in range(15):
            x = inverse_design_step(small_model, x, cfg)
        np.testing.assert_allclose(cs.optimized[i], x, rtol=1e-12, atol=1e-12)


def test_negative_preferred_output(tiny_schema, small_model):
    cfg = InverseDesignConfig(seed=4, num_inputs=50, epochs=50, learning_rate=0.5,
                              preferred_output=(1, 0))
    cs = generate_canonical_set(small_model, tiny_schema, cfg)
    assert cs.predictions_optimized[:, 0].mean() > cs.predictions_initial[:, 0].mean()


def test_format_initial_flag(tiny_schema, small_model):
    cs = generate_canonical_set(small_model, tiny_schema,
                                InverseDesignConfig(seed=1, num_inputs=10, epochs=0,
                                                    format_initial=True))
    np.testing.assert_array_equal(cs.initial, format_categorical(tiny_schema, cs.initial))


def test_dimension_mismatch(tiny_schema):
    m = random_model(np.random.default_rng(0), (3, 2))
    with pytest.raises(ValueError):
        generate_canonical_set(m, tiny_schema, InverseDesignConfig(seed=0, num_inputs=2))


def test_write_canonical_set(tmp_path, tiny_schema, small_model):
    import csv
    import json
    cs = generate_canonical_set(small_model, tiny_schema,
                                InverseDesignConfig(seed=1, num_inputs=12, epochs=5,
                                                    record_trajectory=True))
    paths = write_canonical_set(cs, tiny_schema, tmp_path)
    names = sorted(p.name for p in paths)
    assert names == ["canonical.json", "canonical_formatted.csv", "canonical_initial.csv",
                     "canonical_optimized.csv", "canonical_trajectory.csv"]
    with open(tmp_path / "canonical_optimized.csv", newline="") as f:
        rows = list(csv.reader(f))
    assert rows[0][:2] == ["age", "color=a"] and len(rows) == 13
    assert all(len(r) == tiny_schema.encoded_dim + 2 for r in rows)
    back = np.array([[float(v) for v in r[:tiny_schema.encoded_dim]] for r in rows[1:]])
    assert back.tobytes() == cs.optimized.tobytes()
    meta = json.loads((tmp_path / "canonical.json").read_text())
    assert meta["model_fingerprint"] == small_model.fingerprint()
