import numpy as np
import pytest

from spnkit import (
    Dataset,
    HyperModel,
    OptState,
    PlainModel,
    TrainConfig,
    adam_step,
    build_structure,
    default_config,
    gradient,
    nll_loss,
    train_loop,
)
from spnkit.structure import param_count


def _models(st, seed=0):
    return [PlainModel(st, seed=seed), HyperModel.create(st, 3, seed=seed)]


def _finite_diff(model, batch, coords, eps=1e-5):
    base = model.params.copy()
    out = np.empty(len(coords))
    for i, c in enumerate(coords):
        p = base.copy()
        p[c] += eps
        model.params = p
        hi = nll_loss(model, batch)
        p = base.copy()
        p[c] -= eps
        model.params = p
        lo = nll_loss(model, batch)
        out[i] = (hi - lo) / (2 * eps)
    model.params = base
    return out


def test_loss_mean_invariance_and_column_check():
    st = build_structure(5, 2, 2, 2, seed=0)
    rng = np.random.default_rng(0)
    batch = rng.integers(0, 2, size=(6, 5))
    for model in _models(st):
        once = nll_loss(model, batch)
        twice = nll_loss(model, np.vstack([batch, batch]))
        assert once == pytest.approx(twice, abs=1e-12)
        np.testing.assert_allclose(
            gradient(model, batch), gradient(model, np.vstack([batch, batch])), atol=1e-12
        )
    with pytest.raises(ValueError):
        nll_loss(_models(st)[0], rng.integers(0, 2, size=(4, 6)))


def test_one_hot_model_has_zero_loss():
    st = build_structure(4, 2, 2, 2, seed=1)
    model = PlainModel(st, params=np.zeros(param_count(st)))
    # drive every sum-node row to (almost) one-hot on child 0: leaf column 0 is X=0
    groups = model._logit_groups()
    for g in groups:
        g[..., 0] = 500.0
    batch = np.zeros((3, 4), dtype=int)
    assert nll_loss(model, batch) == pytest.approx(0.0, abs=1e-12)


def test_two_variable_loss_hand_computation():
    st = build_structure(2, 1, 1, 2, seed=0)
    model = PlainModel(st, seed=3)
    w = model.weight_store()
    leaf_of_var = {st.sectors[s].var: s for s in range(2)}
    batch = np.array([[0, 1], [1, 1], [0, 0]])
    expected = -np.mean([
        np.log(w[leaf_of_var[0]][0, x0]) + np.log(w[leaf_of_var[1]][0, x1])
        for x0, x1 in batch
    ])
    assert nll_loss(model, batch) == pytest.approx(expected, abs=1e-12)


def test_gradient_matches_finite_differences():
    st = build_structure(4, 2, 2, 2, seed=2)
    rng = np.random.default_rng(2)
    batch = rng.integers(0, 2, size=(8, 4))
    for model in _models(st, seed=4):
        grad = gradient(model, batch)
        coords = rng.choice(model.num_params, size=20, replace=False)
        fd = _finite_diff(model, batch, coords)
        rel = np.abs(fd - grad[coords]) / np.maximum(np.abs(fd), 1e-8)
        assert rel.max() < 1e-5


@pytest.mark.parametrize("seed", range(10))
def test_gradient_oracle_many_seeds(seed):
    rng = np.random.default_rng(seed)
    st = build_structure(int(rng.integers(2, 7)), int(rng.integers(1, 4)),
                         int(rng.integers(1, 3)), 2, seed=seed)
    batch = rng.integers(0, 2, size=(5, st.n))
    for model in _models(st, seed=seed):
        grad = gradient(model, batch)
        coords = rng.choice(model.num_params, size=min(20, model.num_params), replace=False)
        fd = _finite_diff(model, batch, coords)
        rel = np.abs(fd - grad[coords]) / np.maximum(np.abs(fd), 1e-8)
        assert rel.max() < 1e-4


def test_plain_gradient_rows_sum_to_zero():
    # shifting all logits of a sum-node row is a no-op, so gradients of each
    # row must sum to zero
    st = build_structure(5, 3, 2, 2, seed=3)
    model = PlainModel(st, seed=6)
    batch = np.random.default_rng(1).integers(0, 2, size=(7, 5))
    grad = gradient(model, batch)
    off = 0
    for shape in model._shapes:
        size = int(np.prod(shape))
        rows = grad[off : off + size].reshape(-1, shape[-1])
        np.testing.assert_allclose(rows.sum(axis=1), 0.0, atol=1e-10)
        off += size


def test_adam_first_step_and_degenerate_cases():
    config = TrainConfig(lr=0.01)
    theta = np.array([1.0])
    state = OptState.zeros(1)

    updated, state1 = adam_step(theta, np.array([0.5]), state, config)
    assert updated[0] == pytest.approx(0.99, abs=1e-6)
    assert state1.t == 1

    # zero gradient, no decay: parameters unchanged
    same, _ = adam_step(theta, np.zeros(1), OptState.zeros(1), config)
    np.testing.assert_array_equal(same, theta)

    # decay only: magnitude strictly decreases
    decayed, _ = adam_step(theta, np.zeros(1), OptState.zeros(1),
                           TrainConfig(lr=0.01, weight_decay=1e-3))
    assert 0 < decayed[0] < 1.0

    with pytest.raises(ValueError):
        adam_step(theta, np.zeros(2), OptState.zeros(1), config)


def _tiny_dataset(seed=0, n=6, rows=400):
    rng = np.random.default_rng(seed)
    base = rng.integers(0, 2, size=(rows, n))
    base[:, 1] = base[:, 0]  # learnable correlation
    return Dataset("tiny", base[: rows - 100], base[rows - 100 : rows - 50], base[rows - 50 :])


def test_train_loop_improves_and_selects_best():
    ds = _tiny_dataset()
    st = build_structure(6, 2, 2, 2, seed=0)
    for variant, model in zip(("plain", "hyper"), _models(st, seed=1)):
        result = train_loop(model, ds, default_config(variant, max_epochs=5, batch_size=50))
        assert result.history[-1].train_nll < result.history[0].train_nll
        assert result.best_valid_ll == max(rec.valid_ll for rec in result.history)
        # restored checkpoint reproduces the best validation LL
        assert float(np.mean(model.log_density(ds.valid))) == pytest.approx(
            result.best_valid_ll, abs=1e-12
        )


def test_train_loop_determinism():
    ds = _tiny_dataset(3)
    st = build_structure(6, 2, 1, 2, seed=0)
    runs = []
    for _ in range(2):
        model = PlainModel(st, seed=2)
        result = train_loop(model, ds, default_config("plain", max_epochs=3, batch_size=64, seed=5))
        runs.append((model.params.copy(), [(r.train_nll, r.valid_ll) for r in result.history]))
    np.testing.assert_array_equal(runs[0][0], runs[1][0])
    assert runs[0][1] == runs[1][1]


def test_train_loop_early_stopping_and_validation():
    ds = _tiny_dataset(4)
    st = build_structure(6, 2, 1, 2, seed=0)
    model = PlainModel(st, seed=0)
    result = train_loop(model, ds, default_config("plain", max_epochs=50, patience=2,
                                                  batch_size=64))
    tail = result.history[-2:]
    assert all(rec.valid_ll <= result.best_valid_ll for rec in tail)

    with pytest.raises(ValueError, match="nonempty"):
        empty = Dataset("tiny", ds.train, ds.valid, ds.test)
        empty.valid = np.empty((0, 6), dtype=np.int8)
        train_loop(model, empty, default_config("plain"))


def test_default_configs_match_published_grid():
    from spnkit.training import EMBED_DIM_GRID, WEIGHT_DECAY_GRID

    assert default_config("plain").lr == 2e-2
    assert default_config("hyper").lr == 5e-3
    assert default_config("plain").batch_size == 500
    assert WEIGHT_DECAY_GRID == (1e-3, 1e-4, 1e-5)
    assert EMBED_DIM_GRID == (5, 10, 20)
    assert default_config("plain").max_steps == 80_000
