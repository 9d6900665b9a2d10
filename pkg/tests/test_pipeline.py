from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lrdtm.datakit import SplitSpec, accuracy, stratified_split, synth_subspace_dataset
from lrdtm.dtml import Mode
from lrdtm.errors import DataError
from lrdtm.pipeline import (LabelCodebook, TrainParams, classify_embeddings, embed, load_model,
                            nearest_neighbor, one_hot, predict, save_model, train)

EXACT = TrainParams(projection_rtol=None)


def axis_data(rng, jitter=1e-3):
    x = np.zeros((6, 10))
    x[0, :5] = 1.0
    x[3, 5:] = 1.0
    return x + jitter * rng.standard_normal(x.shape), np.repeat([4, 9], 5)


def tall_data(rng, m=20, n=12, c=3):
    """More features than samples: X has full column rank, so PX = XZ is always solvable."""
    return rng.standard_normal((m, n)), np.arange(n) % c


def test_one_hot_examples():
    assert one_hot([1], 3)[:, 0].tolist() == [0, 1, 0]
    assert one_hot([0, 0, 1], 2).T.tolist() == [[1, 0], [1, 0], [0, 1]]
    with pytest.raises(ValueError):
        one_hot([3], 3)


@given(st.lists(st.integers(0, 6), min_size=1, max_size=30))
def test_one_hot_columns(labels):
    y = one_hot(labels, 7)
    assert np.array_equal(y.sum(axis=0), np.ones(len(labels)))
    assert set(np.unique(y)) <= {0.0, 1.0}


def test_codebook():
    cb = LabelCodebook.from_labels([7, 3, 3, 11])
    assert cb.classes.tolist() == [3, 7, 11]
    assert cb.encode([11, 3]).tolist() == [2, 0]
    assert cb.decode([1]).tolist() == [7]
    with pytest.raises(DataError):
        cb.encode([5])
    with pytest.raises(DataError):
        LabelCodebook.from_labels([2, 2])


def test_separable_self_prediction(rng):
    x, labels = axis_data(rng)
    model = train(x, labels)
    pred = model.codebook.decode(predict(model, x))
    assert accuracy(pred, labels) == 1.0


def test_single_class_rejected(rng):
    with pytest.raises(DataError):
        train(rng.standard_normal((5, 4)), np.zeros(4, dtype=int))


def test_label_count_checked(rng):
    with pytest.raises(DataError):
        train(rng.standard_normal((5, 4)), [0, 1, 0])


def test_pipeline_trace_monotone(rng):
    x, labels = tall_data(rng)
    t = train(x, labels).dtml.objective_trace
    assert all(b <= a + 1e-12 for a, b in zip(t, t[1:]))


def test_gallery_recomputable(rng):
    x, labels = axis_data(rng)
    m = train(x, labels)
    xs = x / np.linalg.norm(x, axis=0)
    g = m.dtml.w1 @ (xs @ m.latlrr.z) + m.dtml.w2 @ (m.latlrr.l @ xs)
    assert np.linalg.norm(g - m.gallery) <= 1e-10
    assert m.gallery.shape[1] == x.shape[1]


def test_embed_training_matches_gallery(rng):
    x, labels = tall_data(rng)
    m = train(x, labels, EXACT)
    assert m.projection.consistent
    assert np.linalg.norm(embed(m, x) - m.gallery) <= 1e-8


def test_embed_linear_and_zero(rng):
    x, labels = tall_data(rng)
    m = train(x, labels, replace(EXACT, normalize=False))
    a, b = rng.standard_normal((2, 20, 1))
    assert not embed(m, np.zeros((20, 1))).any()
    lhs = embed(m, 2.0 * a - 0.5 * b)
    assert np.linalg.norm(lhs - (2.0 * embed(m, a) - 0.5 * embed(m, b))) <= 1e-10
    with pytest.raises(ValueError):
        embed(m, np.zeros((3, 1)))


def test_training_sample_predicts_own_class(rng):
    x, labels = tall_data(rng)
    m = train(x, labels, EXACT)
    assert np.array_equal(m.codebook.decode(predict(m, x)), labels)


def test_nearest_neighbor_margin_and_ties(rng):
    gallery = np.eye(3)
    q = gallery[:, [2]] + 1e-6 * rng.standard_normal((3, 1))
    assert nearest_neighbor(gallery, [0, 1, 2], q).tolist() == [2]
    # equidistant from columns 0 and 1: the lower index wins
    assert nearest_neighbor(np.array([[1.0, -1.0]]), [5, 6], np.zeros((1, 1))).tolist() == [5]


@settings(max_examples=30)
@given(st.integers(0, 2**32 - 1))
def test_nn_permutation_invariance(seed):
    r = np.random.default_rng(seed)
    gallery, labels = r.standard_normal((3, 8)), r.integers(0, 4, 8)
    q = r.standard_normal((3, 5))
    perm = r.permutation(8)
    assert np.array_equal(nearest_neighbor(gallery, labels, q),
                          nearest_neighbor(gallery[:, perm], labels[perm], q))


def test_synth_end_to_end():
    ds = synth_subspace_dataset(noise_fraction=0.0)
    tr, te = stratified_split(ds.labels, SplitSpec(10, seed=0))
    m = train(ds.x[:, tr], ds.labels[tr])
    pred = m.codebook.decode(predict(m, ds.x[:, te]))
    assert accuracy(pred, ds.labels[te]) >= 0.9


def test_predict_outputs_and_determinism(rng):
    x, labels = axis_data(rng)
    a, b = train(x, labels), train(x, labels)
    q = rng.standard_normal((6, 7))
    pa = predict(a, q)
    assert pa.shape == (7,) and set(pa) <= set(range(a.codebook.n_classes))
    assert np.array_equal(pa, predict(b, q))
    assert np.array_equal(a.dtml.w1, b.dtml.w1) and np.array_equal(a.latlrr.z, b.latlrr.z)


def test_label_target(rng):
    x, labels = axis_data(rng)
    m = train(x, labels, TrainParams(nn_target="labels"))
    emb = np.array([[0.9, 0.1], [0.2, 0.7]])
    assert classify_embeddings(m, emb).tolist() == [0, 1]
    assert np.array_equal(predict(m, x), predict(m, x, nn_target="labels"))


@pytest.mark.parametrize("mode", list(Mode))
def test_modes_and_roundtrip(tmp_path, rng, mode):
    x, labels = tall_data(rng)
    m = train(x, labels, TrainParams(mode=mode, ablation_lambda=0.3))
    save_model(m, tmp_path / "m.npz")
    back = load_model(tmp_path / "m.npz")
    q = rng.standard_normal((20, 4))
    assert np.array_equal(embed(m, q), embed(back, q))
    assert back.params == m.params and back.dtml.mode is mode
    assert back.latlrr.history == m.latlrr.history


def test_params_validation():
    with pytest.raises(ValueError):
        TrainParams(lambda3=0.0)
    with pytest.raises(ValueError):
        TrainParams(nn_target="vertices")
    with pytest.raises(ValueError):
        TrainParams(projection_rtol=1.5)
    p = TrainParams(mode="shared", lambda4=0.7)
    assert p.mode is Mode.SHARED_SINGLE and p.single_lambda == 0.7
    assert TrainParams.from_dict(p.to_dict()) == p


def test_truncated_projection_residual_recorded():
    ds = synth_subspace_dataset()
    tr, _ = stratified_split(ds.labels, SplitSpec(10, seed=0))
    m = train(ds.x[:, tr], ds.labels[tr])
    assert 0 < m.projection.fit_residual < 1
