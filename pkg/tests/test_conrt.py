import numpy as np
import pytest

from causerl import tensor as T
from causerl.conrt import (
    TeacherHandle,
    TransferSpace,
    compute_anchor,
    contrastive_loss,
    l2_distance,
    project_student,
)
from causerl.encoders import FrozenEmbeddingProvider, Vocabulary
from causerl.errors import EmptyBatchError, NoPositivesError
from causerl.selfrl import OnlineNetwork, SelfRLConfig
from causerl.tensor import Tape, Tensor, backward


def _teacher(seed=0, d_emb=4, hidden=3):
    config = SelfRLConfig(d_emb=d_emb, hidden=hidden, proj_dim=4)
    rng = np.random.default_rng(seed)
    provider = FrozenEmbeddingProvider(10, d_emb, rng)
    online = OnlineNetwork(config, rng)
    return TeacherHandle(online.enc, provider, Vocabulary()), config


def _space(seed=0, in_dim=6, out_dim=4, T=0.1):
    return TransferSpace.build(in_dim, in_dim, out_dim, T,
                               np.random.default_rng(seed))


def _vectors_at_distances(anchor: np.ndarray, distances) -> list[Tensor]:
    """Vectors whose l2 distance to the anchor is exactly as requested."""
    out = []
    for i, d in enumerate(distances):
        offset = np.zeros_like(anchor)
        offset[i % anchor.size] = d
        out.append(Tensor(anchor + offset))
    return out


def test_temperature_must_be_positive():
    with pytest.raises(ValueError):
        _space(T=0.0)


def test_equal_distances_give_log_inverse_batch_size():
    anchor = np.array([0.5, -0.25, 1.0, 0.0])
    vecs = _vectors_at_distances(anchor, [2.0, 2.0, 2.0, 2.0])
    loss = contrastive_loss(vecs[:1], vecs, Tensor(anchor), temperature=0.1)
    assert float(loss.data) == pytest.approx(np.log(1.0 / 4.0), abs=1e-9)


def test_singleton_batch_gives_zero():
    anchor = np.array([1.0, 2.0, 0.0, 0.5])
    vecs = _vectors_at_distances(anchor, [1.3])
    loss = contrastive_loss(vecs, vecs, Tensor(anchor), temperature=0.7)
    assert float(loss.data) == pytest.approx(0.0, abs=1e-12)


def test_two_point_hand_computed_value():
    # D+/T = 0, D-/T = 1  ->  log(1 / (1 + e))
    anchor = np.array([0.0, 0.0, 0.0, 0.0])
    temperature = 0.5
    vecs = _vectors_at_distances(anchor, [0.0, 0.5])
    loss = contrastive_loss(vecs[:1], vecs, Tensor(anchor), temperature)
    assert float(loss.data) == pytest.approx(-np.log(1.0 + np.e), abs=1e-6)
    assert float(loss.data) == pytest.approx(-1.3132616875, abs=1e-6)


def test_no_positives_raises():
    anchor = np.array([0.0, 0.0, 0.0, 0.0])
    vecs = _vectors_at_distances(anchor, [1.0, 2.0])
    with pytest.raises(NoPositivesError):
        contrastive_loss([], vecs, Tensor(anchor), 0.1)


def test_stabilized_lse_matches_naive():
    rng = np.random.default_rng(1)
    for _ in range(50):
        n = int(rng.integers(2, 8))
        temperature = float(rng.uniform(0.05, 1.0))
        dists = rng.uniform(0.0, 30.0 * temperature, size=n)
        anchor = rng.normal(size=5)
        vecs = _vectors_at_distances(anchor, dists)
        n_pos = int(rng.integers(1, n + 1))
        loss = float(contrastive_loss(vecs[:n_pos], vecs, Tensor(anchor),
                                      temperature).data)
        scaled = np.array([np.linalg.norm(v.data - anchor) / temperature
                           for v in vecs])
        naive = np.mean(scaled[:n_pos] - np.log(np.sum(np.exp(scaled))))
        assert abs(loss - naive) < 1e-9


def test_single_positive_monotone_in_its_distance():
    # with one causal pair, moving it toward the anchor strictly lowers the
    # loss (the multi-positive case is only jointly monotone; see below)
    rng = np.random.default_rng(2)
    for _ in range(300):
        n = int(rng.integers(2, 7))
        temperature = float(rng.uniform(0.05, 0.5))
        anchor = rng.normal(size=4)
        dists = rng.uniform(0.1, 2.0, size=n)
        step = float(rng.uniform(0.01, dists[0] * 0.9))
        before = _loss_at(anchor, dists, 1, temperature)
        dists2 = dists.copy()
        dists2[0] -= step
        after = _loss_at(anchor, dists2, 1, temperature)
        assert after < before


def test_all_positives_jointly_monotone():
    rng = np.random.default_rng(3)
    for _ in range(100):
        n = int(rng.integers(3, 7))
        n_pos = int(rng.integers(2, n))
        temperature = float(rng.uniform(0.05, 0.5))
        anchor = rng.normal(size=4)
        dists = rng.uniform(0.5, 2.0, size=n)
        before = _loss_at(anchor, dists, n_pos, temperature)
        dists2 = dists.copy()
        dists2[:n_pos] -= 0.2
        after = _loss_at(anchor, dists2, n_pos, temperature)
        assert after < before


def _loss_at(anchor, dists, n_pos, temperature):
    vecs = _vectors_at_distances(anchor, dists)
    return float(contrastive_loss(vecs[:n_pos], vecs, Tensor(anchor),
                                  temperature).data)


def test_shift_invariance_when_all_positive():
    anchor = np.array([0.0, 0.0, 0.0, 0.0])
    dists = np.array([0.4, 0.9, 1.3])
    a = _loss_at(anchor, dists, 3, 0.25)
    b = _loss_at(anchor, dists + 0.7, 3, 0.25)
    assert a == pytest.approx(b, abs=1e-9)


def test_negate_distance_mode_flips_ordering():
    anchor = np.zeros(4)
    dists = np.array([0.2, 1.0])
    vecs = _vectors_at_distances(anchor, dists)
    plain = float(contrastive_loss(vecs[:1], vecs, Tensor(anchor), 0.5).data)
    flipped = float(contrastive_loss(vecs[:1], vecs, Tensor(anchor), 0.5,
                                     negate_distance=True).data)
    assert plain < flipped  # close positive is cheap literally, costly flipped


def test_anchor_batch_properties():
    teacher, config = _teacher()
    space = TransferSpace.build(6, 2 * config.hidden, 4, 0.1,
                                np.random.default_rng(5))
    tokens = [1, 2, 3]
    single = compute_anchor([tokens], teacher, space)
    tripled = compute_anchor([tokens, tokens, tokens], teacher, space)
    assert np.allclose(single.data, tripled.data, atol=1e-12)
    with pytest.raises(EmptyBatchError):
        compute_anchor([], teacher, space)


def test_anchor_gradient_skips_teacher_encoder():
    teacher, config = _teacher()
    space = TransferSpace.build(6, 2 * config.hidden, 4, 0.1,
                                np.random.default_rng(6))
    with Tape():
        anchor = compute_anchor([[1, 2], [3, 4, 5]], teacher, space)
        backward(T.sum_all(T.square(anchor)))
    assert all(p.grad is None for p in teacher.enc.parameters())
    assert any(np.any(p.grad != 0.0)
               for p in space.teacher_head.parameters())


def test_teacher_handle_is_isolated_copy():
    config = SelfRLConfig(d_emb=4, hidden=3, proj_dim=4)
    rng = np.random.default_rng(7)
    provider = FrozenEmbeddingProvider(10, 4, rng)
    online = OnlineNetwork(config, rng)
    teacher = TeacherHandle(online.enc, provider, Vocabulary())
    checksum = teacher.checksum()
    online.enc.wx_f.data += 1.0  # later fine-tuning must not reach the handle
    assert teacher.checksum() == checksum


def test_project_student_splits_by_label():
    space = _space()
    vecs = [Tensor(np.random.default_rng(8).normal(size=6)) for _ in range(4)]
    pos, all_projected = project_student(vecs, [0, 0, 0, 0], space)
    assert pos == [] and len(all_projected) == 4
    pos, all_projected = project_student(vecs, [1, 1, 1, 1], space)
    assert pos == all_projected


def test_l2_distance_matches_numpy():
    rng = np.random.default_rng(9)
    a, b = rng.normal(size=5), rng.normal(size=5)
    d = float(l2_distance(Tensor(a), Tensor(b)).data)
    assert d == pytest.approx(np.linalg.norm(a - b), abs=1e-10)
