import pytest
import numpy as np
from ml_continual.errors import NotFittedError, SingularCovarianceError, \
                                BufferCapacityError
from ml_continual.heads import PlasticHead, SoftmaxHead, head_loss_grad, \
                               softmax_loss_grad
from ml_continual.linear_eval import OfflineTrainConfig, \
                                    OfflineLinearClassifier
from ml_continual.models import StreamingLDA, OnlineSoftmaxReplay, \
                                RemindLite, create_learner, load_learner
from ml_continual.stream import build_iid_stream
from synthetic_data import gen_dataset, BatchLDA


def _stream(learner, ds, order=None):
    order = range(len(ds)) if order is None else order
    for idx in order:
        learner.partial_fit(ds.vectors[idx], ds.labels[idx])
    return learner


def _batch_means(ds):
    X = ds.vectors.astype(np.float64)
    return np.array([X[ds.labels == c].mean(axis=0) for c in ds.classes()])


def _pooled_covariance(ds):
    X = ds.vectors.astype(np.float64)
    means = _batch_means(ds)
    centered = X - means[np.searchsorted(ds.classes(), ds.labels)]
    total = np.zeros((ds.dim, ds.dim))
    for row in centered:
        total += np.outer(row, row)
    return total / len(ds)


class TestStreamingLDA:
    def test_init(self):
        slda = StreamingLDA(3)
        np.testing.assert_array_equal(slda.covariance_, np.eye(3))
        assert slda.total_count == 0
        zeros = StreamingLDA(3, init='zeros')
        np.testing.assert_array_equal(zeros.covariance_, np.zeros((3, 3)))
        with pytest.raises(NotFittedError):
            zeros.predict(np.zeros((1, 3)))

    def test_first_update(self):
        for init in ['identity', 'zeros']:
            slda = StreamingLDA(4, init=init)
            before = slda.covariance_.copy()
            z = np.array([1.0, -2.0, 3.0, 0.5])
            slda.partial_fit(z, 2)
            np.testing.assert_array_equal(slda.covariance_, before)
            np.testing.assert_array_equal(slda.means_[2], z)
            assert list(slda.counts_) == [0, 0, 1]

    def test_identical_vectors(self):
        slda = StreamingLDA(2, init='zeros')
        slda.fit(np.array([[0.0, 0.0]]), np.array([1]))
        z = np.array([3.0, 4.0])
        slda.partial_fit(z, 0)
        slda.partial_fit(z, 0)
        np.testing.assert_array_equal(slda.means_[0], z)
        np.testing.assert_array_equal(slda.covariance_, np.zeros((2, 2)))

    def test_fit_one_per_class(self):
        ds = gen_dataset(num_classes=4, dim=3, per_class=1)
        slda = StreamingLDA(3).fit(ds.vectors, ds.labels)
        np.testing.assert_allclose(slda.means_, ds.vectors, rtol=1e-12)
        np.testing.assert_array_equal(slda.covariance_, np.zeros((3, 3)))

    def test_fit_matches_oracle(self):
        ds = gen_dataset(num_classes=5, dim=6, per_class=40, seed=2)
        slda = StreamingLDA(6).fit(ds.vectors, ds.labels)
        np.testing.assert_allclose(slda.means_, _batch_means(ds), rtol=1e-10)
        np.testing.assert_allclose(slda.covariance_, _pooled_covariance(ds),
                                   rtol=1e-8, atol=1e-12)
        assert slda.total_count == len(ds)

    def test_means_order_invariant(self):
        ds = gen_dataset(num_classes=5, dim=8, per_class=100, seed=4)
        rng = np.random.default_rng(0)
        oracle = _batch_means(ds)
        for _ in range(3):
            slda = _stream(StreamingLDA(8), ds, rng.permutation(len(ds)))
            np.testing.assert_allclose(slda.means_, oracle, rtol=1e-8)
            assert slda.total_count == slda.counts_.sum() == len(ds)

    def test_batch_oracle(self):
        train, held_out = gen_dataset(num_classes=10, dim=16, per_class=200,
                                      seed=21, eval_per_class=100)
        plan = build_iid_stream(train, seed=3, checkpoint_every_examples=100)
        slda = _stream(StreamingLDA(16, shrinkage=1e-4), train, plan.order)

        means = _batch_means(train)
        np.testing.assert_allclose(slda.means_, means, rtol=1e-8)
        batch_cov = _pooled_covariance(train)
        rel = np.linalg.norm(slda.covariance_ - batch_cov) / \
              np.linalg.norm(batch_cov)
        assert rel < 1e-3

        oracle = BatchLDA(1e-4).fit(train.vectors, train.labels)
        agree = np.mean(slda.predict(held_out.vectors) ==
                        oracle.predict(held_out.vectors))
        assert len(held_out) == 1000
        assert agree >= 0.99

    def test_streaming_after_fit_is_batch(self):
        ds = gen_dataset(num_classes=4, dim=5, per_class=60, seed=8)
        base = ds.subset(np.arange(0, len(ds), 2))
        rest = ds.subset(np.arange(1, len(ds), 2))
        slda = StreamingLDA(5).fit(base.vectors, base.labels)
        _stream(slda, rest, np.random.default_rng(1).permutation(len(rest)))
        np.testing.assert_allclose(slda.covariance_, _pooled_covariance(ds),
                                   rtol=1e-8, atol=1e-12)

    def test_precision_identity_and_diagonal(self):
        slda = StreamingLDA(3, shrinkage=0.3)
        slda.partial_fit(np.zeros(3), 0)
        np.testing.assert_allclose(slda.precision(), np.eye(3), atol=1e-12)

        d = np.array([0.5, 2.0, 7.0])
        slda.covariance_ = np.diag(d)
        slda._cache = None
        np.testing.assert_allclose(np.diag(slda.precision()),
                                   1 / (0.7 * d + 0.3), rtol=1e-10)

    @pytest.mark.parametrize('seed', range(5))
    def test_precision_multiply_back(self, seed):
        rng = np.random.default_rng(seed)
        A = rng.normal(size=(6, 6))
        slda = StreamingLDA(6, shrinkage=1e-4)
        slda.partial_fit(np.zeros(6), 0)
        slda.covariance_ = A @ A.T + 0.1 * np.eye(6)
        slda._cache = None
        shrunk = (1 - 1e-4) * slda.covariance_ + 1e-4 * np.eye(6)
        P = slda.precision()
        assert np.linalg.norm(P @ shrunk - np.eye(6)) < 1e-6
        np.testing.assert_array_equal(P, P.T)

    def test_precision_cached(self):
        ds = gen_dataset(num_classes=3, dim=4, per_class=10)
        slda = StreamingLDA(4).fit(ds.vectors, ds.labels)
        first = slda.precision()
        assert slda.precision() is first
        slda.partial_fit(ds.vectors[0], 0)
        assert slda.precision() is not first

    def test_singular(self):
        slda = StreamingLDA(3, shrinkage=0.0, init='zeros')
        slda.fit(np.array([[1.0, 0, 0], [0, 1.0, 0]]), np.array([0, 1]))
        with pytest.raises(SingularCovarianceError) as exc:
            slda.predict(np.zeros((1, 3)))
        assert exc.value.condition > 1e15

    @pytest.mark.parametrize('seed', range(5))
    def test_nearest_mean_equivalence(self, seed):
        rng = np.random.default_rng(seed)
        slda = StreamingLDA(5, shrinkage=0.0, covariance_plastic=False)
        for _ in range(40):
            slda.partial_fit(rng.normal(0, 3, 5), int(rng.integers(0, 6)))
        Z = rng.normal(0, 3, (200, 5))
        dists = ((Z[:, None, :] - slda.means_[None]) ** 2).sum(axis=2)
        dists[:, slda.counts_ == 0] = np.inf
        np.testing.assert_array_equal(slda.predict(Z),
                                      np.argmin(dists, axis=1))

    def test_single_class_and_ties(self):
        slda = StreamingLDA(2)
        slda.partial_fit(np.array([1.0, 1.0]), 3)
        np.testing.assert_array_equal(
            slda.predict(np.random.normal(size=(5, 2))), [3] * 5)
        label, scores = slda.predict_one(np.zeros(2))
        assert label == 3
        assert np.isinf(scores[:3]).all()

        tie = StreamingLDA(2)
        tie.partial_fit(np.array([1.0, 0.0]), 4)
        tie.partial_fit(np.array([1.0, 0.0]), 1)
        assert tie.predict(np.array([[1.0, 0.0]]))[0] == 1

    def test_frozen_covariance(self):
        ds = gen_dataset(num_classes=3, dim=4, per_class=20, seed=5)
        slda = StreamingLDA(4, covariance_plastic=False)
        slda.fit(ds.vectors[:30], ds.labels[:30])
        before = slda.covariance_.tobytes()
        _stream(slda, ds, range(30, len(ds)))
        assert slda.covariance_.tobytes() == before

    def test_symmetry(self):
        rng = np.random.default_rng(9)
        slda = StreamingLDA(4)
        Z = rng.normal(0, 5, (10 ** 5, 4))
        labels = rng.integers(0, 20, 10 ** 5)
        for z, y in zip(Z, labels):
            slda.partial_fit(z, y)
        assert np.abs(slda.covariance_ - slda.covariance_.T).max() < 1e-9
        assert slda.total_count == slda.counts_.sum()

    def test_bad_input(self):
        slda = StreamingLDA(3)
        with pytest.raises(ValueError):
            slda.partial_fit(np.zeros(4), 0)
        with pytest.raises(ValueError):
            slda.partial_fit(np.array([0, np.nan, 0]), 0)

    def test_snapshot(self, tmp_path):
        ds = gen_dataset(num_classes=4, dim=5, per_class=20, seed=6)
        slda = StreamingLDA(5).fit(ds.vectors, ds.labels)
        path = str(tmp_path / 'slda.snap')
        slda.save(path)
        restored = load_learner(path)
        assert isinstance(restored, StreamingLDA)
        np.testing.assert_array_equal(restored.decision_scores(ds.vectors),
                                      slda.decision_scores(ds.vectors))


class TestOnlineSoftmaxReplay:
    def test_defaults(self):
        learner = OnlineSoftmaxReplay(4)
        assert learner.learning_rate == 0.1
        assert learner.buffer.capacity == 735000
        assert learner.replay_size == 50
        with pytest.raises(NotFittedError):
            learner.predict(np.zeros((1, 4)))

    def test_empty_buffer_step(self):
        learner = OnlineSoftmaxReplay(3)
        z = np.array([1.0, 2.0, -1.0])
        learner.partial_fit(z, 0)
        assert learner.last_batch_size_ == 1
        learner.partial_fit(-z, 1)
        assert learner.last_batch_size_ == 2
        assert len(learner.buffer) == 2

    def test_single_example_gradient(self):
        learner = OnlineSoftmaxReplay(3, capacity=0)
        learner.head.add_class(0)
        learner.head.add_class(1)
        z = np.array([0.5, -1.0, 2.0])
        reference = SoftmaxHead(3)
        reference.add_class(0)
        reference.add_class(1)
        _, grad_W, grad_b = softmax_loss_grad(reference, z[None], [1])
        learner.partial_fit(z, 1)
        np.testing.assert_allclose(learner.head.W, -0.1 * grad_W)
        np.testing.assert_allclose(learner.head.b, -0.1 * grad_b)
        assert len(learner.buffer) == 0

    @pytest.mark.parametrize(
        ["stored", "expected"],
        [(10, 11), (50, 51), (120, 51)]
    )
    def test_batch_size(self, stored, expected):
        ds = gen_dataset(num_classes=3, dim=4, per_class=50, seed=1)
        learner = _stream(OnlineSoftmaxReplay(4), ds, range(stored))
        assert len(learner.buffer) == stored
        learner.partial_fit(ds.vectors[-1], ds.labels[-1])
        assert learner.last_batch_size_ == expected

    def test_agrees_with_offline(self):
        train, held_out = gen_dataset(num_classes=5, dim=8, per_class=100,
                                      separation=6.0, seed=3,
                                      eval_per_class=40)
        plan = build_iid_stream(train, seed=0, checkpoint_every_examples=50)
        online = _stream(OnlineSoftmaxReplay(8, seed=1), train, plan.order)
        cfg = OfflineTrainConfig(epochs=30, decay_epochs=(20, 25),
                                 batch_size=32)
        offline = OfflineLinearClassifier(cfg).fit(train.vectors,
                                                   train.labels)
        agree = np.mean(online.predict(held_out.vectors) ==
                        offline.predict(held_out.vectors))
        assert agree >= 0.9

    def test_snapshot_resume(self, tmp_path):
        ds = gen_dataset(num_classes=4, dim=6, per_class=40, seed=2)
        order = np.random.default_rng(0).permutation(len(ds))
        learner = _stream(OnlineSoftmaxReplay(6, capacity=30, seed=4), ds,
                          order[:80])
        path = str(tmp_path / 'rs.snap')
        learner.save(path)
        restored = load_learner(path)
        _stream(learner, ds, order[80:])
        _stream(restored, ds, order[80:])
        np.testing.assert_array_equal(restored.head.W, learner.head.W)
        assert restored.buffer.to_bytes() == learner.buffer.to_bytes()


class TestRemindLite:
    def _learner(self, **kwargs):
        params = dict(num_subspaces=4, codebook_size=16, hidden_size=32,
                      warm_epochs=2, seed=0)
        params.update(kwargs)
        return RemindLite(8, **params)

    def test_defaults(self):
        learner = RemindLite(64)
        assert learner.buffer.capacity == 959665
        assert learner.num_subspaces == 32
        assert learner.codebook_size == 256
        assert learner.replay_size == 50
        assert learner.mixup_alpha == 0.1
        assert learner.learning_rate == 0.1

    def test_init_stores_codes(self):
        ds = gen_dataset(num_classes=2, dim=8, per_class=5, seed=1)
        learner = self._learner(capacity=100).fit(ds.vectors, ds.labels)
        assert len(learner.buffer) == 10
        assert learner.buffer.payload_array().dtype == np.uint8
        np.testing.assert_array_equal(learner.classes_, [0, 1])

    def test_init_over_capacity(self):
        ds = gen_dataset(num_classes=5, dim=8, per_class=40, seed=2)
        learner = self._learner(capacity=63).fit(ds.vectors, ds.labels)
        counts = learner.buffer.class_counts
        assert len(learner.buffer) == 63
        assert sorted(counts) == [0, 1, 2, 3, 4]
        assert max(counts.values()) - min(counts.values()) <= 2

    def test_zero_capacity(self):
        ds = gen_dataset(num_classes=2, dim=8, per_class=5)
        with pytest.raises(BufferCapacityError):
            self._learner(capacity=0).fit(ds.vectors, ds.labels)

    def test_requires_init(self):
        with pytest.raises(NotFittedError):
            self._learner().partial_fit(np.zeros(8), 0)

    def test_batch_size_and_buffer_bytes(self):
        ds = gen_dataset(num_classes=3, dim=8, per_class=40, seed=3)
        learner = self._learner(capacity=60).fit(ds.vectors[:80],
                                                 ds.labels[:80])
        learner.partial_fit(ds.vectors[90], ds.labels[90])
        assert learner.last_batch_size_ == 51
        data = learner.buffer.to_bytes()
        assert len(data) == len(learner.buffer) * (4 + 4) + 24

    def test_empty_replay_is_online_sgd(self):
        ds = gen_dataset(num_classes=3, dim=8, per_class=20, seed=4)
        learner = self._learner(replay_size=0, mixup_alpha=0.0,
                                warm_epochs=0, learning_rate=0.05)
        learner.fit(ds.vectors[:20], ds.labels[:20])
        head = PlasticHead.from_snapshot(*learner.head.to_snapshot())
        for idx in range(20, 60):
            z, y = ds.vectors[idx].astype(np.float64), ds.labels[idx]
            learner.partial_fit(z, y)
            head.add_class(y)
            _, grads = head_loss_grad(head, z[None], head.one_hot([y]))
            head.step(grads, 0.05)
            assert learner.last_batch_size_ == 1
        for name, param in head.params.items():
            np.testing.assert_allclose(learner.head.params[name], param,
                                       rtol=1e-12, atol=1e-14)

    def test_small_alpha_close_to_no_mixup(self):
        ds = gen_dataset(num_classes=3, dim=8, per_class=30, seed=5)
        losses = []
        for alpha in [1e-4, 0.0]:
            learner = self._learner(mixup_alpha=alpha, replay_size=4)
            learner.fit(ds.vectors[:60], ds.labels[:60])
            losses.append(learner.partial_fit(ds.vectors[70], ds.labels[70]))
        assert abs(losses[0] - losses[1]) < 1e-3

    def test_predict_ignores_buffer(self):
        ds = gen_dataset(num_classes=3, dim=8, per_class=30, seed=6)
        learner = self._learner().fit(ds.vectors, ds.labels)
        scores = learner.decision_scores(ds.vectors)
        learner.buffer = None
        np.testing.assert_array_equal(learner.decision_scores(ds.vectors),
                                      scores)

    def test_learning_rate_decay(self):
        learner = self._learner(lr_decay_every=10, lr_decay_factor=2.0)
        assert learner.current_learning_rate() == 0.1
        learner.num_updates = 25
        assert learner.current_learning_rate() == 0.1 / 4

    def test_snapshot_resume(self, tmp_path):
        ds = gen_dataset(num_classes=4, dim=8, per_class=30, seed=7)
        learner = self._learner(capacity=50).fit(ds.vectors[:60],
                                                 ds.labels[:60])
        path = str(tmp_path / 'remind.snap')
        learner.save(path)
        restored = load_learner(path)
        _stream(learner, ds, range(60, 120))
        _stream(restored, ds, range(60, 120))
        for name, param in learner.head.params.items():
            np.testing.assert_array_equal(restored.head.params[name], param)
        assert restored.buffer.to_bytes() == learner.buffer.to_bytes()


class TestCreateLearner:
    @pytest.mark.parametrize(
        ["kind", "cls"],
        [('slda', StreamingLDA), ('replay_softmax', OnlineSoftmaxReplay),
         ('remind', RemindLite)]
    )
    def test_kinds(self, kind, cls):
        learner = create_learner(kind, 64, {}, seed=3)
        assert isinstance(learner, cls)
        assert learner.kind == kind

    def test_params(self):
        learner = create_learner('replay_softmax', 4, {'capacity': 0},
                                 seed=5)
        assert learner.buffer.capacity == 0
        assert learner.seed == 5

    def test_unknown(self):
        with pytest.raises(ValueError):
            create_learner('qda', 4)
