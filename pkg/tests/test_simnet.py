import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from clusterpurify.data import sample_episode
from clusterpurify.purify import compute_prototypes
from clusterpurify.simnet import (
    AdamState,
    CheckpointError,
    ShapeError,
    SimilarityNet,
    adam_step,
    forward,
    init_net,
    load_checkpoint,
    loss_inter,
    loss_intra,
    save_checkpoint,
    zero_net,
)

from conftest import net_as_lists, perturbed_net, random_dataset
from oracles import central_differences, max_relative_error, mlp_score

# oracles.mlp_score on init_net(4, (64, 64), seed=13) at [1, 0, 0, 0]
SEED13_SCORE = 0.18636426849054646

KINK_MARGIN = 1e-3


def kink_distance(net, x):
    """Smallest |pre-activation| over both hidden layers for inputs ``x``."""
    z1 = x @ net.weights[0] + net.biases[0]
    z2 = np.maximum(z1, 0) @ net.weights[1] + net.biases[1]
    return min(np.abs(z1).min(), np.abs(z2).min())


def gradcheck_cases(kind, count, seed):
    """(net, queries, labels, prototypes) cases away from ReLU kinks.

    A finite-difference step that crosses a kink measures a different
    one-sided slope, so cases with a pre-activation within KINK_MARGIN of
    zero are redrawn.
    """
    rng = np.random.default_rng(seed)
    cases = []
    while len(cases) < count:
        dim = int(rng.integers(2, 6))
        hidden = (int(rng.integers(3, 9)), int(rng.integers(3, 9)))
        net = perturbed_net(dim, hidden, rng)
        ds = random_dataset(rng, n_classes=4, per_class=8, dim=dim)
        ep = sample_episode(ds, 3, 2, 3, rng)
        protos = compute_prototypes(ep.support, ep.support_labels, 3).vectors
        if kind == "inter":
            x = np.abs(ep.query[:, None] - protos[None]).reshape(-1, dim)
        else:
            iu, ju = np.triu_indices(len(ep.query), 1)
            x = np.abs(ep.query[iu] - ep.query[ju])
        if kink_distance(net, x) < KINK_MARGIN:
            continue
        cases.append((net, ep.query, ep.query_labels, protos))
    return cases


def gradcheck_error(kind, net, queries, labels, protos):
    if kind == "inter":
        f = lambda: loss_inter(net, queries, labels, protos)  # noqa: E731
    else:
        f = lambda: loss_intra(net, queries, labels)  # noqa: E731
    _, analytic = f()
    numeric = central_differences(lambda: f()[0], net.params(), h=1e-5)
    return max_relative_error(analytic, numeric)


class TestForward:
    def test_zero_network_is_half(self, rng):
        net = zero_net(6, (5, 7))
        assert forward(net, rng.normal(size=6)) == 0.5
        np.testing.assert_array_equal(forward(net, rng.normal(size=(10, 6))), 0.5)

    def test_matches_scalar_oracle_seed13(self):
        net = init_net(4, (64, 64), seed=13)
        x = [1.0, 0.0, 0.0, 0.0]
        assert forward(net, x) == pytest.approx(mlp_score(*net_as_lists(net), x), rel=1e-13)
        assert forward(net, x) == pytest.approx(SEED13_SCORE, rel=1e-13)

    def test_batch_matches_single(self, rng):
        net = perturbed_net(5, (8, 6), rng)
        x = np.abs(rng.normal(size=(20, 5)))
        batch = forward(net, x)
        assert [forward(net, row) for row in x] == pytest.approx(batch.tolist(), rel=1e-14)

    def test_dimension_mismatch(self):
        with pytest.raises(ShapeError):
            forward(init_net(4, (3, 3), 0), np.ones(5))

    @settings(max_examples=300, deadline=None)
    @given(
        seed=st.integers(0, 2**32 - 1),
        x=hnp.arrays(np.float64, 4, elements=st.floats(-1e300, 1e300, allow_nan=False)),
    )
    def test_score_strictly_inside_unit_interval(self, seed, x):
        net = init_net(4, (8, 8), seed)
        s = forward(net, np.abs(x))
        assert 0.0 < s < 1.0

    def test_symmetric_absdiff_and_self_constancy(self, rng):
        net = perturbed_net(3, (6, 6), rng)
        base = forward(net, np.zeros(3))
        for _ in range(50):
            a, b = rng.normal(size=3) * 10, rng.normal(size=3) * 10
            assert forward(net, np.abs(a - b)) == forward(net, np.abs(b - a))
            assert forward(net, np.abs(a - a)) == base

    def test_init_shapes_and_zero_bias(self):
        net = init_net(7, (5, 3), seed=0)
        assert [w.shape for w in net.weights] == [(7, 5), (5, 3), (3, 1)]
        assert all(not b.any() for b in net.biases)
        assert np.abs(net.weights[0]).max() <= np.sqrt(6 / 7)

    def test_bad_shape_chain(self):
        with pytest.raises(ShapeError):
            SimilarityNet([np.ones((3, 4)), np.ones((5, 2)), np.ones((2, 1))], [np.ones(4), np.ones(2), np.ones(1)])


class TestLossInter:
    def test_zero_network_value(self, rng):
        net = zero_net(3, (4, 4))
        q = rng.normal(size=(10, 3))
        loss, _ = loss_inter(net, q, np.repeat(np.arange(5), 2), rng.normal(size=(5, 3)))
        assert loss == pytest.approx(1.25, abs=1e-15)

    def test_perfect_scores_limit(self):
        # saturated net: score ~1 when |diff| = 0, ~0 otherwise
        w0 = np.eye(2) * 1.0
        net = SimilarityNet([w0, np.eye(2), np.array([[-1e4], [-1e4]])],
                            [np.zeros(2), np.zeros(2), np.array([29.0])])
        protos = np.array([[0.0, 0.0], [5.0, 5.0]])
        loss, _ = loss_inter(net, protos.copy(), np.array([0, 1]), protos)
        assert loss < 1e-12

    def test_shape_errors(self, rng):
        net = zero_net(3, (2, 2))
        with pytest.raises(ShapeError):
            loss_inter(net, rng.normal(size=(4, 3)), np.zeros(4, int), rng.normal(size=(2, 4)))
        with pytest.raises(ShapeError):
            loss_inter(net, rng.normal(size=(4, 3)), np.full(4, 3), rng.normal(size=(2, 3)))

    def test_gradient_seed29(self):
        (case,) = gradcheck_cases("inter", 1, seed=29)
        assert gradcheck_error("inter", *case) < 1e-4

    def test_gradient_many(self):
        errors = [gradcheck_error("inter", *c) for c in gradcheck_cases("inter", 20, seed=290)]
        assert max(errors) < 1e-4


class TestLossIntra:
    def test_zero_network_two_same_class(self):
        loss, _ = loss_intra(zero_net(2, (3, 3)), np.array([[0.0, 1.0], [2.0, 3.0]]), np.array([0, 0]))
        assert loss == pytest.approx(0.125, abs=1e-15)

    def test_normalised_by_q_squared(self, rng):
        net = zero_net(2, (3, 3))
        q = rng.normal(size=(6, 2))
        labels = np.array([0, 0, 0, 1, 1, 1])
        # 30 ordered pairs, each contributing 0.25 -> 7.5 / 36
        loss, _ = loss_intra(net, q, labels)
        assert loss == pytest.approx(30 * 0.25 / 36, abs=1e-15)

    def test_perfect_limit(self):
        net = SimilarityNet([np.eye(2), np.eye(2), np.array([[-1e4], [-1e4]])],
                            [np.zeros(2), np.zeros(2), np.array([29.0])])
        q = np.array([[1.0, 1.0], [1.0, 1.0], [1.0, 1.0]])
        loss, _ = loss_intra(net, q, np.zeros(3, int))
        assert loss < 1e-12

    def test_insufficient_pairs(self):
        with pytest.raises(ValueError, match="at least 2"):
            loss_intra(zero_net(2, (2, 2)), np.ones((1, 2)), np.zeros(1, int))

    def test_gradient_seed31(self):
        (case,) = gradcheck_cases("intra", 1, seed=31)
        assert gradcheck_error("intra", *case) < 1e-4

    def test_gradient_many(self):
        errors = [gradcheck_error("intra", *c) for c in gradcheck_cases("intra", 20, seed=310)]
        assert max(errors) < 1e-4


class TestAdam:
    def test_zero_gradient_fixed_point(self, rng):
        net = perturbed_net(3, (4, 4), rng)
        before = net.copy()
        state = AdamState.for_net(net)
        adam_step(net, [np.zeros_like(p) for p in net.params()], state)
        assert net.equals(before) and state.t == 1

    def test_first_step_moves_by_learning_rate(self, rng):
        net = perturbed_net(3, (4, 4), rng)
        before = [p.copy() for p in net.params()]
        grads = [rng.normal(size=p.shape) for p in net.params()]
        adam_step(net, grads, AdamState.for_net(net, learning_rate=1e-3))
        for p0, p1, g in zip(before, net.params(), grads):
            np.testing.assert_allclose(p0 - p1, 1e-3 * np.sign(g), rtol=1e-4)

    def test_quadratic_monotone_decrease(self):
        net = SimilarityNet([np.ones((2, 3)), np.ones((3, 2)), np.ones((2, 1))], [np.ones(3), np.ones(2), np.ones(1)])
        state = AdamState.for_net(net, learning_rate=1e-3)
        trace = []
        for _ in range(100):
            params = net.params()
            trace.append(sum(float(np.sum(p**2)) for p in params))
            adam_step(net, [2 * p for p in params], state)
        assert all(b < a for a, b in zip(trace, trace[1:]))
        assert state.t == 100

    def test_shape_mismatch(self, rng):
        net = perturbed_net(3, (4, 4), rng)
        grads = [np.zeros_like(p) for p in net.params()]
        grads[0] = np.zeros((2, 2))
        with pytest.raises(ShapeError):
            adam_step(net, grads, AdamState.for_net(net))


class TestCheckpoint:
    def test_round_trip_bit_identical(self, tmp_path, rng):
        net = perturbed_net(5, (7, 3), rng)
        save_checkpoint(net, tmp_path / "n.json")
        back = load_checkpoint(tmp_path / "n.json")
        assert back.equals(net)
        x = np.abs(rng.normal(size=(100, 5)))
        assert forward(back, x).tobytes() == forward(net, x).tobytes()

    def test_schema(self, tmp_path, rng):
        save_checkpoint(perturbed_net(5, (7, 3), rng), tmp_path / "n.json")
        raw = json.loads((tmp_path / "n.json").read_text())
        assert raw["input_dim"] == 5 and raw["hidden_dims"] == [7, 3]
        assert [len(layer["w"]) for layer in raw["layers"]] == [5, 7, 3]

    def test_inconsistent_rows(self, tmp_path, rng):
        raw = json.loads(json.dumps(
            {"input_dim": 4, "hidden_dims": [3, 2],
             "layers": [{"w": np.ones((4, 3)).tolist(), "b": [0, 0, 0]},
                        {"w": np.ones((3, 2)).tolist(), "b": [0, 0]},
                        {"w": np.ones((2, 1)).tolist(), "b": [0]}]}))
        raw["layers"][0]["w"] = np.ones((5, 3)).tolist()
        (tmp_path / "n.json").write_text(json.dumps(raw))
        with pytest.raises(ShapeError):
            load_checkpoint(tmp_path / "n.json")

    def test_truncated(self, tmp_path, rng):
        save_checkpoint(perturbed_net(3, (2, 2), rng), tmp_path / "n.json")
        text = (tmp_path / "n.json").read_text()
        (tmp_path / "n.json").write_text(text[: len(text) // 2])
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path / "n.json")


def test_score_independent_of_batch_position(rng):
    net = perturbed_net(16, (64, 64), rng)
    x = np.abs(rng.normal(size=(500, 16)))
    batch = forward(net, x)
    single = np.array([forward(net, row) for row in x])
    assert batch.tobytes() == single.tobytes()
    assert forward(net, x[::-1]).tobytes() == batch[::-1].tobytes()
