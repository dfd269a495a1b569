"""Learned comparator: a two-hidden-layer ReLU MLP with a sigmoid output.

The same architecture serves as the query-to-prototype classifier and as
the query-to-query relation module. Inputs are element-wise absolute
differences of two embeddings. Gradients are derived by hand for this
fixed architecture; there is no autodiff.

Weight matrices are stored ``(fan_in, fan_out)`` so a layer computes
``x @ w + b``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

# sigmoid(+-30) is still strictly inside (0, 1) in float64
LOGIT_CLAMP = 30.0


class ShapeError(ValueError):
    pass


class CheckpointError(ValueError):
    pass


@dataclass
class SimilarityNet:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        self.weights = [np.asarray(w, dtype=np.float64) for w in self.weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in self.biases]
        if len(self.weights) != 3 or len(self.biases) != 3:
            raise ShapeError("expected exactly three layers (D -> H1 -> H2 -> 1)")
        fan_in = self.weights[0].shape[0] if self.weights[0].ndim == 2 else None
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.ndim != 1:
                raise ShapeError(f"layer {k}: weight must be 2-D and bias 1-D")
            if w.shape[0] != fan_in:
                raise ShapeError(
                    f"layer {k}: weight has {w.shape[0]} rows, previous layer gives {fan_in}"
                )
            if b.shape[0] != w.shape[1]:
                raise ShapeError(f"layer {k}: bias length {b.shape[0]} != {w.shape[1]} units")
            fan_in = w.shape[1]
        if fan_in != 1:
            raise ShapeError("output layer must have a single unit")

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def hidden_dims(self) -> list[int]:
        return [self.weights[0].shape[1], self.weights[1].shape[1]]

    def params(self) -> list[np.ndarray]:
        """Parameters in canonical order ``w0, b0, w1, b1, w2, b2``."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def copy(self) -> "SimilarityNet":
        return SimilarityNet([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def equals(self, other: "SimilarityNet") -> bool:
        """Bit-exact parameter equality."""
        a, b = self.params(), other.params()
        return len(a) == len(b) and all(
            x.shape == y.shape and x.tobytes() == y.tobytes() for x, y in zip(a, b)
        )

    def __call__(self, diffs):
        return forward(self, diffs)


def init_net(input_dim: int, hidden_dims=(64, 64), seed=None) -> SimilarityNet:
    """He-uniform weights, zero biases."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    sizes = [input_dim, *hidden_dims, 1]
    if len(sizes) != 4 or min(sizes) < 1:
        raise ShapeError("need input_dim >= 1 and two positive hidden widths")
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return SimilarityNet(weights, biases)


def zero_net(input_dim: int, hidden_dims=(64, 64)) -> SimilarityNet:
    sizes = [input_dim, *hidden_dims, 1]
    return SimilarityNet(
        [np.zeros((a, b)) for a, b in zip(sizes[:-1], sizes[1:])],
        [np.zeros(b) for b in sizes[1:]],
    )


def sigmoid(z):
    z = np.clip(z, -LOGIT_CLAMP, LOGIT_CLAMP)
    return 1.0 / (1.0 + np.exp(-z))


def _check_input(net, x):
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != net.input_dim or x.ndim not in (1, 2):
        raise ShapeError(f"input has shape {x.shape}, net expects (..., {net.input_dim})")
    return x


def _dense(x, w, b):
    # einsum evaluates every row with the same loop, so a score never depends
    # on its position in the batch (BLAS gemm does not guarantee that)
    return np.einsum("...i,ij->...j", x, w) + b


def _forward_cache(net, x):
    w0, w1, w2 = net.weights
    b0, b1, b2 = net.biases
    z1 = _dense(x, w0, b0)
    a1 = np.maximum(z1, 0.0)
    z2 = _dense(a1, w1, b1)
    a2 = np.maximum(z2, 0.0)
    logit = _dense(a2, w2, b2)[..., 0]
    return z1, a1, z2, a2, logit


def forward(net: SimilarityNet, diffs) -> np.ndarray | float:
    """Similarity score in (0, 1) for one difference vector or a batch.

    Args:
        diffs: ``(D,)`` or ``(B, D)`` array, normally ``|a - b|``.

    Returns:
        A float for a single vector, otherwise a ``(B,)`` array.
    """
    x = _check_input(net, diffs)
    score = sigmoid(_forward_cache(net, x)[-1])
    return float(score) if x.ndim == 1 else score


def backward(net: SimilarityNet, x: np.ndarray, dscore: np.ndarray) -> list[np.ndarray]:
    """Gradients of ``sum(dscore * forward(net, x))`` w.r.t. the parameters.

    Returned in the order of :meth:`SimilarityNet.params`.
    """
    w0, w1, w2 = net.weights
    z1, a1, z2, a2, logit = _forward_cache(net, x)
    s = sigmoid(logit)
    inside = np.abs(logit) < LOGIT_CLAMP
    dlogit = (dscore * s * (1.0 - s) * inside)[:, None]  # (B, 1)

    gw2 = a2.T @ dlogit
    gb2 = dlogit.sum(axis=0)
    dz2 = (dlogit @ w2.T) * (z2 > 0)
    gw1 = a1.T @ dz2
    gb1 = dz2.sum(axis=0)
    dz1 = (dz2 @ w1.T) * (z1 > 0)
    gw0 = x.T @ dz1
    gb0 = dz1.sum(axis=0)
    return [gw0, gb0, gw1, gb1, gw2, gb2]


def prototype_diffs(queries: np.ndarray, prototypes: np.ndarray) -> np.ndarray:
    """``|q_i - p_n|`` laid out as a ``(Q, N, D)`` array."""
    return np.abs(queries[:, None, :] - prototypes[None, :, :])


def loss_inter(
    classifier: SimilarityNet,
    queries: np.ndarray,
    query_labels: np.ndarray,
    prototypes: np.ndarray,
) -> tuple[float, list[np.ndarray]]:
    """Mean squared error of query-to-prototype scores against one-hot targets.

    The sum over all (query, class) terms is divided by the number of
    queries, so a zero network on a 5-way task gives 1.25.
    """
    queries = np.asarray(queries, dtype=np.float64)
    prototypes = np.asarray(prototypes, dtype=np.float64)
    query_labels = np.asarray(query_labels)
    if queries.ndim != 2 or prototypes.ndim != 2 or queries.shape[1] != prototypes.shape[1]:
        raise ShapeError("queries and prototypes must be (Q, D) and (N, D)")
    if query_labels.shape != (queries.shape[0],):
        raise ShapeError("need one label per query")
    if query_labels.min() < 0 or query_labels.max() >= prototypes.shape[0]:
        raise ShapeError("query label outside prototype range")
    q, n = queries.shape[0], prototypes.shape[0]
    x = _check_input(classifier, prototype_diffs(queries, prototypes).reshape(q * n, -1))
    target = np.zeros((q, n))
    target[np.arange(q), query_labels] = 1.0
    target = target.ravel()

    s = forward(classifier, x)
    resid = s - target
    loss = float(np.sum(resid**2) / q)
    grads = backward(classifier, x, 2.0 * resid / q)
    return loss, grads


def loss_intra(
    relation: SimilarityNet,
    queries: np.ndarray,
    query_labels: np.ndarray,
) -> tuple[float, list[np.ndarray]]:
    """Pairwise relation MSE over ordered query pairs ``i != j``.

    Same-label pairs target 1, others 0. The sum is divided by ``Q**2``
    (not by the ``Q*(Q-1)`` pair count).
    """
    queries = np.asarray(queries, dtype=np.float64)
    query_labels = np.asarray(query_labels)
    if queries.ndim != 2 or query_labels.shape != (queries.shape[0],):
        raise ShapeError("queries must be (Q, D) with one label per query")
    q = queries.shape[0]
    if q < 2:
        raise ValueError("loss_intra needs at least 2 query samples")
    # each unordered pair stands for (i, j) and (j, i), which see identical input
    iu, ju = np.triu_indices(q, k=1)
    x = _check_input(relation, np.abs(queries[iu] - queries[ju]))
    target = (query_labels[iu] == query_labels[ju]).astype(np.float64)

    r = forward(relation, x)
    resid = r - target
    loss = float(2.0 * np.sum(resid**2) / q**2)
    grads = backward(relation, x, 4.0 * resid / q**2)
    return loss, grads


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_net(cls, net: SimilarityNet, learning_rate: float = 1e-3, **kw) -> "AdamState":
        params = net.params()
        return cls(
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
            learning_rate=learning_rate,
            **kw,
        )


def adam_step(net: SimilarityNet, grads, state: AdamState):
    """Apply one bias-corrected Adam update in place; returns ``(net, state)``."""
    params = net.params()
    if len(grads) != len(params) or len(state.m) != len(params):
        raise ShapeError("gradient/state count does not match net parameters")
    for p, g, m in zip(params, grads, state.m):
        if p.shape != np.shape(g) or p.shape != m.shape:
            raise ShapeError(f"shape mismatch: param {p.shape}, grad {np.shape(g)}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * np.square(g)
        p -= state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return net, state


def net_to_dict(net: SimilarityNet) -> dict:
    return {
        "input_dim": net.input_dim,
        "hidden_dims": net.hidden_dims,
        "layers": [{"w": w.tolist(), "b": b.tolist()} for w, b in zip(net.weights, net.biases)],
    }


def net_from_dict(raw: dict) -> SimilarityNet:
    try:
        layers = raw["layers"]
        weights = [np.array(layer["w"], dtype=np.float64) for layer in layers]
        biases = [np.array(layer["b"], dtype=np.float64) for layer in layers]
        input_dim = int(raw["input_dim"])
        hidden = [int(h) for h in raw["hidden_dims"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"malformed checkpoint: {exc}") from None
    net = SimilarityNet(weights, biases)
    if net.input_dim != input_dim or net.hidden_dims != hidden:
        raise ShapeError(
            f"layer shapes {net.input_dim}->{net.hidden_dims} disagree with "
            f"declared {input_dim}->{hidden}"
        )
    return net


def save_checkpoint(net: SimilarityNet, path) -> None:
    with open(path, "w") as fh:
        json.dump(net_to_dict(net), fh)
        fh.write("\n")


def load_checkpoint(path) -> SimilarityNet:
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise CheckpointError(f"{path}: {exc}") from None
    if not isinstance(raw, dict):
        raise CheckpointError(f"{path}: expected a JSON object")
    return net_from_dict(raw)
