"""Single-frame distribution estimators over binary vectors.

Two estimators share one parameter layout (visible bias, hidden bias,
hidden-by-visible weight matrix): a restricted Boltzmann machine scored
through its free energy and trained with one-step contrastive
divergence, and a neural autoregressive estimator with tractable exact
likelihood, exact gradients and ancestral sampling.  All arithmetic is
float64 and likelihoods are accumulated in log space.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

BRUTE_FORCE_MAX_UNITS = 20


class DimensionError(ValueError):
    """Argument shapes disagree with the parameter dimensions."""


def sigmoid(x):
    """Numerically stable logistic function, elementwise."""
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=float)))


def softplus(x):
    """log(1 + exp(x)) without overflow for large positive x."""
    return np.logaddexp(0.0, x)


def bernoulli_log_likelihood(activations, v) -> float:
    """Log-likelihood of binary v under independent logistic units.

    Computed as -sum softplus(-a_j if v_j else a_j), which equals
    sum v_j log sigmoid(a_j) + (1 - v_j) log(1 - sigmoid(a_j)) without
    ever materialising probabilities that would round to 0 or 1.
    """
    a = np.asarray(activations, dtype=float)
    signs = np.where(np.asarray(v) > 0.5, -a, a)
    return float(-softplus(signs).sum())


@dataclass(eq=False)
class EstimatorParams:
    """Biases and weights of one frame-level estimator.

    ``weights`` has one row per hidden unit and one column per visible
    unit; the bias vectors fix those two dimensions.
    """

    visible_bias: np.ndarray
    hidden_bias: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        vb = np.asarray(self.visible_bias, dtype=float)
        hb = np.asarray(self.hidden_bias, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if vb.ndim != 1 or hb.ndim != 1 or w.ndim != 2:
            raise DimensionError("bias fields must be vectors and weights a matrix")
        if vb.size < 1 or hb.size < 1:
            raise DimensionError("estimator needs at least one visible and one hidden unit")
        if w.shape != (hb.size, vb.size):
            raise DimensionError(
                f"weights shape {w.shape} inconsistent with H={hb.size}, N={vb.size}"
            )
        for name, arr in (("visible_bias", vb), ("hidden_bias", hb), ("weights", w)):
            if not np.isfinite(arr).all():
                raise ValueError(f"{name} contains non-finite entries")
        self.visible_bias = vb
        self.hidden_bias = hb
        self.weights = w

    @property
    def num_visible(self) -> int:
        return self.visible_bias.size

    @property
    def num_hidden(self) -> int:
        return self.hidden_bias.size


@dataclass(eq=False)
class EstimatorGradient:
    """Gradient with respect to each field of EstimatorParams."""

    visible_bias: np.ndarray
    hidden_bias: np.ndarray
    weights: np.ndarray


def init_estimator_params(num_visible: int, num_hidden: int, rng) -> EstimatorParams:
    """Zero biases, weights uniform in +-1/sqrt(max(N, H))."""
    scale = 1.0 / np.sqrt(max(num_visible, num_hidden))
    weights = rng.uniform(-scale, scale, size=(num_hidden, num_visible))
    return EstimatorParams(np.zeros(num_visible), np.zeros(num_hidden), weights)


def _as_binary(v, n: int, name: str = "v") -> np.ndarray:
    arr = np.asarray(v, dtype=float)
    if arr.ndim != 1 or arr.size != n:
        raise DimensionError(f"{name} must be a length-{n} vector, got shape {arr.shape}")
    if not np.all((arr == 0.0) | (arr == 1.0)):
        raise ValueError(f"{name} must be binary with entries in {{0, 1}}")
    return arr


def all_binary_vectors(n: int) -> np.ndarray:
    """All 2**n binary vectors as float rows, in binary-counter order."""
    if n < 1:
        raise ValueError("need at least one unit")
    idx = np.arange(2**n, dtype=np.int64)
    return ((idx[:, None] >> np.arange(n - 1, -1, -1)) & 1).astype(float)


def rbm_free_energy(params: EstimatorParams, v) -> float:
    """Free energy of a visible vector with the hidden layer summed out.

    F(v) = -visible_bias . v - sum_i softplus((hidden_bias + W v)_i),
    so that the marginal satisfies P(v) = exp(-F(v)) / Z.
    """
    v = _as_binary(v, params.num_visible)
    acts = params.hidden_bias + params.weights @ v
    return float(-(params.visible_bias @ v) - softplus(acts).sum())


def _rbm_log_partition(params: EstimatorParams) -> float:
    n = params.num_visible
    chunk = 1 << 14
    partials: list[tuple[float, float]] = []
    shifts = np.arange(n - 1, -1, -1)
    for start in range(0, 2**n, chunk):
        idx = np.arange(start, min(start + chunk, 2**n), dtype=np.int64)
        v = ((idx[:, None] >> shifts) & 1).astype(float)
        neg_f = v @ params.visible_bias + softplus(v @ params.weights.T + params.hidden_bias).sum(axis=1)
        m = float(neg_f.max())
        partials.append((m, float(np.exp(neg_f - m).sum())))
    m0 = max(m for m, _ in partials)
    return m0 + float(np.log(sum(s * np.exp(m - m0) for m, s in partials)))


def rbm_exact_log_likelihood(
    params: EstimatorParams, v, max_units: int = BRUTE_FORCE_MAX_UNITS
) -> float:
    """log P(v) by brute-force enumeration of the partition function.

    Only feasible for small models; refuses to enumerate more than
    ``max_units`` visible units and calls that case intractable.
    """
    if params.num_visible > max_units:
        raise ValueError(
            f"exact likelihood is intractable for N={params.num_visible} "
            f"visible units (enumeration bound {max_units})"
        )
    v = _as_binary(v, params.num_visible)
    return -rbm_free_energy(params, v) - _rbm_log_partition(params)


def rbm_cd1_gradient(params: EstimatorParams, v, rng) -> EstimatorGradient:
    """One-step contrastive divergence estimate of the NLL gradient.

    Samples h ~ P(h|v) from one uniform block of size H, then the
    reconstruction v* ~ P(v|h) from one uniform block of size N (this
    draw order is a stable contract), and returns
    dF(v)/dtheta - dF(v*)/dtheta.  When v* == v the result is exactly
    zero.
    """
    v = _as_binary(v, params.num_visible)
    h_prob = sigmoid(params.hidden_bias + params.weights @ v)
    h = (rng.random(params.num_hidden) < h_prob).astype(float)
    v_prob = sigmoid(params.visible_bias + params.weights.T @ h)
    v_star = (rng.random(params.num_visible) < v_prob).astype(float)
    h_prob_star = sigmoid(params.hidden_bias + params.weights @ v_star)
    return EstimatorGradient(
        visible_bias=v_star - v,
        hidden_bias=h_prob_star - h_prob,
        weights=np.outer(h_prob_star, v_star) - np.outer(h_prob, v),
    )


def _nade_forward(params: EstimatorParams, v: np.ndarray):
    """Per-position hidden activations (columns) and output pre-activations.

    Column j of the hidden matrix is sigmoid(hidden_bias + W[:, <j] v_<j]);
    the empty prefix at j = 0 gives sigmoid(hidden_bias).
    """
    w = params.weights
    contrib = w * v
    prefix = np.empty_like(w)
    prefix[:, 0] = 0.0
    if w.shape[1] > 1:
        np.cumsum(contrib[:, :-1], axis=1, out=prefix[:, 1:])
    h = sigmoid(params.hidden_bias[:, None] + prefix)
    a = np.einsum("ij,ij->j", w, h) + params.visible_bias
    return h, a


def nade_conditionals(params: EstimatorParams, v) -> np.ndarray:
    """p_j = P(v_j = 1 | v_<j) for every position j."""
    v = _as_binary(v, params.num_visible)
    _, a = _nade_forward(params, v)
    return sigmoid(a)


def nade_log_likelihood(params: EstimatorParams, v) -> float:
    """Exact log P(v) under the autoregressive factorisation."""
    v = _as_binary(v, params.num_visible)
    _, a = _nade_forward(params, v)
    return bernoulli_log_likelihood(a, v)


def nade_evaluate(params: EstimatorParams, v) -> tuple[float, EstimatorGradient]:
    """Log-likelihood and exact NLL gradient from a single forward pass.

    The weight gradient for column j needs the sum over later columns
    k > j of the hidden back-signals; one reversed cumulative sum over
    columns yields every suffix, keeping the whole pass O(N H).
    """
    v = _as_binary(v, params.num_visible)
    h, a = _nade_forward(params, v)
    ll = bernoulli_log_likelihood(a, v)
    p = sigmoid(a)
    dbv = p - v
    back = params.weights * (h * (1.0 - h)) * dbv
    g_bh = back.sum(axis=1)
    suffix = np.flip(np.cumsum(np.flip(back, axis=1), axis=1), axis=1) - back
    g_w = dbv * h + v * suffix
    return ll, EstimatorGradient(dbv, g_bh, g_w)


def nade_gradient(params: EstimatorParams, v) -> EstimatorGradient:
    """Exact gradient of -log P(v) with respect to all parameters."""
    return nade_evaluate(params, v)[1]


def nade_sample_batch(params: EstimatorParams, count: int, rng):
    """Ancestral samples and their log-likelihoods, one row per draw.

    Bit j of every row is drawn from its conditional given the bits
    already fixed in that row; each position consumes exactly one
    uniform block of size ``count`` from the generator.
    """
    if count < 1:
        raise ValueError("count must be positive")
    n = params.num_visible
    acts = np.tile(params.hidden_bias, (count, 1))
    bits = np.empty((count, n))
    logp = np.zeros(count)
    for j in range(n):
        h = sigmoid(acts)
        a = h @ params.weights[:, j] + params.visible_bias[j]
        drawn = rng.random(count) < sigmoid(a)
        logp -= softplus(np.where(drawn, -a, a))
        bits[:, j] = drawn
        acts += np.outer(drawn, params.weights[:, j])
    return bits, logp


def nade_sample(params: EstimatorParams, rng) -> np.ndarray:
    """One ancestral sample from the autoregressive estimator."""
    bits, _ = nade_sample_batch(params, 1, rng)
    return bits[0]
