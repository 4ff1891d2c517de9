"""Input/output recurrent sequence model over binary frames.

A recurrent hidden layer reads the input features and the previously
emitted output frames and turns them into per-step bias offsets for the
frame-level estimator.  With nonzero estimator weights every step emits
through the autoregressive estimator; with the estimator weights pinned
at zero the per-step distribution factorises and the model reduces to a
plain recurrent network trained with cross-entropy.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from .estimators import (
    DimensionError,
    EstimatorGradient,
    EstimatorParams,
    bernoulli_log_likelihood,
    init_estimator_params,
    nade_evaluate,
    nade_log_likelihood,
    nade_sample,
    sigmoid,
)


class TrainingDivergedError(RuntimeError):
    """Raised when the training objective stops being finite."""


@dataclass(eq=False)
class TransducerParams:
    """Frame estimator plus the recurrent conditioning machinery.

    Naming convention: ``rec`` is the recurrent hidden layer, ``in`` the
    observed input features, ``out`` the emitted binary frame.  Matrix
    ``a_to_b`` maps activity of a into the pre-activation of b.
    """

    estimator: EstimatorParams
    rec_to_hidden: np.ndarray  # (H, R) recurrent state -> hidden bias offset
    in_to_hidden: np.ndarray  # (H, D) input features -> hidden bias offset
    rec_to_visible: np.ndarray  # (N, R) recurrent state -> visible bias offset
    in_to_visible: np.ndarray  # (N, D) input features -> visible bias offset
    out_to_rec: np.ndarray  # (R, N) previous output frame -> recurrent state
    rec_to_rec: np.ndarray  # (R, R)
    in_to_rec: np.ndarray  # (R, D)
    rec_bias: np.ndarray  # (R,)

    def __post_init__(self):
        n, h = self.estimator.num_visible, self.estimator.num_hidden
        arrays = {}
        for name in (
            "rec_to_hidden",
            "in_to_hidden",
            "rec_to_visible",
            "in_to_visible",
            "out_to_rec",
            "rec_to_rec",
            "in_to_rec",
            "rec_bias",
        ):
            arr = np.asarray(getattr(self, name), dtype=float)
            if not np.isfinite(arr).all():
                raise ValueError(f"{name} contains non-finite entries")
            arrays[name] = arr
        r = arrays["rec_bias"].size
        d = arrays["in_to_rec"].shape[1] if arrays["in_to_rec"].ndim == 2 else -1
        expected = {
            "rec_to_hidden": (h, r),
            "in_to_hidden": (h, d),
            "rec_to_visible": (n, r),
            "in_to_visible": (n, d),
            "out_to_rec": (r, n),
            "rec_to_rec": (r, r),
            "in_to_rec": (r, d),
            "rec_bias": (r,),
        }
        for name, shape in expected.items():
            if arrays[name].shape != shape:
                raise DimensionError(
                    f"{name} has shape {arrays[name].shape}, expected {shape}"
                )
        for name, arr in arrays.items():
            setattr(self, name, arr)

    @property
    def num_outputs(self) -> int:
        return self.estimator.num_visible

    @property
    def num_hidden(self) -> int:
        return self.estimator.num_hidden

    @property
    def num_rec(self) -> int:
        return self.rec_bias.size

    @property
    def num_inputs(self) -> int:
        return self.in_to_rec.shape[1]

    @property
    def independent_outputs(self) -> bool:
        """True when the estimator weights are identically zero."""
        return not self.estimator.weights.any()


@dataclass(eq=False)
class TransducerGradient:
    """Gradient with respect to every TransducerParams field."""

    estimator: EstimatorGradient
    rec_to_hidden: np.ndarray
    in_to_hidden: np.ndarray
    rec_to_visible: np.ndarray
    in_to_visible: np.ndarray
    out_to_rec: np.ndarray
    rec_to_rec: np.ndarray
    in_to_rec: np.ndarray
    rec_bias: np.ndarray


@dataclass(eq=False)
class SequencePair:
    """Aligned input features (T, D) and optional binary targets (T, N)."""

    inputs: np.ndarray
    targets: np.ndarray | None = None

    def __post_init__(self):
        x = np.asarray(self.inputs, dtype=float)
        if x.ndim != 2 or x.shape[0] < 1:
            raise DimensionError("inputs must be a (T, D) array with T >= 1")
        if not np.isfinite(x).all():
            raise ValueError("inputs contain non-finite entries")
        self.inputs = x
        if self.targets is not None:
            v = np.asarray(self.targets, dtype=float)
            if v.ndim != 2 or v.shape[0] != x.shape[0]:
                raise DimensionError(
                    f"targets must be (T, N) with T={x.shape[0]}, got {v.shape}"
                )
            if not np.all((v == 0.0) | (v == 1.0)):
                raise ValueError("targets must be binary")
            self.targets = v

    @property
    def length(self) -> int:
        return self.inputs.shape[0]


@dataclass(eq=False)
class RecurrentState:
    """Recurrent activation vector together with its time index."""

    hidden: np.ndarray
    t: int = 0


@dataclass
class TrainConfig:
    learning_rate: float
    epochs: int
    alpha: float = 0.0  # penalty on the input-to-bias routes
    beta: float = 0.0  # penalty on the state-to-bias routes
    teacher_noise: float = 0.0  # per-bit flip probability on fed-back frames
    seed: int = 0
    gradient_clip: float | None = None
    freeze_estimator_weights: bool = False

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be nonnegative")
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("penalty coefficients must be nonnegative")
        if not 0.0 <= self.teacher_noise <= 0.5:
            raise ValueError("teacher_noise must lie in [0, 0.5]")
        if self.gradient_clip is not None and self.gradient_clip <= 0:
            raise ValueError("gradient_clip must be positive when set")


def init_transducer_params(
    num_outputs: int,
    num_inputs: int,
    num_hidden: int,
    num_rec: int,
    seed: int = 0,
    model_kind: str = "io-rnn-nade",
) -> TransducerParams:
    """Fresh parameters: biases zero, each matrix uniform in
    +-1/sqrt(max of its two dimensions).  ``model_kind`` "io-rnn" pins the
    estimator weights at zero so the model stays in factorised form.
    """
    if model_kind not in ("io-rnn-nade", "io-rnn"):
        raise ValueError(f"unknown model_kind {model_kind!r}")
    rng = np.random.default_rng(seed)
    est = init_estimator_params(num_outputs, num_hidden, rng)
    if model_kind == "io-rnn":
        est = EstimatorParams(
            est.visible_bias, est.hidden_bias, np.zeros_like(est.weights)
        )

    def mat(rows, cols):
        scale = 1.0 / np.sqrt(max(rows, cols))
        return rng.uniform(-scale, scale, size=(rows, cols))

    return TransducerParams(
        estimator=est,
        rec_to_hidden=mat(num_hidden, num_rec),
        in_to_hidden=mat(num_hidden, num_inputs),
        rec_to_visible=mat(num_outputs, num_rec),
        in_to_visible=mat(num_outputs, num_inputs),
        out_to_rec=mat(num_rec, num_outputs),
        rec_to_rec=mat(num_rec, num_rec),
        in_to_rec=mat(num_rec, num_inputs),
        rec_bias=np.zeros(num_rec),
    )


def initial_state(params: TransducerParams) -> RecurrentState:
    """All-zero recurrent state at t = 0."""
    return RecurrentState(np.zeros(params.num_rec), 0)


def conditional_biases(
    params: TransducerParams, state: RecurrentState, x_t
) -> tuple[np.ndarray, np.ndarray]:
    """Per-step visible and hidden biases given state and input frame."""
    x_t = _check_input_frame(params, x_t)
    est = params.estimator
    bv = est.visible_bias + params.rec_to_visible @ state.hidden + params.in_to_visible @ x_t
    bh = est.hidden_bias + params.rec_to_hidden @ state.hidden + params.in_to_hidden @ x_t
    return bv, bh


def rnn_step(
    params: TransducerParams, state: RecurrentState, x_t, v_t
) -> RecurrentState:
    """Advance the recurrent state after emitting frame v_t."""
    x_t = _check_input_frame(params, x_t)
    v_t = np.asarray(v_t, dtype=float)
    if v_t.shape != (params.num_outputs,):
        raise DimensionError(
            f"v_t must have shape ({params.num_outputs},), got {v_t.shape}"
        )
    pre = (
        params.out_to_rec @ v_t
        + params.rec_to_rec @ state.hidden
        + params.in_to_rec @ x_t
        + params.rec_bias
    )
    return RecurrentState(sigmoid(pre), state.t + 1)


def _check_input_frame(params: TransducerParams, x_t) -> np.ndarray:
    x_t = np.asarray(x_t, dtype=float)
    if x_t.shape != (params.num_inputs,):
        raise DimensionError(
            f"input frame must have shape ({params.num_inputs},), got {x_t.shape}"
        )
    return x_t


def _step_estimator(params: TransducerParams, hidden, x_t) -> EstimatorParams:
    est = params.estimator
    bv = est.visible_bias + params.rec_to_visible @ hidden + params.in_to_visible @ x_t
    bh = est.hidden_bias + params.rec_to_hidden @ hidden + params.in_to_hidden @ x_t
    return EstimatorParams(bv, bh, est.weights)


def _require_targets(pair: SequencePair) -> np.ndarray:
    if pair.targets is None:
        raise ValueError("sequence pair has no targets")
    return pair.targets


def _check_pair(params: TransducerParams, pair: SequencePair):
    if pair.inputs.shape[1] != params.num_inputs:
        raise DimensionError(
            f"inputs have D={pair.inputs.shape[1]}, model expects {params.num_inputs}"
        )
    if pair.targets is not None and pair.targets.shape[1] != params.num_outputs:
        raise DimensionError(
            f"targets have N={pair.targets.shape[1]}, model expects {params.num_outputs}"
        )


def sequence_log_likelihood(params: TransducerParams, pair: SequencePair) -> float:
    """Teacher-forced log P(v_1..T | x_1..T), summed over steps."""
    _check_pair(params, pair)
    targets = _require_targets(pair)
    x = pair.inputs
    hidden = np.zeros(params.num_rec)
    total = 0.0
    for t in range(pair.length):
        est_t = _step_estimator(params, hidden, x[t])
        total += nade_log_likelihood(est_t, targets[t])
        hidden = _advance(params, hidden, x[t], targets[t])
    return total


def _advance(params: TransducerParams, hidden, x_t, v_t) -> np.ndarray:
    pre = (
        params.out_to_rec @ v_t
        + params.rec_to_rec @ hidden
        + params.in_to_rec @ x_t
        + params.rec_bias
    )
    return sigmoid(pre)


def sample_sequence(params: TransducerParams, inputs, rng) -> np.ndarray:
    """Ancestral target sample: each frame drawn from its conditional,
    then fed back through the recurrence."""
    x = np.asarray(inputs, dtype=float)
    if x.ndim != 2 or x.shape[1] != params.num_inputs:
        raise DimensionError("inputs must be (T, D) matching the model")
    hidden = np.zeros(params.num_rec)
    frames = np.empty((x.shape[0], params.num_outputs))
    for t in range(x.shape[0]):
        est_t = _step_estimator(params, hidden, x[t])
        frames[t] = nade_sample(est_t, rng)
        hidden = _advance(params, hidden, x[t], frames[t])
    return frames


def _penalty_value(params: TransducerParams, alpha: float, beta: float) -> float:
    val = 0.0
    if alpha:
        val += alpha * (
            float((params.in_to_visible**2).sum()) + float((params.in_to_hidden**2).sum())
        )
    if beta:
        val += beta * (
            float((params.rec_to_visible**2).sum())
            + float((params.rec_to_hidden**2).sum())
        )
    return val


def sequence_objective(
    params: TransducerParams, pair: SequencePair, alpha: float = 0.0, beta: float = 0.0
) -> float:
    """Mean per-step NLL plus the quadratic route penalties."""
    nll = -sequence_log_likelihood(params, pair) / pair.length
    return nll + _penalty_value(params, alpha, beta)


def _gradient_and_objective(
    params: TransducerParams, pair: SequencePair, cfg: TrainConfig, rng
) -> tuple[TransducerGradient, float]:
    """Exact gradient of the per-sequence objective, three sweeps:
    forward recurrence, per-step estimator gradients, backward chain.
    """
    _check_pair(params, pair)
    targets = _require_targets(pair)
    x = pair.inputs
    steps = pair.length
    n, hdim, rdim = params.num_outputs, params.num_hidden, params.num_rec
    est = params.estimator

    feed = targets
    if cfg.teacher_noise > 0.0:
        if rng is None:
            raise ValueError("teacher_noise requires a random generator")
        flips = rng.random(targets.shape) < cfg.teacher_noise
        feed = np.where(flips, 1.0 - targets, targets)

    states = np.zeros((steps + 1, rdim))
    bvs = np.empty((steps, n))
    bhs = np.empty((steps, hdim))
    for t in range(steps):
        bvs[t] = est.visible_bias + params.rec_to_visible @ states[t] + params.in_to_visible @ x[t]
        bhs[t] = est.hidden_bias + params.rec_to_hidden @ states[t] + params.in_to_hidden @ x[t]
        states[t + 1] = _advance(params, states[t], x[t], feed[t])

    scale = 1.0 / steps
    nll = 0.0
    gbv_steps = np.empty((steps, n))
    gbh_steps = np.empty((steps, hdim))
    g_weights = np.zeros_like(est.weights)
    for t in range(steps):
        ll, grad_t = nade_evaluate(EstimatorParams(bvs[t], bhs[t], est.weights), targets[t])
        nll -= ll
        gbv_steps[t] = grad_t.visible_bias
        gbh_steps[t] = grad_t.hidden_bias
        g_weights += grad_t.weights

    g_est = EstimatorGradient(
        visible_bias=scale * gbv_steps.sum(axis=0),
        hidden_bias=scale * gbh_steps.sum(axis=0),
        weights=scale * g_weights,
    )
    g_in_to_visible = scale * (gbv_steps.T @ x)
    g_in_to_hidden = scale * (gbh_steps.T @ x)
    g_rec_to_visible = scale * (gbv_steps.T @ states[:steps])
    g_rec_to_hidden = scale * (gbh_steps.T @ states[:steps])

    g_out_to_rec = np.zeros_like(params.out_to_rec)
    g_rec_to_rec = np.zeros_like(params.rec_to_rec)
    g_in_to_rec = np.zeros_like(params.in_to_rec)
    g_rec_bias = np.zeros_like(params.rec_bias)
    # states[k] influences the biases of step k and the next state; walk
    # backwards carrying the pre-activation signal of states[k + 1]
    e_next = np.zeros(rdim)
    for k in range(steps - 1, 0, -1):
        delta = (
            params.rec_to_hidden.T @ gbh_steps[k] + params.rec_to_visible.T @ gbv_steps[k]
        ) * scale + params.rec_to_rec.T @ e_next
        e = delta * states[k] * (1.0 - states[k])
        g_out_to_rec += np.outer(e, feed[k - 1])
        g_rec_to_rec += np.outer(e, states[k - 1])
        g_in_to_rec += np.outer(e, x[k - 1])
        g_rec_bias += e
        e_next = e

    obj = scale * nll
    if cfg.alpha:
        g_in_to_visible = g_in_to_visible + 2.0 * cfg.alpha * params.in_to_visible
        g_in_to_hidden = g_in_to_hidden + 2.0 * cfg.alpha * params.in_to_hidden
    if cfg.beta:
        g_rec_to_visible = g_rec_to_visible + 2.0 * cfg.beta * params.rec_to_visible
        g_rec_to_hidden = g_rec_to_hidden + 2.0 * cfg.beta * params.rec_to_hidden
    obj += _penalty_value(params, cfg.alpha, cfg.beta)

    grad = TransducerGradient(
        estimator=g_est,
        rec_to_hidden=g_rec_to_hidden,
        in_to_hidden=g_in_to_hidden,
        rec_to_visible=g_rec_to_visible,
        in_to_visible=g_in_to_visible,
        out_to_rec=g_out_to_rec,
        rec_to_rec=g_rec_to_rec,
        in_to_rec=g_in_to_rec,
        rec_bias=g_rec_bias,
    )
    return grad, obj


def sequence_gradient(
    params: TransducerParams, pair: SequencePair, cfg: TrainConfig, rng=None
) -> TransducerGradient:
    """Exact gradient of the per-sequence training objective.

    With cfg.teacher_noise > 0 the frames fed back into the recurrence
    have bits flipped using ``rng``; the likelihood itself is always
    evaluated on the clean targets.
    """
    if cfg.teacher_noise > 0.0 and rng is None:
        rng = np.random.default_rng(cfg.seed)
    return _gradient_and_objective(params, pair, cfg, rng)[0]


def cross_entropy_loss(params: TransducerParams, pair: SequencePair) -> float:
    """Mean per-step cross-entropy of the factorised (zero estimator
    weights) model; equals -sequence_log_likelihood / T in that regime."""
    if not params.independent_outputs:
        raise ValueError("cross-entropy reduction requires zero estimator weights")
    _check_pair(params, pair)
    targets = _require_targets(pair)
    x = pair.inputs
    hidden = np.zeros(params.num_rec)
    total = 0.0
    for t in range(pair.length):
        bv = params.estimator.visible_bias + params.rec_to_visible @ hidden + params.in_to_visible @ x[t]
        total += bernoulli_log_likelihood(bv, targets[t])
        hidden = _advance(params, hidden, x[t], targets[t])
    return -total / pair.length


_PARAM_FIELDS = (
    "rec_to_hidden",
    "in_to_hidden",
    "rec_to_visible",
    "in_to_visible",
    "out_to_rec",
    "rec_to_rec",
    "in_to_rec",
    "rec_bias",
)


def _param_arrays(params: TransducerParams) -> list[np.ndarray]:
    est = params.estimator
    return [est.visible_bias, est.hidden_bias, est.weights] + [
        getattr(params, name) for name in _PARAM_FIELDS
    ]


def _gradient_arrays(grad: TransducerGradient) -> list[np.ndarray]:
    est = grad.estimator
    return [est.visible_bias, est.hidden_bias, est.weights] + [
        getattr(grad, name) for name in _PARAM_FIELDS
    ]


def params_to_vector(params: TransducerParams) -> np.ndarray:
    return np.concatenate([a.ravel() for a in _param_arrays(params)])


def gradient_to_vector(grad: TransducerGradient) -> np.ndarray:
    return np.concatenate([a.ravel() for a in _gradient_arrays(grad)])


def params_from_vector(template: TransducerParams, vec: np.ndarray) -> TransducerParams:
    arrays = []
    offset = 0
    for ref in _param_arrays(template):
        arrays.append(vec[offset : offset + ref.size].reshape(ref.shape).copy())
        offset += ref.size
    if offset != vec.size:
        raise DimensionError(f"vector has {vec.size} entries, expected {offset}")
    est = EstimatorParams(arrays[0], arrays[1], arrays[2])
    rest = dict(zip(_PARAM_FIELDS, arrays[3:]))
    return TransducerParams(estimator=est, **rest)


def _copy_params(params: TransducerParams) -> TransducerParams:
    return copy.deepcopy(params)


def train(
    params: TransducerParams, corpus: list[SequencePair], cfg: TrainConfig
) -> tuple[TransducerParams, list[float]]:
    """Per-sequence stochastic gradient descent.

    Returns fresh parameters and the mean training objective per epoch
    (measured before each update).  Sequence order is reshuffled every
    epoch from cfg.seed, so a fixed seed gives a bit-identical
    parameter trajectory.
    """
    if not corpus:
        raise ValueError("empty corpus")
    for pair in corpus:
        _check_pair(params, pair)
        _require_targets(pair)
    params = _copy_params(params)
    arrays = _param_arrays(params)
    rng = np.random.default_rng(cfg.seed)
    history: list[float] = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(corpus))
        total = 0.0
        for idx in order:
            grad, obj = _gradient_and_objective(params, corpus[idx], cfg, rng)
            if not np.isfinite(obj):
                raise TrainingDivergedError(
                    f"non-finite objective {obj!r} at epoch {epoch + 1}, sequence {idx}"
                )
            g_arrays = _gradient_arrays(grad)
            if cfg.freeze_estimator_weights:
                g_arrays[2] = np.zeros_like(g_arrays[2])
            if cfg.gradient_clip is not None:
                norm = float(np.sqrt(sum(float((g * g).sum()) for g in g_arrays)))
                if norm > cfg.gradient_clip:
                    shrink = cfg.gradient_clip / norm
                    g_arrays = [g * shrink for g in g_arrays]
            for p_arr, g_arr in zip(arrays, g_arrays):
                p_arr -= cfg.learning_rate * g_arr
            total += obj
        history.append(total / len(corpus))
    return params, history


def grad_check(
    params: TransducerParams,
    pair: SequencePair,
    alpha: float = 0.0,
    beta: float = 0.0,
    step: float = 1e-5,
) -> float:
    """Max relative error between the analytic gradient and central
    finite differences of the objective, over every parameter entry."""
    cfg = TrainConfig(learning_rate=0.0, epochs=1, alpha=alpha, beta=beta)
    analytic = gradient_to_vector(sequence_gradient(params, pair, cfg))
    theta = params_to_vector(params)
    numeric = np.empty_like(theta)
    for i in range(theta.size):
        bumped = theta.copy()
        bumped[i] += step
        f_plus = sequence_objective(params_from_vector(params, bumped), pair, alpha, beta)
        bumped[i] -= 2.0 * step
        f_minus = sequence_objective(params_from_vector(params, bumped), pair, alpha, beta)
        numeric[i] = (f_plus - f_minus) / (2.0 * step)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float((np.abs(analytic - numeric) / denom).max())
