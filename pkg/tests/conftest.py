import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent))

from polyscribe.estimators import EstimatorParams
from polyscribe.transducer import SequencePair, TransducerParams


def random_estimator(rng, num_visible, num_hidden, scale=1.0):
    return EstimatorParams(
        visible_bias=scale * rng.standard_normal(num_visible),
        hidden_bias=scale * rng.standard_normal(num_hidden),
        weights=scale * rng.standard_normal((num_hidden, num_visible)),
    )


def random_transducer(
    rng,
    num_outputs=3,
    num_inputs=2,
    num_hidden=3,
    num_rec=2,
    scale=0.7,
    zero_weights=False,
    smoothing=True,
):
    n, d, h, r = num_outputs, num_inputs, num_hidden, num_rec
    estimator = random_estimator(rng, n, h, scale=scale)
    if zero_weights:
        estimator = EstimatorParams(
            visible_bias=estimator.visible_bias,
            hidden_bias=estimator.hidden_bias,
            weights=np.zeros((h, n)),
        )
    out_to_rec = scale * rng.standard_normal((r, n))
    if not smoothing:
        out_to_rec = np.zeros((r, n))
    return TransducerParams(
        estimator=estimator,
        rec_to_hidden=scale * rng.standard_normal((h, r)),
        in_to_hidden=scale * rng.standard_normal((h, d)),
        rec_to_visible=scale * rng.standard_normal((n, r)),
        in_to_visible=scale * rng.standard_normal((n, d)),
        out_to_rec=out_to_rec,
        rec_to_rec=scale * rng.standard_normal((r, r)),
        in_to_rec=scale * rng.standard_normal((r, d)),
        rec_bias=scale * rng.standard_normal(r),
    )


def random_pair(rng, length, num_outputs, num_inputs):
    return SequencePair(
        inputs=rng.standard_normal((length, num_inputs)),
        targets=(rng.random((length, num_outputs)) < 0.5).astype(float),
    )
