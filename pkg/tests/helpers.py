"""Random problem generators shared by the test modules."""

import numpy as np

from varmatch.dynamics import (
    ActionModel,
    NormalizedState,
    PushforwardFullState,
    PushforwardReducedState,
)
from varmatch.varifold import DiscreteVarifold

MODELS = [
    ActionModel(a, t) for a in ("normalized", "pushforward") for t in ("tangent", "normal")
]


def unit_rows(rng, P, n):
    d = rng.normal(size=(P, n))
    return d / np.linalg.norm(d, axis=1)[:, None]


def random_varifold(rng, P, n, spread=1.0):
    return DiscreteVarifold(
        spread * rng.normal(size=(P, n)), unit_rows(rng, P, n), rng.uniform(0.5, 1.5, P)
    )


def random_rotation(rng, n):
    q, r = np.linalg.qr(rng.normal(size=(n, n)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def random_state(rng, kind, P, n, momentum=1.0, spread=1.0):
    x = spread * rng.normal(size=(P, n))
    d = unit_rows(rng, P, n)
    r = rng.uniform(0.5, 1.5, P)
    p1 = momentum * rng.uniform(-1, 1, (P, n))
    p2 = momentum * rng.uniform(-1, 1, (P, n))
    if kind == "normalized":
        return NormalizedState(x, d, p1, p2, r)
    if kind == "reduced":
        return PushforwardReducedState(x, r[:, None] * d, p1, p2)
    p3 = np.sum(p2 * d, axis=1) / r
    return PushforwardFullState(x, d, r, p1, p2, p3)
