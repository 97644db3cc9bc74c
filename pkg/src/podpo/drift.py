"""Multi-temperature adaptive contrastive drifting vectors and their diagnostics.

For each batch item, G candidate points are pulled toward positive targets and
pushed away from negative targets. The coupling weights come from a dual
softmax (over targets and over candidates) of temperature-scaled negative
distances, and the per-temperature vectors are accumulated by plain summation.
A candidate never repels itself: when the negatives are the candidates
themselves, the diagonal distance is offset far beyond the scale pool cutoff.

No gradient flows through any of this; the trainer treats the field as a
frozen target.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .nn import ShapeError

DEFAULT_TEMPS = (0.02, 0.15, 2.0)

# Self-distances are pushed this far out; anything beyond the cutoff is
# excluded from the adaptive scale pool and carries ~zero softmax weight.
SELF_MASK_OFFSET = 1e6
MASKED_CUTOFF = 1e5
SCALE_FLOOR = 1e-3


@dataclass
class DriftInputs:
    """One contrastive configuration: candidates and their pos/neg targets.

    x: (B, G, D) candidates; y_pos: (B, N_pos, D); y_neg: (B, M_neg, D).
    Self-masking only applies when G == M_neg (negatives are the candidates).
    """

    x: np.ndarray
    y_pos: np.ndarray
    y_neg: np.ndarray
    temps: tuple[float, ...] = DEFAULT_TEMPS
    mask_self: bool = True


@dataclass
class DriftResult:
    """Drifting vectors plus everything needed for diagnostics."""

    v_total: np.ndarray                                  # (B, G, D)
    v_by_temp: dict[float, np.ndarray]                   # temp -> (B, G, D)
    w_pos_by_temp: dict[float, np.ndarray] = field(repr=False, default_factory=dict)
    w_neg_by_temp: dict[float, np.ndarray] = field(repr=False, default_factory=dict)
    scale: float = 1.0


@dataclass
class DriftDiagnostics:
    """Stability metrics of one configuration: per-temperature ESS/peak mass and RV."""

    temps: tuple[float, ...]
    ess_ratio: dict[float, float]
    max_p: dict[float, float]
    rv_by_temp: dict[float, float]
    rv_total: float


def softmax(z: np.ndarray, axis: int) -> np.ndarray:
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def pairwise_distances(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Euclidean distances, (B, G, D) x (B, N, D) -> (B, G, N)."""
    if x.ndim != 3 or y.ndim != 3:
        raise ShapeError(f"pairwise_distances: expected 3-d arrays, got {x.shape} and {y.shape}")
    if x.shape[0] != y.shape[0] or x.shape[2] != y.shape[2]:
        raise ShapeError(
            f"pairwise_distances: batch/feature dims must agree, got {x.shape} and {y.shape}")
    diff = x[:, :, None, :] - y[:, None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=-1))


def _validate(inputs: DriftInputs) -> None:
    x, y_pos, y_neg = inputs.x, inputs.y_pos, inputs.y_neg
    for name, a in (("x", x), ("y_pos", y_pos), ("y_neg", y_neg)):
        if a.ndim != 3:
            raise ShapeError(f"compute_v: {name} must be (B, n, D), got {a.shape}")
        if not np.isfinite(a).all():
            raise ValueError(f"compute_v: {name} contains NaN or Inf")
    if not (x.shape[0] == y_pos.shape[0] == y_neg.shape[0]):
        raise ShapeError(
            f"compute_v: batch dims differ: x {x.shape}, y_pos {y_pos.shape}, y_neg {y_neg.shape}")
    if not (x.shape[2] == y_pos.shape[2] == y_neg.shape[2]):
        raise ShapeError(
            f"compute_v: feature dims differ: x {x.shape}, y_pos {y_pos.shape}, y_neg {y_neg.shape}")
    if len(inputs.temps) == 0 or any(t <= 0 for t in inputs.temps):
        raise ValueError(f"compute_v: temperatures must be non-empty and > 0, got {inputs.temps}")


def _masked_distances(inputs: DriftInputs) -> tuple[np.ndarray, np.ndarray]:
    d_pos = pairwise_distances(inputs.x, inputs.y_pos)
    d_neg = pairwise_distances(inputs.x, inputs.y_neg)
    G, M = inputs.x.shape[1], inputs.y_neg.shape[1]
    if inputs.mask_self and G == M:
        d_neg = d_neg + SELF_MASK_OFFSET * np.eye(G)
    return d_pos, d_neg


def _shared_scale(d_pos: np.ndarray, d_neg: np.ndarray) -> float:
    pool = np.concatenate([d_pos, d_neg], axis=2)
    unmasked = pool[pool < MASKED_CUTOFF]
    mean = unmasked.mean() if unmasked.size else 0.0
    return float(np.maximum(mean, SCALE_FLOOR))


def drift_field(inputs: DriftInputs, scale: float | None = None) -> DriftResult:
    """Full drifting-field computation, keeping per-temperature terms and weights.

    The adaptive scale is computed once from the unmasked distance pool and
    shared by every temperature; pass `scale` explicitly to pin it.
    """
    _validate(inputs)
    d_pos, d_neg = _masked_distances(inputs)
    if scale is None:
        scale = _shared_scale(d_pos, d_neg)
    n_pos = inputs.y_pos.shape[1]

    v_total = np.zeros_like(inputs.x)
    v_by_temp: dict[float, np.ndarray] = {}
    w_pos_by_temp: dict[float, np.ndarray] = {}
    w_neg_by_temp: dict[float, np.ndarray] = {}
    for t in inputs.temps:
        logits = np.concatenate([-d_pos / t, -d_neg / t], axis=2) / scale
        a = np.sqrt(softmax(logits, axis=2) * softmax(logits, axis=1))
        a_pos, a_neg = a[:, :, :n_pos], a[:, :, n_pos:]
        w_pos = a_pos * a_neg.sum(axis=2, keepdims=True)
        w_neg = a_neg * a_pos.sum(axis=2, keepdims=True)
        v_t = w_pos @ inputs.y_pos - w_neg @ inputs.y_neg
        v_by_temp[t] = v_t
        w_pos_by_temp[t] = w_pos
        w_neg_by_temp[t] = w_neg
        v_total = v_total + v_t
    return DriftResult(v_total=v_total, v_by_temp=v_by_temp,
                       w_pos_by_temp=w_pos_by_temp, w_neg_by_temp=w_neg_by_temp,
                       scale=scale)


def compute_v(inputs: DriftInputs, scale: float | None = None) -> np.ndarray:
    """Total drifting vector, (B, G, D). See drift_field for the full breakdown."""
    return drift_field(inputs, scale=scale).v_total


def relative_variance(v_samples: np.ndarray) -> float:
    """||sample mean||^2 / mean ||sample||^2 over an (S, D) sample of vectors.

    1.0 for a deterministic nonzero field, 0.0 for pure zero-mean noise.
    """
    if v_samples.ndim != 2:
        raise ShapeError(f"relative_variance: expected (S, D) samples, got {v_samples.shape}")
    if v_samples.shape[0] < 2:
        raise ValueError(f"relative_variance: need at least 2 samples, got {v_samples.shape[0]}")
    mean = v_samples.mean(axis=0)
    second_moment = np.mean(np.sum(v_samples * v_samples, axis=1))
    if second_moment == 0.0:
        return 0.0
    return float(mean @ mean / second_moment)


def ess_metrics(inputs: DriftInputs, temp: float,
                scale: float | None = None) -> tuple[float, float]:
    """Normalized effective sample size and peak probability at one temperature.

    Each candidate's softmax over its K unmasked targets gives
    ess_ratio = 1/(K * sum p^2) and max_p = max p; both are averaged over all
    candidates and batch items and lie in [1/K, 1].
    """
    _validate(inputs)
    if temp <= 0:
        raise ValueError(f"ess_metrics: temperature must be > 0, got {temp}")
    d_pos, d_neg = _masked_distances(inputs)
    if scale is None:
        scale = _shared_scale(d_pos, d_neg)
    all_d = np.concatenate([d_pos, d_neg], axis=2)
    logits = np.concatenate([-d_pos / temp, -d_neg / temp], axis=2) / scale
    unmasked = all_d < MASKED_CUTOFF
    p = softmax(np.where(unmasked, logits, -np.inf), axis=2)
    k = unmasked.sum(axis=2)
    ess_ratio = 1.0 / (k * np.sum(p * p, axis=2))
    max_p = p.max(axis=2)
    return float(ess_ratio.mean()), float(max_p.mean())


def drift_diagnostics(inputs: DriftInputs) -> DriftDiagnostics:
    """Per-temperature ESS/Max_p plus RV of the per-temperature and total fields.

    RV treats the pooled per-candidate vectors of one configuration as the
    sample of the drifting vector.
    """
    result = drift_field(inputs)
    d = inputs.x.shape[2]
    ess_ratio, max_p, rv_by_temp = {}, {}, {}
    for t in inputs.temps:
        e, m = ess_metrics(inputs, t, scale=result.scale)
        ess_ratio[t] = e
        max_p[t] = m
        rv_by_temp[t] = relative_variance(result.v_by_temp[t].reshape(-1, d))
    rv_total = relative_variance(result.v_total.reshape(-1, d))
    return DriftDiagnostics(temps=tuple(inputs.temps), ess_ratio=ess_ratio,
                            max_p=max_p, rv_by_temp=rv_by_temp, rv_total=rv_total)
