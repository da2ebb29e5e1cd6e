"""Target-label prediction from reconstruction fidelity and centroid
deviation, plus confidence-ranked sample selection.

Per-sample scale: each row of errors is divided by the median of its C
entries before the softmax, which makes the resulting probabilities
invariant to a positive rescaling of that sample's errors.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .tensor import multi_product_skip

__all__ = [
    "PseudoLabels",
    "fidelity_probs",
    "centroid_probs",
    "predict",
    "select",
    "selection_count",
]

_EPS = 1e-300


@dataclass
class PseudoLabels:
    labels: np.ndarray  # predicted class ids, 1-based
    combined_conf: np.ndarray  # max combined probability per sample
    fidelity_probs: np.ndarray  # N_t x C, row-stochastic
    centroid_probs: np.ndarray  # N_t x C, row-stochastic
    selected: np.ndarray  # boolean mask

    @property
    def n_samples(self) -> int:
        return self.labels.shape[0]


def _softmax_rows(errors: np.ndarray) -> np.ndarray:
    """Row-stochastic matrix from nonnegative error rows.

    Each row is scaled by the median of its entries; rows whose scale is
    degenerate (all errors zero) become uniform.
    """
    n, c = errors.shape
    probs = np.empty((n, c))
    for j in range(n):
        row = errors[j]
        sigma = float(np.median(row))
        if sigma <= _EPS:
            sigma = float(np.mean(row))
        if sigma <= _EPS:
            probs[j] = 1.0 / c
            continue
        z = -row / sigma
        z -= z.max()  # guard against underflow only; softmax is shift-free
        e = np.exp(z)
        probs[j] = e / e.sum()
    return probs


def _domain_residuals(target, model) -> np.ndarray:
    """Targets minus their target-dictionary reconstruction; the target
    dictionary contribution is zero when the model has none yet."""
    y = target.samples
    if model.u_target is None:
        return y
    b0 = multi_product_skip(y, [u.T for u in model.u_target] + [None], skip=y.ndim - 1)
    rec = multi_product_skip(b0, list(model.u_target) + [None], skip=y.ndim - 1)
    return y - rec


def _class_codes(resid: np.ndarray, w) -> np.ndarray:
    return multi_product_skip(resid, [wm.T for wm in w] + [None], skip=resid.ndim - 1)


def fidelity_probs(target, model) -> np.ndarray:
    """Row-stochastic class probabilities from squared reconstruction error.

    The error of sample j against class c is the residual after removing the
    target-dictionary part and projecting what remains on the class
    dictionary.
    """
    resid = _domain_residuals(target, model)
    n = target.n_samples
    C = model.class_count
    errors = np.empty((n, C))
    for c in range(C):
        codes = _class_codes(resid, model.w_class[c])
        rec = multi_product_skip(
            codes, list(model.w_class[c]) + [None], skip=codes.ndim - 1
        )
        diff = resid - rec
        errors[:, c] = np.sum(diff.reshape(-1, n) ** 2, axis=0)
    return _softmax_rows(errors)


def centroid_probs(target, model) -> np.ndarray:
    """Row-stochastic class probabilities from the deviation of each class
    code from the source class mean (source means are the reliable ones)."""
    resid = _domain_residuals(target, model)
    n = target.n_samples
    C = model.class_count
    dists = np.empty((n, C))
    for c in range(C):
        codes = _class_codes(resid, model.w_class[c])
        diff = codes - model.class_means_source[c][..., None]
        dists[:, c] = np.sum(diff.reshape(-1, n) ** 2, axis=0)
    return _softmax_rows(dists)


def predict(fid: np.ndarray, cen: np.ndarray, gamma: float) -> PseudoLabels:
    """Convex combination of the two probability matrices; the label is the
    row argmax (ties go to the lowest class id)."""
    fid = np.asarray(fid, dtype=np.float64)
    cen = np.asarray(cen, dtype=np.float64)
    if fid.shape != cen.shape:
        raise ValueError(f"probability shapes differ: {fid.shape} vs {cen.shape}")
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("gamma must be in [0, 1]")
    combined = gamma * fid + (1.0 - gamma) * cen
    labels = np.argmax(combined, axis=1) + 1  # argmax takes first on ties
    conf = combined[np.arange(combined.shape[0]), labels - 1]
    return PseudoLabels(
        labels=labels,
        combined_conf=conf,
        fidelity_probs=fid,
        centroid_probs=cen,
        selected=np.zeros(combined.shape[0], dtype=bool),
    )


def selection_count(n_samples: int, delta: float) -> int:
    """Number of samples admitted: delta * N rounded half-up."""
    return int(np.floor(delta * n_samples + 0.5))


def select(pl: PseudoLabels, delta: float) -> PseudoLabels:
    """Mark the top-confidence samples, globally ranked.

    Ties in confidence are broken by ascending sample index; the selection
    is global, not per class.
    """
    if not 0.0 < delta <= 1.0:
        raise ValueError("delta must be in (0, 1]")
    k = selection_count(pl.n_samples, delta)
    order = np.argsort(-pl.combined_conf, kind="stable")
    mask = np.zeros(pl.n_samples, dtype=bool)
    mask[order[:k]] = True
    return replace(pl, selected=mask)
