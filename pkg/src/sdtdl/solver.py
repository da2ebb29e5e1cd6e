"""Structured discriminative tensor dictionary learning.

A structured dictionary holds a source-domain dictionary ``U_s``, a target
dictionary ``U_t`` and one class dictionary ``W_c`` per class, each a set of
per-mode orthonormal factor matrices. The alternating fit loop interleaves
pseudo-label prediction on the target set with block updates of the class
dictionaries (eigen update on the Phi-transformed stacked residuals), the
source dictionary and the target dictionary (both by warm-started HOOI).

Class-dictionary updates support two routes:

* ``"eigen-phi"`` (default): top eigenvectors of the Gram matrix of the
  Phi-weighted residual flattening, Phi as published. Empirically this form
  does not always minimize the written objective when the discriminant
  weight is nonzero; see ``class_update_quadratic_form`` for the derivation
  of the exact form.
* ``"exact"``: same alternating scheme but with the quadratic form obtained
  by expanding the objective directly. Non-canonical, kept as a documented
  switch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .hooi import eig_sym_topk, hooi, hosvd
from .tensor import (
    frobenius_norm,
    mode_flatten,
    mode_product,
    multi_product_skip,
    require_orthonormal,
    stack_last,
)

__all__ = [
    "Hyperparams",
    "LabeledTensorSet",
    "SdtdlModel",
    "SdtdlCodes",
    "ClassSubproblem",
    "FitHistoryRow",
    "object_preset",
    "digit_preset",
    "class_means",
    "mmd_term",
    "objective",
    "build_phi",
    "class_update_quadratic_form",
    "update_class_dict",
    "update_domain_source",
    "update_domain_target",
    "fit",
    "compute_codes",
    "run_block_updates",
    "nearest_centroid_labels",
]


@dataclass
class Hyperparams:
    """Model hyperparameters.

    theta   weight of the target-domain fidelity term (> 0)
    lam     weight of the discriminant term (>= 0)
    gamma   mixing weight of fidelity vs centroid probabilities, in [0, 1]
    delta   ratio of target samples admitted into training, in (0, 1]
    ranks   per-mode dictionary ranks J_1..J_M
    """

    ranks: tuple
    theta: float = 20.0
    lam: float = 0.1
    gamma: float = 0.25
    delta: float = 0.8
    max_outer_iters: int = 10
    inner_sweeps: int = 20
    tol: float = 1e-6

    def __post_init__(self):
        self.ranks = tuple(int(r) for r in self.ranks)
        if self.theta <= 0:
            raise ValueError("theta must be > 0")
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must be in [0, 1]")
        if not 0.0 < self.delta <= 1.0:
            raise ValueError("delta must be in (0, 1]")
        if any(r < 1 for r in self.ranks):
            raise ValueError("ranks must be positive")
        if self.max_outer_iters < 0:
            raise ValueError("max_outer_iters must be >= 0")
        if self.inner_sweeps < 1:
            raise ValueError("inner_sweeps must be >= 1")
        if self.tol <= 0:
            raise ValueError("tol must be positive")


def object_preset(**overrides) -> Hyperparams:
    """Grid-searched setting for the object-recognition features."""
    base = dict(ranks=(6, 6, 28), theta=20.0, lam=0.1, gamma=0.25, delta=0.8)
    base.update(overrides)
    return Hyperparams(**base)


def digit_preset(**overrides) -> Hyperparams:
    """Grid-searched setting for the digit-recognition features."""
    base = dict(ranks=(7, 7, 30), theta=10.0, lam=1.0, gamma=0.2, delta=0.8)
    base.update(overrides)
    return Hyperparams(**base)


@dataclass
class LabeledTensorSet:
    """A batch of order-M samples stacked along a trailing sample mode.

    ``labels`` are 1-based class ids, or ``None`` for an unlabeled set.
    """

    samples: np.ndarray
    class_count: int
    labels: np.ndarray | None = None

    def __post_init__(self):
        self.samples = np.ascontiguousarray(self.samples, dtype=np.float64)
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("samples contain non-finite values")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (self.samples.shape[-1],):
                raise ValueError("label count does not match sample count")
            if self.labels.size and (
                self.labels.min() < 1 or self.labels.max() > self.class_count
            ):
                raise ValueError(f"labels must lie in 1..{self.class_count}")

    @property
    def n_samples(self) -> int:
        return self.samples.shape[-1]

    @property
    def order(self) -> int:
        return self.samples.ndim - 1

    def class_indices(self, c: int) -> np.ndarray:
        if self.labels is None:
            raise ValueError("set is unlabeled")
        return np.flatnonzero(self.labels == c)

    def class_samples(self, c: int) -> np.ndarray:
        return self.samples[..., self.class_indices(c)]


@dataclass
class SdtdlModel:
    u_source: list  # M orthonormal factor matrices
    u_target: list | None  # M factor matrices, None before initialization
    w_class: list  # C lists of M factor matrices
    class_means_source: list  # C mean code tensors (ranks-shaped)
    class_means_target: list  # C mean code tensors, zeros for empty classes
    hyper: Hyperparams

    @property
    def class_count(self) -> int:
        return len(self.w_class)

    def validate(self, tol: float = 1e-8):
        for m, u in enumerate(self.u_source):
            require_orthonormal(u, tol, name=f"u_source[{m}]")
        if self.u_target is not None:
            for m, u in enumerate(self.u_target):
                require_orthonormal(u, tol, name=f"u_target[{m}]")
        for c, w in enumerate(self.w_class):
            for m, wm in enumerate(w):
                require_orthonormal(wm, tol, name=f"w_class[{c}][{m}]")


@dataclass
class SdtdlCodes:
    """All coefficient tensors of one model state.

    ``a0``/``b0`` are domain codes aligned with source / selected-target
    sample order; ``a_class[c]``/``b_class[c]`` are class codes for the
    class-c samples in class-internal order.
    """

    a0: np.ndarray
    b0: np.ndarray
    a_class: list
    b_class: list


@dataclass
class ClassSubproblem:
    """Residual tensors and the Phi matrix of one class-dictionary update."""

    x_tilde: np.ndarray
    y_tilde: np.ndarray
    phi: np.ndarray


def class_means(codes: np.ndarray) -> np.ndarray:
    """Elementwise mean of the code tensors over the sample mode."""
    if codes.shape[-1] == 0:
        raise ValueError("cannot take class mean of an empty class")
    return codes.mean(axis=-1)


def mmd_term(mean_a: np.ndarray, mean_b: np.ndarray) -> float:
    """Squared distance between two class-conditional code means."""
    return frobenius_norm(mean_a - mean_b) ** 2


def _dict_apply(codes: np.ndarray, factors) -> np.ndarray:
    """Reconstruct sample tensors from codes: apply factors on leading modes."""
    return multi_product_skip(codes, list(factors) + [None], skip=codes.ndim - 1)


def _dict_project(samples: np.ndarray, factors) -> np.ndarray:
    """Codes of samples under a dictionary: transposed factors on leading modes."""
    return multi_product_skip(samples, [f.T for f in factors] + [None], skip=samples.ndim - 1)


def objective(
    model: SdtdlModel,
    source: LabeledTensorSet,
    target_selected: LabeledTensorSet,
    codes: SdtdlCodes,
) -> float:
    """Value of the full learning objective.

    Sum over classes of source fidelity, theta-weighted target fidelity, and
    the lambda-weighted discriminant term. The discriminant term pairs source
    codes with the target class mean and vice versa (the published cross
    pairing). Classes with no selected target samples contribute fidelity
    only.
    """
    hp = model.hyper
    total = 0.0
    for c in range(1, model.class_count + 1):
        w = model.w_class[c - 1]
        src_idx = source.class_indices(c)
        xc = source.samples[..., src_idx]
        a0c = codes.a0[..., src_idx]
        ac = codes.a_class[c - 1]
        rec_s = _dict_apply(a0c, model.u_source) + _dict_apply(ac, w)
        total += frobenius_norm(xc - rec_s) ** 2

        tgt_idx = target_selected.class_indices(c)
        bc = codes.b_class[c - 1]
        if tgt_idx.size:
            yc = target_selected.samples[..., tgt_idx]
            b0c = codes.b0[..., tgt_idx]
            rec_t = _dict_apply(b0c, model.u_target) + _dict_apply(bc, w)
            total += hp.theta * frobenius_norm(yc - rec_t) ** 2
            mean_a = class_means(ac)
            mean_b = class_means(bc)
            total += hp.lam * (
                float(np.sum((ac - mean_b[..., None]) ** 2))
                + float(np.sum((bc - mean_a[..., None]) ** 2))
            )
    return float(total)


def build_phi(n_s: int, n_t: int, theta: float, lam: float) -> np.ndarray:
    """The sample-mode weighting matrix of the class-dictionary eigen update.

    Blocks, in order: (1-sqrt(lam)) I on the source diagonal,
    sqrt(lam)/n_s ones on the top-right, sqrt(lam)/n_t ones on the
    bottom-left, and (sqrt(theta)-sqrt(lam)) I on the target diagonal.
    With ``n_t == 0`` the matrix degrades to the source block alone.
    """
    if n_s < 1:
        raise ValueError("n_s must be >= 1")
    if n_t < 0:
        raise ValueError("n_t must be >= 0")
    sl = math.sqrt(lam)
    st = math.sqrt(theta)
    phi = np.zeros((n_s + n_t, n_s + n_t))
    phi[:n_s, :n_s] = (1.0 - sl) * np.eye(n_s)
    if n_t:
        phi[:n_s, n_s:] = sl / n_s
        phi[n_s:, :n_s] = sl / n_t
        phi[n_s:, n_s:] = (st - sl) * np.eye(n_t)
    return phi


def class_update_quadratic_form(n_s: int, n_t: int, theta: float, lam: float) -> np.ndarray:
    """Exact sample-mode quadratic form of the class subproblem.

    Expanding the objective with projection codes A = [[X~; W^T]] and
    B = [[Y~; W^T]] gives  minimize -tr(V Q V^T)  over the stacked code
    matrix V, with

        Q = diag(I, theta I) - lam (E E^T + F F^T),
        E = [I; -(1/n_t) 1 1^T],  F = [-(1/n_s) 1 1^T; I].

    This generally differs from Phi^T Phi, which is why the published eigen
    update is not always optimal for the written objective.
    """
    if n_t == 0:
        return np.eye(n_s)
    n = n_s + n_t
    q = np.zeros((n, n))
    q[:n_s, :n_s] = (1.0 - lam) * np.eye(n_s) - lam * n_t / n_s**2
    q[n_s:, n_s:] = (theta - lam) * np.eye(n_t) - lam * n_s / n_t**2
    q[:n_s, n_s:] = lam * (1.0 / n_s + 1.0 / n_t)
    q[n_s:, :n_s] = lam * (1.0 / n_s + 1.0 / n_t)
    return q


def _class_dict_sweeps(z_weighted, ranks, sweeps, w_init, quad=None):
    """Alternating per-mode eigen updates on a sample-weighted residual tensor.

    When ``quad`` is None the update maximizes the core norm of
    ``z_weighted`` (the Phi route; the weighting is already baked in).
    Otherwise ``z_weighted`` is the raw stacked residual and ``quad`` the
    sample-mode quadratic form.
    """
    n_modes = z_weighted.ndim - 1
    sample_mode = z_weighted.ndim - 1
    if w_init is None:
        factors = hosvd(z_weighted if quad is None else mode_product(
            z_weighted, quad, sample_mode), ranks, skip_last=True).factors
        factors = list(factors)
    else:
        factors = [np.asarray(w, dtype=np.float64) for w in w_init]
    for _ in range(sweeps):
        for m in range(n_modes):
            h = z_weighted
            for k in range(n_modes):
                if k == m:
                    continue
                h = mode_product(h, factors[k].T, k)
            if quad is None:
                g = mode_flatten(h, m)
                s = g @ g.T
            else:
                hq = mode_product(h, quad, sample_mode)
                s = mode_flatten(h, m) @ mode_flatten(hq, m).T
                s = 0.5 * (s + s.T)
            _, vecs = eig_sym_topk(s, ranks[m])
            factors[m] = vecs
    return factors


def update_class_dict(
    sub: ClassSubproblem,
    ranks,
    inner_sweeps: int,
    method: str = "eigen-phi",
    theta: float | None = None,
    lam: float | None = None,
    w_init=None,
):
    """Solve one class-dictionary subproblem.

    Returns ``(w_c, a_c, b_c)``: the updated factor matrices and the class
    codes of the source / target residuals under them. ``method`` selects the
    published Phi eigen route or the exact quadratic form (which requires
    ``theta`` and ``lam``).
    """
    n_s = sub.x_tilde.shape[-1]
    n_t = sub.y_tilde.shape[-1]
    if sub.phi.shape != (n_s + n_t, n_s + n_t):
        raise ValueError("phi shape does not match class sample counts")
    z = stack_last(sub.x_tilde, sub.y_tilde)
    ranks = [int(r) for r in ranks]
    for m, r in enumerate(ranks):
        if r > z.shape[m]:
            raise ValueError(f"rank {r} exceeds mode-{m} extent {z.shape[m]}")
    if method == "eigen-phi":
        z_phi = mode_product(z, sub.phi, z.ndim - 1)
        w = _class_dict_sweeps(z_phi, ranks, inner_sweeps, w_init)
    elif method == "exact":
        if theta is None or lam is None:
            raise ValueError("exact method requires theta and lam")
        quad = class_update_quadratic_form(n_s, n_t, theta, lam)
        w = _class_dict_sweeps(z, ranks, inner_sweeps, w_init, quad=quad)
    else:
        raise ValueError(f"unknown class-update method: {method}")
    a_c = _dict_project(sub.x_tilde, w)
    b_c = _dict_project(sub.y_tilde, w)
    return w, a_c, b_c


def _class_residuals(tensor_set: LabeledTensorSet, codes_by_class, dicts_by_class):
    """Samples minus their class-dictionary reconstruction, in set order."""
    out = np.zeros_like(tensor_set.samples)
    for c in range(1, len(dicts_by_class) + 1):
        idx = tensor_set.class_indices(c)
        if idx.size == 0:
            continue
        rec = _dict_apply(codes_by_class[c - 1], dicts_by_class[c - 1])
        out[..., idx] = tensor_set.samples[..., idx] - rec
    return out


def update_domain_source(source: LabeledTensorSet, model: SdtdlModel, codes: SdtdlCodes):
    """Refresh the source dictionary on the class-residual tensor via HOOI,
    warm-started from the current factors."""
    resid = _class_residuals(source, codes.a_class, model.w_class)
    res = hooi(
        resid,
        model.hyper.ranks,
        skip_last=True,
        max_sweeps=model.hyper.inner_sweeps,
        tol=model.hyper.tol,
        init_factors=model.u_source,
    )
    return list(res.factors), res.core


def update_domain_target(target_selected: LabeledTensorSet, model: SdtdlModel, codes: SdtdlCodes):
    """Target-side analogue of :func:`update_domain_source`. The target
    weight scales the subproblem uniformly, so the same HOOI solves it."""
    resid = _class_residuals(target_selected, codes.b_class, model.w_class)
    res = hooi(
        resid,
        model.hyper.ranks,
        skip_last=True,
        max_sweeps=model.hyper.inner_sweeps,
        tol=model.hyper.tol,
        init_factors=model.u_target,
    )
    return list(res.factors), res.core


@dataclass
class FitHistoryRow:
    iteration: int
    objective: float
    n_selected: int
    accuracy: float  # NaN when no ground truth was supplied


def _class_mean_list(codes_by_class, ranks):
    means = []
    for codes in codes_by_class:
        if codes.shape[-1] == 0:
            means.append(np.zeros(ranks))
        else:
            means.append(class_means(codes))
    return means


def _selected_set(target: LabeledTensorSet, pl) -> LabeledTensorSet:
    idx = np.flatnonzero(pl.selected)
    return LabeledTensorSet(
        samples=target.samples[..., idx],
        class_count=target.class_count,
        labels=pl.labels[idx],
    )


def _accuracy(labels, truth) -> float:
    if truth is None:
        return float("nan")
    truth = np.asarray(truth)
    return float(np.mean(labels == truth)) if truth.size else float("nan")


def fit(
    source: LabeledTensorSet,
    target: LabeledTensorSet,
    hyper: Hyperparams,
    truth=None,
    class_update: str = "eigen-phi",
):
    """Run the full alternating procedure.

    Initialization: (1) each class dictionary by HOOI on its raw source
    samples, class codes, then the source dictionary by HOOI on the
    residuals; (2) target labels predicted with the target-dictionary
    contribution zeroed; (3) the target dictionary by HOOI on the residuals
    of the selected targets. The loop then predicts labels, selects samples,
    and updates class dictionaries, source dictionary and target dictionary,
    stopping when the pseudo-labels stop changing or after
    ``max_outer_iters`` iterations.

    Returns ``(model, pseudo_labels, history)``; ``truth`` is used for
    accuracy reporting only.
    """
    from . import pseudolabel as pl_mod

    if source.labels is None:
        raise ValueError("source set must be labeled")
    if source.samples.shape[:-1] != target.samples.shape[:-1]:
        raise ValueError("source and target sample dims differ")
    C = source.class_count
    ranks = hyper.ranks
    if len(ranks) != source.order:
        raise ValueError(f"expected {source.order} ranks, got {len(ranks)}")
    for c in range(1, C + 1):
        if source.class_indices(c).size == 0:
            raise ValueError(f"source class {c} has no samples")

    # --- init step 1: class dictionaries from raw class samples, then U_s
    w_class = []
    a_class = []
    for c in range(1, C + 1):
        xc = source.class_samples(c)
        res = hooi(xc, ranks, skip_last=True, max_sweeps=hyper.inner_sweeps, tol=hyper.tol)
        w_class.append(list(res.factors))
        a_class.append(res.core)
    model = SdtdlModel(
        u_source=[],
        u_target=None,
        w_class=w_class,
        class_means_source=_class_mean_list(a_class, ranks),
        class_means_target=[np.zeros(ranks) for _ in range(C)],
        hyper=hyper,
    )
    codes = SdtdlCodes(
        a0=np.zeros(ranks + (source.n_samples,)),
        b0=np.zeros(ranks + (0,)),
        a_class=a_class,
        b_class=[np.zeros(ranks + (0,)) for _ in range(C)],
    )
    resid = _class_residuals(source, codes.a_class, model.w_class)
    res = hooi(resid, ranks, skip_last=True, max_sweeps=hyper.inner_sweeps, tol=hyper.tol)
    model.u_source = list(res.factors)
    codes.a0 = res.core

    # --- init step 2: predict target labels with the U_t contribution zeroed
    fid = pl_mod.fidelity_probs(target, model)
    cen = pl_mod.centroid_probs(target, model)
    pl = pl_mod.predict(fid, cen, hyper.gamma)
    pl = pl_mod.select(pl, hyper.delta)
    init_pl = pl

    # --- init step 3: target dictionary from the selected residuals
    selected = _selected_set(target, pl)
    b_class = []
    for c in range(1, C + 1):
        yc = selected.class_samples(c)
        b_class.append(_dict_project(yc, model.w_class[c - 1]))
    codes.b_class = b_class
    model.class_means_target = _class_mean_list(b_class, ranks)
    t_resid = _class_residuals(selected, codes.b_class, model.w_class)
    res = hooi(t_resid, ranks, skip_last=True, max_sweeps=hyper.inner_sweeps, tol=hyper.tol)
    model.u_target = list(res.factors)
    codes.b0 = res.core

    history = [
        FitHistoryRow(
            iteration=0,
            objective=objective(model, source, selected, codes),
            n_selected=int(np.sum(pl.selected)),
            accuracy=_accuracy(pl.labels, truth),
        )
    ]
    if hyper.max_outer_iters == 0:
        return model, init_pl, history

    prev_labels = pl.labels
    for it in range(1, hyper.max_outer_iters + 1):
        fid = pl_mod.fidelity_probs(target, model)
        cen = pl_mod.centroid_probs(target, model)
        pl = pl_mod.predict(fid, cen, hyper.gamma)
        pl = pl_mod.select(pl, hyper.delta)
        if np.array_equal(pl.labels, prev_labels) and it > 1:
            break
        prev_labels = pl.labels
        selected = _selected_set(target, pl)

        run_block_updates(source, selected, model, codes, class_update)

        history.append(
            FitHistoryRow(
                iteration=it,
                objective=objective(model, source, selected, codes),
                n_selected=int(np.sum(pl.selected)),
                accuracy=_accuracy(pl.labels, truth),
            )
        )

    # final prediction with the final model, so a later standalone predict
    # on the same target reproduces the fit output exactly
    fid = pl_mod.fidelity_probs(target, model)
    cen = pl_mod.centroid_probs(target, model)
    final_pl = pl_mod.select(pl_mod.predict(fid, cen, hyper.gamma), hyper.delta)
    history.append(
        FitHistoryRow(
            iteration=history[-1].iteration + 1,
            objective=history[-1].objective,
            n_selected=int(np.sum(final_pl.selected)),
            accuracy=_accuracy(final_pl.labels, truth),
        )
    )
    return model, final_pl, history


def compute_codes(
    model: SdtdlModel, source: LabeledTensorSet, target_selected: LabeledTensorSet
) -> SdtdlCodes:
    """Coefficient tensors consistent with the current dictionaries.

    Domain codes are the projections of the raw samples; class codes are
    projections of the domain residuals onto the class dictionaries. Also
    refreshes the model's class means.
    """
    ranks = model.hyper.ranks
    a0 = _dict_project(source.samples, model.u_source)
    b0 = _dict_project(target_selected.samples, model.u_target)
    a_class, b_class = [], []
    for c in range(1, model.class_count + 1):
        src_idx = source.class_indices(c)
        x_tilde = source.samples[..., src_idx] - _dict_apply(a0[..., src_idx], model.u_source)
        a_class.append(_dict_project(x_tilde, model.w_class[c - 1]))
        tgt_idx = target_selected.class_indices(c)
        y_tilde = target_selected.samples[..., tgt_idx] - _dict_apply(
            b0[..., tgt_idx], model.u_target
        )
        b_class.append(_dict_project(y_tilde, model.w_class[c - 1]))
    model.class_means_source = _class_mean_list(a_class, ranks)
    model.class_means_target = _class_mean_list(b_class, ranks)
    return SdtdlCodes(a0=a0, b0=b0, a_class=a_class, b_class=b_class)


def nearest_centroid_labels(source: LabeledTensorSet, target: LabeledTensorSet) -> np.ndarray:
    """No-adaptation baseline: each target sample gets the class of the
    nearest source class centroid in raw tensor space."""
    if source.labels is None:
        raise ValueError("source set must be labeled")
    C = source.class_count
    n = target.n_samples
    centroids = np.stack(
        [source.class_samples(c).mean(axis=-1).ravel() for c in range(1, C + 1)]
    )
    flat = target.samples.reshape(-1, n).T
    d2 = (
        np.sum(flat**2, axis=1, keepdims=True)
        - 2.0 * flat @ centroids.T
        + np.sum(centroids**2, axis=1)
    )
    return np.argmin(d2, axis=1) + 1


def run_block_updates(
    source: LabeledTensorSet,
    selected: LabeledTensorSet,
    model: SdtdlModel,
    codes: SdtdlCodes,
    class_update: str = "eigen-phi",
) -> None:
    """One full pass of class-dictionary and domain-dictionary updates,
    mutating ``model`` and ``codes`` in place. Pseudo-labels are taken as
    fixed (they are baked into ``selected``)."""
    hyper = model.hyper
    C = model.class_count
    ranks = hyper.ranks
    for c in range(1, C + 1):
        src_idx = source.class_indices(c)
        tgt_idx = selected.class_indices(c)
        x_tilde = source.samples[..., src_idx] - _dict_apply(
            codes.a0[..., src_idx], model.u_source
        )
        y_tilde = selected.samples[..., tgt_idx] - _dict_apply(
            codes.b0[..., tgt_idx], model.u_target
        )
        phi = build_phi(src_idx.size, tgt_idx.size, hyper.theta, hyper.lam)
        sub = ClassSubproblem(x_tilde=x_tilde, y_tilde=y_tilde, phi=phi)
        w, a_c, b_c = update_class_dict(
            sub,
            ranks,
            hyper.inner_sweeps,
            method=class_update,
            theta=hyper.theta,
            lam=hyper.lam,
            w_init=model.w_class[c - 1],
        )
        model.w_class[c - 1] = w
        codes.a_class[c - 1] = a_c
        codes.b_class[c - 1] = b_c
    model.class_means_source = _class_mean_list(codes.a_class, ranks)
    model.class_means_target = _class_mean_list(codes.b_class, ranks)

    model.u_source, codes.a0 = update_domain_source(source, model, codes)
    model.u_target, codes.b0 = update_domain_target(selected, model, codes)
