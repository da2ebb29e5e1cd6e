"""Binary tensor container, label files, model serialization and the
synthetic cross-domain generator.

Tensor file layout (all integers little-endian):

    magic    4 bytes  b"STDL"
    version  uint16   1
    order    uint16
    dims     order x uint64
    payload  prod(dims) x float64, C order (first index slowest)

A model file is a manifest-plus-blobs container: magic b"STDM", version,
entry count, then for each entry a name and the absolute offset of its
tensor blob; every blob is a complete tensor file as above.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .solver import Hyperparams, LabeledTensorSet, SdtdlModel

__all__ = [
    "TensorFileError",
    "BadMagicError",
    "UnsupportedVersionError",
    "TruncatedPayloadError",
    "read_tensor",
    "write_tensor",
    "read_labels",
    "write_labels",
    "save_model",
    "load_model",
    "SyntheticSpec",
    "draw_structure",
    "generate_synthetic",
]

TENSOR_MAGIC = b"STDL"
MODEL_MAGIC = b"STDM"
VERSION = 1


class TensorFileError(Exception):
    """Base class for tensor container errors."""


class BadMagicError(TensorFileError):
    pass


class UnsupportedVersionError(TensorFileError):
    pass


class TruncatedPayloadError(TensorFileError):
    pass


def tensor_to_bytes(t: np.ndarray) -> bytes:
    t = np.ascontiguousarray(t, dtype="<f8")
    header = TENSOR_MAGIC + struct.pack("<HH", VERSION, t.ndim)
    header += struct.pack(f"<{t.ndim}Q", *t.shape)
    return header + t.tobytes()


def tensor_from_bytes(buf: bytes, offset: int = 0):
    """Decode one tensor blob; returns (array, next_offset)."""
    if buf[offset : offset + 4] != TENSOR_MAGIC:
        raise BadMagicError(f"bad magic {buf[offset:offset + 4]!r}")
    if len(buf) < offset + 8:
        raise TruncatedPayloadError("truncated header")
    version, order = struct.unpack_from("<HH", buf, offset + 4)
    if version != VERSION:
        raise UnsupportedVersionError(f"unsupported version {version}")
    pos = offset + 8
    if len(buf) < pos + 8 * order:
        raise TruncatedPayloadError("truncated dims")
    dims = struct.unpack_from(f"<{order}Q", buf, pos)
    pos += 8 * order
    count = int(np.prod(dims, dtype=np.int64)) if order else 1
    nbytes = 8 * count
    if len(buf) < pos + nbytes:
        raise TruncatedPayloadError("truncated payload")
    values = np.frombuffer(buf, dtype="<f8", count=count, offset=pos)
    return values.reshape(dims).copy(), pos + nbytes


def write_tensor(path, t: np.ndarray) -> None:
    with open(path, "wb") as fh:
        fh.write(tensor_to_bytes(t))


def read_tensor(path) -> np.ndarray:
    with open(path, "rb") as fh:
        buf = fh.read()
    t, _ = tensor_from_bytes(buf)
    if not np.all(np.isfinite(t)):
        raise TensorFileError("tensor contains non-finite values")
    return t


def write_labels(path, labels) -> None:
    with open(path, "w") as fh:
        for lab in labels:
            fh.write(f"{int(lab)}\n")


def read_labels(path) -> np.ndarray:
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    labels = np.array([int(ln) for ln in lines], dtype=np.int64)
    if labels.size and labels.min() < 1:
        raise ValueError("labels must be 1-based positive integers")
    return labels


# --- model container -------------------------------------------------------


def _model_entries(model: SdtdlModel):
    hp = model.hyper
    entries = [
        (
            "hyper",
            np.array(
                [
                    hp.theta,
                    hp.lam,
                    hp.gamma,
                    hp.delta,
                    hp.max_outer_iters,
                    hp.inner_sweeps,
                    hp.tol,
                    model.class_count,
                    1.0 if model.u_target is not None else 0.0,
                ]
            ),
        ),
        ("ranks", np.array(hp.ranks, dtype=np.float64)),
    ]
    for m, u in enumerate(model.u_source):
        entries.append((f"u_source/{m}", u))
    if model.u_target is not None:
        for m, u in enumerate(model.u_target):
            entries.append((f"u_target/{m}", u))
    for c, w in enumerate(model.w_class):
        for m, wm in enumerate(w):
            entries.append((f"w/{c}/{m}", wm))
    for c, mean in enumerate(model.class_means_source):
        entries.append((f"mean_src/{c}", mean))
    for c, mean in enumerate(model.class_means_target):
        entries.append((f"mean_tgt/{c}", mean))
    return entries


def save_model(path, model: SdtdlModel) -> None:
    entries = _model_entries(model)
    names = [name.encode() for name, _ in entries]
    manifest_size = 4 + 2 + 4 + sum(2 + len(n) + 8 for n in names)
    blobs = [tensor_to_bytes(t) for _, t in entries]
    offsets = []
    pos = manifest_size
    for blob in blobs:
        offsets.append(pos)
        pos += len(blob)
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC + struct.pack("<HI", VERSION, len(entries)))
        for name, off in zip(names, offsets):
            fh.write(struct.pack("<H", len(name)) + name + struct.pack("<Q", off))
        for blob in blobs:
            fh.write(blob)


def load_model(path) -> SdtdlModel:
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:4] != MODEL_MAGIC:
        raise BadMagicError(f"bad model magic {buf[:4]!r}")
    version, count = struct.unpack_from("<HI", buf, 4)
    if version != VERSION:
        raise UnsupportedVersionError(f"unsupported model version {version}")
    pos = 10
    tensors = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", buf, pos)
        pos += 2
        name = buf[pos : pos + name_len].decode()
        pos += name_len
        (off,) = struct.unpack_from("<Q", buf, pos)
        pos += 8
        tensors[name], _ = tensor_from_bytes(buf, off)
    hp_vec = tensors["hyper"]
    ranks = tuple(int(r) for r in tensors["ranks"])
    hyper = Hyperparams(
        ranks=ranks,
        theta=float(hp_vec[0]),
        lam=float(hp_vec[1]),
        gamma=float(hp_vec[2]),
        delta=float(hp_vec[3]),
        max_outer_iters=int(hp_vec[4]),
        inner_sweeps=int(hp_vec[5]),
        tol=float(hp_vec[6]),
    )
    C = int(hp_vec[7])
    has_target = bool(hp_vec[8])
    order = len(ranks)
    u_source = [tensors[f"u_source/{m}"] for m in range(order)]
    u_target = [tensors[f"u_target/{m}"] for m in range(order)] if has_target else None
    w_class = [[tensors[f"w/{c}/{m}"] for m in range(order)] for c in range(C)]
    return SdtdlModel(
        u_source=u_source,
        u_target=u_target,
        w_class=w_class,
        class_means_source=[tensors[f"mean_src/{c}"] for c in range(C)],
        class_means_target=[tensors[f"mean_tgt/{c}"] for c in range(C)],
        hyper=hyper,
    )


# --- synthetic benchmark ---------------------------------------------------


@dataclass
class SyntheticSpec:
    """Ground-truth generator for cross-domain benchmarks.

    Each sample is a domain part (domain dictionary times a Gaussian code
    around a domain mean) plus a class part (class dictionary times a
    Gaussian code around a class mean) plus optional noise. ``shift``
    controls how far the target dictionary and domain mean are rotated away
    from the source ones; ``shift=0`` makes the domains exchangeable.
    """

    class_count: int
    dims: tuple
    ranks: tuple
    n_source_per_class: int
    n_target_per_class: int
    noise: float = 0.0
    shift: float = 0.0
    seed: int = 0
    mean_separation: float = 5.0
    domain_strength: float = 2.0

    def __post_init__(self):
        self.dims = tuple(int(d) for d in self.dims)
        self.ranks = tuple(int(r) for r in self.ranks)
        if len(self.dims) != len(self.ranks):
            raise ValueError("dims and ranks must have equal length")
        if any(r > d for r, d in zip(self.ranks, self.dims)):
            raise ValueError("ranks must not exceed dims")
        if self.class_count < 1 or self.n_source_per_class < 1 or self.n_target_per_class < 1:
            raise ValueError("class_count and per-class sample counts must be >= 1")
        if self.noise < 0 or self.shift < 0:
            raise ValueError("noise and shift must be nonnegative")


def _orth(rng, n, k):
    q, r = np.linalg.qr(rng.standard_normal((n, k)))
    return q * np.sign(np.diag(r))


def _shifted_orth(rng, base, shift):
    if shift == 0.0:
        return base.copy()
    q, r = np.linalg.qr(base + shift * rng.standard_normal(base.shape))
    return q * np.sign(np.diag(r))


def _apply_dict(codes, factors):
    from .tensor import multi_product_skip

    return multi_product_skip(codes, list(factors) + [None], skip=codes.ndim - 1)


def draw_structure(rng, spec: SyntheticSpec):
    """Draw the ground-truth dictionaries and means of a synthetic problem.

    Returns ``(u_s, u_t, w, class_means, dom_mean_s, dom_mean_t)``. Class
    dictionaries are mutually orthogonal per mode when the mode extents
    allow (C * J_m <= I_m in every mode), otherwise independent draws.
    """
    C, dims, ranks = spec.class_count, spec.dims, spec.ranks
    p = int(np.prod(ranks))

    u_s = [_orth(rng, d, r) for d, r in zip(dims, ranks)]
    u_t = [_shifted_orth(rng, u, spec.shift) for u in u_s]

    disjoint = all(C * r <= d for d, r in zip(dims, ranks))
    w = []
    if disjoint:
        pools = [_orth(rng, d, C * r) for d, r in zip(dims, ranks)]
        for c in range(C):
            w.append([pool[:, c * r : (c + 1) * r] for pool, r in zip(pools, ranks)])
    else:
        for c in range(C):
            w.append([_orth(rng, d, r) for d, r in zip(dims, ranks)])

    means = rng.standard_normal((C,) + ranks)
    if C > 1:
        flat = means.reshape(C, -1)
        d2 = np.sum((flat[:, None, :] - flat[None, :, :]) ** 2, axis=-1)
        min_dist = float(np.sqrt(d2[~np.eye(C, dtype=bool)].min()))
        # within-class deviation of a unit-variance Gaussian code
        within = np.sqrt(p)
        if min_dist > 0:
            means *= max(1.0, spec.mean_separation * within / min_dist)

    dom_mean_s = rng.standard_normal(ranks)
    dom_mean_s *= spec.domain_strength * np.sqrt(p) / max(np.linalg.norm(dom_mean_s), 1e-12)
    if spec.shift == 0.0:
        dom_mean_t = dom_mean_s.copy()
    else:
        dom_mean_t = dom_mean_s + spec.shift * np.sqrt(p) * rng.standard_normal(ranks)
    return u_s, u_t, w, means, dom_mean_s, dom_mean_t


def generate_synthetic(spec: SyntheticSpec):
    """Draw a (source, target, truth) triple with known structure.

    Class mean codes are rescaled so the minimum inter-class mean distance
    is at least ``mean_separation`` times the within-class deviation; see
    :func:`draw_structure` for the dictionary layout.
    """
    rng = np.random.default_rng(spec.seed)
    C, dims, ranks = spec.class_count, spec.dims, spec.ranks
    u_s, u_t, w, means, dom_mean_s, dom_mean_t = draw_structure(rng, spec)

    def draw_domain(u_dom, dom_mean, n_per_class):
        n = C * n_per_class
        labels = np.repeat(np.arange(1, C + 1), n_per_class)
        samples = np.zeros(dims + (n,))
        for j, c in enumerate(labels):
            d_code = dom_mean + rng.standard_normal(ranks)
            c_code = means[c - 1] + rng.standard_normal(ranks)
            x = _apply_dict(d_code[..., None], u_dom) + _apply_dict(c_code[..., None], w[c - 1])
            if spec.noise > 0:
                x = x + spec.noise * rng.standard_normal(x.shape)
            samples[..., j] = x[..., 0]
        return samples, labels

    src_samples, src_labels = draw_domain(u_s, dom_mean_s, spec.n_source_per_class)
    tgt_samples, tgt_labels = draw_domain(u_t, dom_mean_t, spec.n_target_per_class)

    source = LabeledTensorSet(samples=src_samples, class_count=C, labels=src_labels)
    target = LabeledTensorSet(samples=tgt_samples, class_count=C)
    return source, target, tgt_labels
