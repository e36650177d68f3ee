"""Edge CNN footprint planning and desk-scale embedding approximation.

The footprint calculator covers 4-block VGG-style audio embedding stacks
(two 3x3 conv layers per block, 2x2 pooling after each block): per-block
activation shapes, activation memory under float or 8-bit quantization,
and static weight size.

The embedding-approximation part fits a reduced student to a teacher's
embedding subspace: PCA for the dimensionality reduction, a closed-form
linear least-squares student, and the summed squared-distance objective
they minimize.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np


class LayerShape(NamedTuple):
    height: int
    width: int
    channels: int
    bytes_per_element: int


@dataclass(frozen=True)
class ConvStackSpec:
    """4-block conv stack: two 3x3 conv layers per block, 2x2 pool after
    each block.  width_factor scales every filter count uniformly
    (keeping their ratios); pool_rounding selects how odd spatial sizes
    halve."""

    input_hw: tuple = (256, 199)
    block_filters: tuple = (64, 128, 256, 512)
    width_factor: float = 1.0
    pool_rounding: str = "floor"
    input_channels: int = 1

    def __post_init__(self):
        if len(self.block_filters) != 4:
            raise ValueError("expected 4 blocks of filters")
        if self.pool_rounding not in ("floor", "ceil"):
            raise ValueError("pool_rounding must be 'floor' or 'ceil'")
        if self.width_factor <= 0:
            raise ValueError("width_factor must be positive")

    @property
    def filters(self) -> tuple:
        return tuple(int(round(f * self.width_factor)) for f in self.block_filters)

    @property
    def embedding_dim(self) -> int:
        return self.filters[-1]


# Reference stacks.  The full-size model pools with floor rounding; the
# width-halved small variant pools with ceil rounding.
L3_STACK = ConvStackSpec((256, 199), (64, 128, 256, 512), 1.0, "floor")
SMALL_STACK = ConvStackSpec((64, 51), (64, 128, 256, 512), 0.5, "ceil")

MODEL_PRESETS = {"l3": (L3_STACK, 4), "sonyc-l3": (SMALL_STACK, 1)}


def layer_shapes(spec: ConvStackSpec, bytes_per_element: int = 4) -> list:
    """Per-block activation shapes.

    Block b's row carries the spatial size entering that block together
    with its filter count: the conv layers inside a block preserve
    spatial size, and pooling halves it before the next block.
    """
    h, w = spec.input_hw
    rounder = math.floor if spec.pool_rounding == "floor" else math.ceil
    rows = []
    for f in spec.filters:
        if h < 1 or w < 1:
            raise ValueError("spatial size collapsed to zero; too many blocks "
                             "for this input size")
        rows.append(LayerShape(h, w, f, bytes_per_element))
        h, w = rounder(h / 2), rounder(w / 2)
    return rows


def activation_kib(shape: LayerShape) -> int:
    """Activation memory of one layer output, floored to whole KiB."""
    return (shape.height * shape.width * shape.channels
            * shape.bytes_per_element) // 1024


def total_activation_kib(spec: ConvStackSpec, bytes_per_element: int = 4) -> int:
    """Total activation memory: each block row counts twice, once per
    conv layer of identical output size."""
    return 2 * sum(activation_kib(s) for s in layer_shapes(spec, bytes_per_element))


def static_size_bytes(spec: ConvStackSpec, bytes_per_weight: int = 1) -> int:
    """Weight storage: 3x3 kernels plus one bias per filter over all
    8 conv layers."""
    total = 0
    c_in = spec.input_channels
    for f in spec.filters:
        for c_out_stage in (f, f):        # two conv layers per block
            total += 9 * c_in * c_out_stage + c_out_stage
            c_in = c_out_stage
    return total * bytes_per_weight


# -- embedding approximation ------------------------------------------------

@dataclass(frozen=True)
class PcaMap:
    """Centering vector plus top-d principal axes (columns, variance
    ordered).  project() maps teacher embeddings into the reduced space."""

    mean: np.ndarray          # (n,)
    components: np.ndarray    # (n, d)
    singular_values: np.ndarray

    @property
    def dim(self) -> int:
        return self.components.shape[1]

    def project(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.mean) @ self.components


def pca_fit(embeddings: np.ndarray, d: int, rank_tol: float = 1e-9) -> PcaMap:
    """Top-d principal axes of centered embeddings via SVD.

    Raises if the data's numerical rank is below d, reporting the rank
    that is achievable.
    """
    x = np.asarray(embeddings, dtype=float)
    n_samples, n_features = x.shape
    if d < 1 or d > n_features:
        raise ValueError(f"d must be in [1, {n_features}]")
    if n_samples <= d:
        raise ValueError(f"need more than {d} samples, got {n_samples}")
    mean = x.mean(axis=0)
    centered = x - mean
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    rank = int((s > rank_tol * max(s[0], 1.0)).sum())
    if rank < d:
        raise ValueError(f"data rank {rank} is below requested dimension {d}")
    return PcaMap(mean, vt[:d].T.copy(), s[:d].copy())


def sea_objective(student_outputs: np.ndarray, targets: np.ndarray) -> float:
    """Sum of squared Euclidean distances between student outputs and the
    reduced teacher embeddings."""
    a = np.asarray(student_outputs, dtype=float)
    b = np.asarray(targets, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(((a - b) ** 2).sum())


def fit_linear_student(features: np.ndarray, targets: np.ndarray,
                       ridge: float = 1e-8):
    """Closed-form linear student: W = argmin ||F W - T||_F^2.

    Solved by ridge-stabilized normal equations.  Returns (W, residual)
    where residual is the achieved objective value.
    """
    f = np.asarray(features, dtype=float)
    t = np.asarray(targets, dtype=float)
    if f.ndim != 2 or t.ndim != 2 or f.shape[0] != t.shape[0]:
        raise ValueError("features and targets must be 2-D with matching rows")
    if f.shape[0] < f.shape[1]:
        raise ValueError("need at least as many samples as feature columns")
    gram = f.T @ f + ridge * np.eye(f.shape[1])
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > 1e14:
        raise ValueError(f"Gram matrix too ill-conditioned to solve "
                         f"(condition estimate {cond:.3e})")
    w = np.linalg.solve(gram, f.T @ t)
    return w, sea_objective(f @ w, t)
