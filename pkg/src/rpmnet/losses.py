"""The three training objectives and their weighted combination.

* cross-entropy over the distance logits (classification)
* margin loss: hinge on the squared-Euclidean part of the distance from
  each sample to its own class's reciprocal point, capped by that
  class's learnable margin (bounds the feature space)
* Fisher loss: 1 / (1 + between-class scatter / within-class scatter),
  computed per mini-batch, driving class clusters tight and apart

Class membership enters the batch formulas through constant selector
matrices, so everything stays inside the autodiff op set.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import model as mdl
from .config import TrainConfig

# Guard for batches whose classes all collapse to their means.
FISHER_EPS = 1e-12


@dataclass(frozen=True)
class LossBreakdown:
    """One batch's loss terms; ``total`` is the exact weighted sum."""

    ce: float
    margin: float
    fisher: float
    total: float
    ce_weight: float
    margin_weight: float
    fisher_weight: float


def _labels_array(labels, num_classes: int) -> np.ndarray:
    y = np.asarray(labels, dtype=np.int64)
    if y.ndim != 1:
        raise ad.ShapeError(f"labels must be a 1-D index vector, got shape {y.shape}")
    if y.size and (y.min() < 0 or y.max() >= num_classes):
        raise ValueError(f"labels must lie in [0, {num_classes})")
    return y


def _one_hot(y: np.ndarray, num_classes: int) -> np.ndarray:
    m = np.zeros((y.size, num_classes))
    m[np.arange(y.size), y] = 1.0
    return m


# ---------------------------------------------------------------------------
# graph builders


def ce_graph(logit_node: ad.Tensor, y: np.ndarray) -> ad.Tensor:
    return ad.softmax_cross_entropy(logit_node, y)


def margin_graph(leaves: dict, z: ad.Tensor, y: np.ndarray, embed_dim: int) -> ad.Tensor:
    """Mean hinge violation of the per-class Euclidean margin.

    Only the squared-Euclidean part of the distance is constrained; the
    cosine term plays no role here.
    """
    onehot = ad.constant(_one_hot(y, leaves["points"].value.shape[0]))
    own_point = ad.matmul(onehot, leaves["points"])  # (N, m)
    own_margin = ad.matmul(onehot, ad.softplus(leaves["raw_margins"]))  # (N, 1)
    sq_dist = ad.div(
        ad.reduce_sum(ad.square(ad.sub(z, own_point)), axis=1, keepdims=True),
        float(embed_dim),
    )
    return ad.reduce_mean(ad.relu(ad.sub(sq_dist, own_margin)))


def fisher_graph(z: ad.Tensor, y: np.ndarray, num_classes: int) -> ad.Tensor:
    """1 / (1 + S_b / S_w) over the batch.

    S_w sums squared deviations from per-class means, S_b sums
    count-weighted squared deviations of class means from the global
    mean.  Classes absent from the batch contribute nothing; S_w = 0
    (all classes collapsed) is guarded by ``FISHER_EPS``.
    """
    n = z.value.shape[0]
    onehot = _one_hot(_labels_array(y, num_classes), num_classes)
    counts = onehot.sum(axis=0)  # (K,)
    # rows of absent classes are all-zero, so the max() below never lies
    mean_sel = onehot.T / np.maximum(counts, 1.0)[:, None]  # (K, N)

    class_means = ad.matmul(ad.constant(mean_sel), z)  # (K, m)
    within = ad.reduce_sum(ad.square(ad.sub(z, ad.matmul(ad.constant(onehot), class_means))))
    global_mean = ad.matmul(ad.constant(np.full((1, n), 1.0 / n)), z)  # (1, m)
    between = ad.reduce_sum(
        ad.mul(ad.constant(counts[:, None]), ad.square(ad.sub(class_means, global_mean)))
    )
    ratio = ad.div(between, ad.add(within, FISHER_EPS))
    return ad.div(ad.constant(1.0), ad.add(ad.constant(1.0), ratio))


def total_loss(
    params: mdl.ModelParams,
    x: np.ndarray,
    labels,
    config: TrainConfig,
    dropout_masks=None,
):
    """Differentiable total objective for one batch.

    Returns ``(LossBreakdown, root, leaves)`` where ``root`` is the
    scalar graph node (gradients via ``autodiff.gradient(root,
    leaves.values())``) and ``leaves`` maps parameter names to their
    graph leaves.
    """
    x = np.asarray(x, dtype=np.float64)
    y = _labels_array(labels, params.num_classes)
    leaves = mdl.as_leaves(params)
    z = mdl.embed_graph(leaves, ad.constant(x), dropout_masks)
    logit_node = mdl.logits_graph(leaves, z, params.embed_dim, params.logit_scale)

    ce = ce_graph(logit_node, y)
    margin = margin_graph(leaves, z, y, params.embed_dim)
    fisher = fisher_graph(z, y, params.num_classes)

    root = ad.add(
        ad.add(ad.mul(ce, config.ce_weight), ad.mul(margin, config.margin_weight)),
        ad.mul(fisher, config.fisher_weight),
    )
    breakdown = LossBreakdown(
        ce=ce.item(),
        margin=margin.item(),
        fisher=fisher.item(),
        total=root.item(),
        ce_weight=config.ce_weight,
        margin_weight=config.margin_weight,
        fisher_weight=config.fisher_weight,
    )
    return breakdown, root, leaves


# ---------------------------------------------------------------------------
# plain-array entry points (single implementation: thin graph wrappers)


def ce_loss(logits: np.ndarray, labels) -> float:
    """Mean softmax cross-entropy of a logit batch against labels."""
    logit_node = ad.constant(np.asarray(logits, dtype=np.float64))
    y = _labels_array(labels, logit_node.value.shape[1])
    return ce_graph(logit_node, y).item()


def margin_loss(embeddings: np.ndarray, labels, params: mdl.ModelParams) -> float:
    """Mean margin violation of an embedding batch under ``params``."""
    z = ad.constant(np.asarray(embeddings, dtype=np.float64))
    y = _labels_array(labels, params.num_classes)
    leaves = mdl.as_leaves(params)
    return margin_graph(leaves, z, y, params.embed_dim).item()


def fisher_loss(embeddings: np.ndarray, labels, num_classes: int | None = None) -> float:
    """Scatter-ratio loss of an embedding batch; always in (0, 1]."""
    z = np.asarray(embeddings, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if num_classes is None:
        num_classes = int(y.max()) + 1 if y.size else 1
    return fisher_graph(ad.constant(z), y, num_classes).item()
