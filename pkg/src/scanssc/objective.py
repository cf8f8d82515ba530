"""The composite training objective.

    total = ce + scal_geo + scal_sem + lambda_d * depth + lambda_scan * (scan_dep + scan_wid + scan_hgt)

The scal terms follow the MonoScene affinity losses: precision, recall and
specificity of soft predictions, each penalised by -log. The depth term is a
plain scalar supplied by the caller.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from .scan_loss import scan_loss_terms
from .voxel import AXES, IGNORE_LABEL, ConfigError

REPORT_KEYS = ("ce", "scal_geo", "scal_sem", "depth", "scan_dep", "scan_wid", "scan_hgt", "total")


@dataclass(frozen=True)
class LossWeights:
    lambda_d: float = 0.001
    lambda_scan: float = 1.0

    def __post_init__(self):
        if self.lambda_d < 0 or self.lambda_scan < 0:
            raise ConfigError("loss weights must be nonnegative")


@dataclass(frozen=True)
class LossReport:
    ce: float
    scal_geo: float
    scal_sem: float
    depth: float
    scan_dep: float
    scan_wid: float
    scan_hgt: float
    total: float

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> LossReport:
        d = json.loads(text)
        return cls(**{k: float(d[k]) for k in REPORT_KEYS})


def _check_dims(g, labels):
    if g.shape[:3] != labels.shape:
        raise ConfigError(f"logit grid {g.shape} does not match label grid {labels.shape}")


def ce_loss(g, labels, class_weights=None, ignore_label=IGNORE_LABEL):
    """Mean over non-ignored voxels of w[y] * -log softmax(g)[y]."""
    g = ad.as_tensor(g)
    labels = np.asarray(labels)
    _check_dims(g, labels)
    P = g.shape[3]
    keep = labels != ignore_label
    n = int(keep.sum())
    if n == 0:
        warnings.warn("ce_loss: no labelled voxels, loss set to 0", RuntimeWarning, stacklevel=2)
        return ad.Tensor(0.0)
    sel = np.zeros(g.shape)
    np.put_along_axis(sel, np.where(keep, labels, 0)[..., None].astype(np.intp), 1.0, axis=-1)
    w = np.ones(P) if class_weights is None else np.asarray(class_weights, dtype=np.float64)
    sel *= keep[..., None] * w
    return ad.sum(ad.log_softmax(g, axis=-1) * sel) * (-1.0 / n)


def _neg_log_ratio(num, den):
    return ad.neg(ad.log(num / den))


def scal_losses(g, labels, ignore_label=IGNORE_LABEL):
    """(geo, sem) affinity losses on softmax probabilities.

    geo works on the occupied/empty reduction (1 - p_empty vs labels != 0).
    sem averages over classes present in the labels. Ratios whose defining
    ground-truth set is empty are skipped: precision and recall need a
    positive voxel, specificity needs a negative one.
    """
    g = ad.as_tensor(g)
    labels = np.asarray(labels)
    _check_dims(g, labels)
    P = g.shape[3]
    keep = labels != ignore_label
    prob = ad.softmax(g, axis=-1)
    kept = keep.astype(np.float64)

    def class_terms(p, target):
        # p: soft positives (tensor, ignored voxels still present); target: 0/1 array
        pos = target * kept
        neg = (1.0 - target) * kept
        terms = []
        if pos.sum() > 0:
            inter = ad.sum(p * pos)
            terms.append(_neg_log_ratio(inter, ad.sum(p * kept)))
            terms.append(_neg_log_ratio(inter, pos.sum()))
        if neg.sum() > 0:
            terms.append(_neg_log_ratio(ad.sum((1.0 - p) * neg), neg.sum()))
        return terms

    occupied = (labels != 0).astype(np.float64)
    geo = ad.Tensor(0.0)
    for t in class_terms(1.0 - prob[..., 0], occupied):
        geo = geo + t

    sem = ad.Tensor(0.0)
    count = 0
    for c in range(P):
        target = (labels == c).astype(np.float64)
        if (target * kept).sum() == 0:
            continue
        count += 1
        for t in class_terms(prob[..., c], target):
            sem = sem + t
    if count:
        sem = sem * (1.0 / count)
    return geo, sem


def total_loss(g, labels, *, weights: LossWeights = LossWeights(), scan_axes=AXES,
               scan_flips=(), flip_mode="reflect", depth_term=0.0, class_weights=None,
               ignore_label=IGNORE_LABEL):
    """Return ``(total_tensor, LossReport)``; disabled scan axes report 0."""
    g = ad.as_tensor(g)
    labels = np.asarray(labels)
    ce = ce_loss(g, labels, class_weights, ignore_label)
    geo, sem = scal_losses(g, labels, ignore_label)
    depth = ad.as_tensor(depth_term)
    scan = scan_loss_terms(g, labels, scan_axes, scan_flips, flip_mode, ignore_label)
    scan_sum = ad.Tensor(0.0)
    for t in scan.values():
        scan_sum = scan_sum + t
    total = ce + geo + sem + depth * weights.lambda_d + scan_sum * weights.lambda_scan
    values = {k: float(scan[k].data) if k in scan else 0.0 for k in AXES}
    report = LossReport(
        ce=ce.item(), scal_geo=geo.item(), scal_sem=sem.item(), depth=depth.item(),
        scan_dep=values["dep"], scan_wid=values["wid"], scan_hgt=values["hgt"],
        total=total.item(),
    )
    return total, report
