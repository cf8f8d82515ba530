"""Recall / IoU / mIoU per axis bin and per axis quarter.

Counts are pooled over a region before any ratio is taken. Ground-truth
voxels carrying the ignore label are dropped. A ratio whose denominator is
zero is undefined and reported as ``None``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .voxel import AXES, AXIS_NAMES, IGNORE_LABEL, ConfigError, axis_index

METRIC_KEYS = ("recall", "iou", "miou")


@dataclass(frozen=True)
class Counts:
    tp: np.ndarray  # per class
    fp: np.ndarray
    fn: np.ndarray
    occ_tp: int
    occ_fp: int
    occ_fn: int

    @classmethod
    def from_confusion(cls, cm) -> Counts:
        """From a (P, P) matrix indexed [gt, pred]; class 0 is empty."""
        cm = np.asarray(cm, dtype=np.int64)
        diag = np.diag(cm)
        return cls(
            tp=diag, fp=cm.sum(axis=0) - diag, fn=cm.sum(axis=1) - diag,
            occ_tp=int(cm[1:, 1:].sum()), occ_fp=int(cm[0, 1:].sum()),
            occ_fn=int(cm[1:, 0].sum()),
        )

    def __add__(self, other: Counts) -> Counts:
        return Counts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn,
                      self.occ_tp + other.occ_tp, self.occ_fp + other.occ_fp,
                      self.occ_fn + other.occ_fn)

    @property
    def occupied_gt(self) -> int:
        return self.occ_tp + self.occ_fn


def _region_key(shape, region):
    if region is None:
        return (slice(None),) * 3
    if len(region) != 3:
        raise ConfigError("a region needs one (start, stop) range per axis")
    key = []
    for (start, stop), n in zip(region, shape):
        if not 0 <= start <= stop <= n:
            raise ConfigError(f"region range ({start}, {stop}) outside [0, {n}]")
        key.append(slice(start, stop))
    return tuple(key)


def confusion_counts(pred, gt, num_classes, region=None, ignore_label=IGNORE_LABEL) -> Counts:
    """Per-class and occupancy counts inside ``region`` ((start, stop) per axis, 0-based)."""
    pred, gt = np.asarray(pred), np.asarray(gt)
    if pred.shape != gt.shape:
        raise ConfigError(f"prediction {pred.shape} and ground truth {gt.shape} differ")
    key = _region_key(gt.shape, region)
    cm = kernels.axis_confusion(pred[key], gt[key], 0, num_classes, ignore_label).sum(axis=0)
    return Counts.from_confusion(cm)


def _ratio(num, den):
    return num / den if den > 0 else None


def metrics_from_counts(c: Counts) -> dict:
    """recall and IoU on occupancy; mIoU over non-empty classes seen in pred or gt."""
    union = c.tp + c.fp + c.fn
    ious = [c.tp[k] / union[k] for k in range(1, len(union)) if union[k] > 0]
    return {
        "recall": _ratio(c.occ_tp, c.occ_tp + c.occ_fn),
        "iou": _ratio(c.occ_tp, c.occ_tp + c.occ_fp + c.occ_fn),
        "miou": float(np.mean(ious)) if ious else None,
    }


@dataclass(frozen=True)
class BinRow:
    start: int  # 0-based, half-open
    stop: int
    occupied_gt: int
    recall: float | None
    iou: float | None
    miou: float | None
    counts: Counts = field(repr=False, compare=False, default=None)


@dataclass(frozen=True)
class AxisBinReport:
    axis: str
    bin_count: int
    rows: tuple[BinRow, ...]

    def series(self, key) -> list:
        return [getattr(r, key) for r in self.rows]

    def to_csv(self) -> str:
        return _rows_csv(self.axis, [("bin", i, r) for i, r in enumerate(self.rows)])

    def to_dict(self) -> dict:
        return {"axis": self.axis, "bin_count": self.bin_count,
                "rows": [_row_dict(r) for r in self.rows]}


@dataclass(frozen=True)
class SegmentReport:
    axis: str
    rows: tuple[BinRow, ...]

    def to_table_csv(self, digits=3) -> str:
        """Four rows (1)-(4) with Recall, IoU, mIoU columns."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["segment", "Recall", "IoU", "mIoU"])
        for i, r in enumerate(self.rows):
            w.writerow([f"({i + 1})"] + [_fmt(getattr(r, k), digits) for k in METRIC_KEYS])
        return buf.getvalue()

    def to_csv(self) -> str:
        return _rows_csv(self.axis, [("segment", i + 1, r) for i, r in enumerate(self.rows)])

    def to_dict(self) -> dict:
        return {"axis": self.axis, "rows": [_row_dict(r) for r in self.rows]}


def _fmt(v, digits):
    return "null" if v is None else f"{v:.{digits}f}"


def _full(v):
    return "null" if v is None else repr(float(v))


def _row_dict(r: BinRow) -> dict:
    return {"start": r.start, "stop": r.stop, "occupied_gt": r.occupied_gt,
            **{k: getattr(r, k) for k in METRIC_KEYS}}


def _rows_csv(axis, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    kind = rows[0][0] if rows else "bin"
    w.writerow(["axis", kind, "start", "stop", "occupied_gt", "recall", "iou", "miou"])
    for _, i, r in rows:
        w.writerow([axis, i, r.start, r.stop, r.occupied_gt,
                    _full(r.recall), _full(r.iou), _full(r.miou)])
    return buf.getvalue()


def _make_row(start, stop, counts: Counts) -> BinRow:
    m = metrics_from_counts(counts)
    return BinRow(start, stop, counts.occupied_gt, m["recall"], m["iou"], m["miou"], counts)


def bin_edges(extent: int, bin_count: int) -> list[tuple[int, int]]:
    """Consecutive ranges of ceil(extent / bin_count) indices; the last may be short."""
    if bin_count < 1:
        raise ConfigError(f"bin count must be >= 1, got {bin_count}")
    size = math.ceil(extent / bin_count)
    return [(s, min(s + size, extent)) for s in range(0, extent, size)]


def segment_edges(extent: int, parts: int = 4) -> list[tuple[int, int]]:
    if extent < parts:
        raise ConfigError(f"axis extent {extent} is shorter than {parts} segments")
    cuts = [i * extent // parts for i in range(parts + 1)]
    return list(zip(cuts[:-1], cuts[1:]))


def _slab_counts(pred, gt, axis, num_classes, ignore_label):
    pred, gt = np.asarray(pred), np.asarray(gt)
    if pred.shape != gt.shape:
        raise ConfigError(f"prediction {pred.shape} and ground truth {gt.shape} differ")
    return kernels.axis_confusion(pred, gt, axis, num_classes, ignore_label)


def _pooled(slabs, edges):
    return tuple(_make_row(s, e, Counts.from_confusion(slabs[s:e].sum(axis=0))) for s, e in edges)


def axis_bin_report(pred, gt, axis, bin_count, num_classes,
                    ignore_label=IGNORE_LABEL) -> AxisBinReport:
    a = axis_index(axis)
    edges = bin_edges(np.asarray(gt).shape[a], bin_count)
    slabs = _slab_counts(pred, gt, a, num_classes, ignore_label)
    return AxisBinReport(AXES[a], bin_count, _pooled(slabs, edges))


def segment_report(pred, gt, axis, num_classes, ignore_label=IGNORE_LABEL) -> SegmentReport:
    a = axis_index(axis)
    edges = segment_edges(np.asarray(gt).shape[a])
    slabs = _slab_counts(pred, gt, a, num_classes, ignore_label)
    return SegmentReport(AXES[a], _pooled(slabs, edges))


def segment_table_csv(reports: dict, digits=3) -> str:
    """Side-by-side segment table: one Recall/IoU/mIoU column triple per axis."""
    axes = [a for a in AXES if a in reports]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["segment"] + [f"{AXIS_NAMES[a]} {k}" for a in axes for k in ("Recall", "IoU", "mIoU")])
    for i in range(4):
        row = [f"({i + 1})"]
        for a in axes:
            r = reports[a].rows[i]
            row += [_fmt(getattr(r, k), digits) for k in METRIC_KEYS]
        w.writerow(row)
    return buf.getvalue()


def reports_json(bin_reports: dict, segment_reports: dict) -> str:
    return json.dumps({
        "bins": {a: r.to_dict() for a, r in bin_reports.items()},
        "segments": {a: r.to_dict() for a, r in segment_reports.items()},
    }, indent=2, sort_keys=True)
