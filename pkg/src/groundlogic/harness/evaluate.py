"""Batch evaluation with failure accounting."""

from __future__ import annotations

import json
import logging
import threading
import time
from concurrent.futures import FIRST_COMPLETED, ThreadPoolExecutor, wait
from dataclasses import dataclass, field
from typing import Callable, Sequence

from PIL import Image

from ..automaton import AutomatonConfig, GroundingResult, run
from ..backends import BackendSuite
from ..spatial import Bitmask, box_iou, mask_intersection_union
from .dataset import DatasetEntry

log = logging.getLogger(__name__)

REPORT_SCHEMA_VERSION = 1
HIT_THRESHOLD = 0.5
DEFAULT_TIMEOUT = 120.0


@dataclass
class SampleRecord:
    id: str
    failed: bool
    status: str | None = None
    error: dict | None = None
    target_id: str | None = None
    pred_box: list[int] | None = None
    iou: float | None = None
    hit: bool = False
    # Mask accumulation terms; None when the entry has no ground-truth mask.
    intersection: int | None = None
    union: int | None = None
    rows: list[int] = field(default_factory=list)
    seconds: float = 0.0

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "failed": self.failed,
            "status": self.status,
            "error": self.error,
            "target_id": self.target_id,
            "pred_box": self.pred_box,
            "iou": self.iou,
            "hit": self.hit,
            "intersection": self.intersection,
            "union": self.union,
            "rows": self.rows,
        }


def score_sample(entry: DatasetEntry, result: GroundingResult | None, error: dict | None = None) -> SampleRecord:
    """Per-sample IoU terms; a failed sample keeps its error and scores nothing."""
    failed = error is not None or result is None or result.error is not None
    rec = SampleRecord(entry.id, failed)
    if result is not None:
        rec.status = result.status.value
        rec.error = result.error
        rec.target_id = result.target_id
        rec.rows = result.rows
        if result.target_box is not None:
            rec.pred_box = result.target_box.as_list()
    if error is not None:
        rec.error = error
    if failed:
        return rec

    pred = result.target_box
    if entry.gt_box is not None:
        rec.iou = box_iou(pred, entry.gt_box) if pred is not None else 0.0
    if entry.gt_mask is not None:
        gt = entry.gt_mask
        if result.mask is not None:
            pred_mask = result.mask
        elif pred is not None:
            pred_mask = Bitmask.from_box(pred, gt.width, gt.height)
        else:
            pred_mask = None
        if pred_mask is None:
            rec.intersection, rec.union = 0, gt.area
        else:
            rec.intersection, rec.union = mask_intersection_union(pred_mask, gt)
        if rec.iou is None:
            rec.iou = rec.intersection / rec.union if rec.union else 0.0
    rec.hit = rec.iou is not None and rec.iou >= HIT_THRESHOLD
    return rec


def _split(records: Sequence[SampleRecord], entries: Sequence[DatasetEntry], include_errors: bool) -> dict:
    ious, hits, inter, union = [], [], 0, 0
    for rec, entry in zip(records, entries):
        if rec.failed and not include_errors:
            continue
        ious.append(0.0 if rec.failed else rec.iou)
        hits.append(False if rec.failed else rec.hit)
        if entry.gt_mask is not None:
            if rec.failed:
                union += entry.gt_mask.area
            else:
                inter += rec.intersection
                union += rec.union
    has_masks = any(e.gt_mask is not None for e in entries)
    n = len(ious)
    return {
        "n": n,
        "accuracy_at_50": sum(hits) / n if n else None,
        "mean_iou": sum(ious) / n if n else None,
        "ciou": (inter / union if union else 0.0) if has_masks and n else None,
    }


def compute_metrics(records: Sequence[SampleRecord], entries: Sequence[DatasetEntry]) -> dict:
    n_failed = sum(r.failed for r in records)
    return {
        "n_total": len(records),
        "n_failed": n_failed,
        "failure_rate": n_failed / len(records) if records else 0.0,
        "including_errors": _split(records, entries, True),
        "excluding_errors": _split(records, entries, False),
    }


@dataclass
class EvalReport:
    metrics: dict
    samples: list[SampleRecord]
    wall_seconds: float = 0.0

    @property
    def n_total(self) -> int:
        return self.metrics["n_total"]

    @property
    def n_failed(self) -> int:
        return self.metrics["n_failed"]

    def to_dict(self, include_timing: bool = False) -> dict:
        d = {"schema_version": REPORT_SCHEMA_VERSION, **self.metrics,
             "samples": [s.to_dict() for s in self.samples]}
        if include_timing:
            d["timing"] = {
                "wall_seconds": self.wall_seconds,
                "sample_seconds": {s.id: s.seconds for s in self.samples},
            }
        return d

    def to_json(self, include_timing: bool = False) -> str:
        return json.dumps(self.to_dict(include_timing), indent=2, sort_keys=True) + "\n"


Runner = Callable[[Image.Image, str, BackendSuite, AutomatonConfig], GroundingResult]


def evaluate(
    entries: Sequence[DatasetEntry],
    suite: BackendSuite,
    config: AutomatonConfig = AutomatonConfig(),
    parallelism: int = 1,
    timeout: float = DEFAULT_TIMEOUT,
    runner: Runner = run,
) -> EvalReport:
    """Run every entry; per-sample problems become failed records, never exceptions.

    A sample still running after ``timeout`` seconds is marked failed and
    abandoned (its worker thread is not interrupted).
    """
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")
    started_at: dict[int, float] = {}
    lock = threading.Lock()

    def task(i: int, entry: DatasetEntry):
        with lock:
            started_at[i] = time.monotonic()
        with Image.open(entry.image) as img:
            image = img.convert("RGB")
        return runner(image, entry.query, suite, config)

    t0 = time.monotonic()
    outcomes: dict[int, tuple[GroundingResult | None, dict | None, float]] = {}
    pool = ThreadPoolExecutor(max_workers=parallelism)
    try:
        pending = {pool.submit(task, i, e): i for i, e in enumerate(entries)}
        while pending:
            done, _ = wait(pending, timeout=0.05, return_when=FIRST_COMPLETED)
            now = time.monotonic()
            for fut in done:
                i = pending.pop(fut)
                elapsed = now - started_at.get(i, now)
                try:
                    outcomes[i] = (fut.result(), None, elapsed)
                except Exception as exc:  # noqa: BLE001 - recorded per sample
                    log.warning("sample %s failed: %s", entries[i].id, exc)
                    outcomes[i] = (None, {"kind": type(exc).__name__, "detail": str(exc)}, elapsed)
            with lock:
                overdue = [f for f, i in pending.items() if i in started_at and now - started_at[i] > timeout]
            for fut in overdue:
                i = pending.pop(fut)
                outcomes[i] = (None, {"kind": "Timeout", "detail": f"exceeded {timeout:g} s"}, now - started_at[i])
    finally:
        pool.shutdown(wait=False, cancel_futures=True)

    records = []
    for i, entry in enumerate(entries):
        result, error, seconds = outcomes[i]
        rec = score_sample(entry, result, error)
        rec.seconds = seconds
        records.append(rec)
    return EvalReport(compute_metrics(records, entries), records, time.monotonic() - t0)
