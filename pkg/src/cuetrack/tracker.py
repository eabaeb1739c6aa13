"""Online inference: a tracklet memory refreshed per frame, matched to
incoming detections through the trained association model's transport
plan, with time-based expiry."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import heads, matching, stog
from .geometry import Box
from .model import AssocModel
from .simulator import Detection


class TrackerError(Exception):
    pass


@dataclass(frozen=True)
class TrackerConfig:
    match_score_thr: float = 0.2
    memo_length_s: float = 10.0
    sinkhorn_iters: int = 100
    fps: float = 2.0

    def __post_init__(self):
        if not 0 < self.match_score_thr < 1:
            raise TrackerError("match_score_thr must be in (0, 1)")
        if self.memo_length_s <= 0:
            raise TrackerError("memo_length_s must be positive")


@dataclass
class Tracklet:
    track_id: int
    last_frame_id: int
    last_time_s: float
    box: Box
    e_sem: np.ndarray
    e_loc: np.ndarray
    e_app: np.ndarray
    score: float
    class_id: int = -1


def dynamic_threshold(num_classes: int) -> float:
    """Detection score threshold scaled to the size of the class
    vocabulary: (1 / num_classes) * 1.001."""
    if num_classes < 1:
        raise TrackerError("num_classes must be >= 1")
    thr = (1.0 / num_classes) * 1.001
    if thr >= 1.0:
        import warnings
        warnings.warn("dynamic threshold >= 1 filters every detection")
    return thr


def match_frame(detections: list[Detection], memory: list[Tracklet],
                asm: AssocModel, cfg: TrackerConfig, next_id: int,
                image_h: float, image_w: float) -> tuple[list[int], int]:
    """Assign a tracklet id (existing or fresh) to each detection.

    Detections embed as the key frame and memory as the reference frame;
    the dustbin-augmented transport plan is resolved greedily in
    descending probability with the matching threshold.
    """
    if not detections:
        return [], next_id
    if not memory:
        ids = list(range(next_id, next_id + len(detections)))
        return ids, next_id + len(detections)
    leaves = asm.store.leaves()
    key_fused = asm.embed(detections, image_h, image_w, leaves)
    mem_sem = np.stack([t.e_sem for t in memory])
    mem_loc = np.stack([t.e_loc for t in memory])
    mem_app = np.stack([t.e_app for t in memory])
    ref_fused = ad.constant(mem_sem + mem_loc + mem_app)
    log_plan = asm.pair_log_plan(key_fused, ref_fused, leaves,
                                 sinkhorn_iters=cfg.sinkhorn_iters)
    plan = np.exp(log_plan.data)[:-1, :-1]  # real detections x real tracklets
    m, n = plan.shape
    order = sorted(((i, j) for i in range(m) for j in range(n)),
                   key=lambda ij: (-plan[ij], ij[0], ij[1]))
    assigned: dict[int, int] = {}
    claimed: set[int] = set()
    for i, j in order:
        if plan[i, j] < cfg.match_score_thr:
            break
        if i in assigned or j in claimed:
            continue
        assigned[i] = memory[j].track_id
        claimed.add(j)
    ids = []
    for i in range(m):
        if i in assigned:
            ids.append(assigned[i])
        else:
            ids.append(next_id)
            next_id += 1
    return ids, next_id


def update_memo(memory: list[Tracklet], ids: list[int],
                detections: list[Detection], frame_id: int, time_s: float,
                asm: AssocModel, cfg: TrackerConfig,
                image_h: float, image_w: float) -> list[Tracklet]:
    """Refresh matched tracklets, append new ones, expire stale ones."""
    if len(set(ids)) != len(ids):
        raise TrackerError("duplicate id in frame assignments")
    by_id = {t.track_id: t for t in memory}
    if detections:
        e_sem, e_loc, e_app = asm.embed_cues_np(detections, image_h, image_w)
        for i, (tid, det) in enumerate(zip(ids, detections)):
            t = by_id.get(tid)
            if t is None:
                by_id[tid] = Tracklet(tid, frame_id, time_s, det.box,
                                      e_sem[i], e_loc[i], e_app[i],
                                      det.score, det.class_id)
            else:
                t.last_frame_id = frame_id
                t.last_time_s = time_s
                t.box = det.box
                t.e_sem, t.e_loc, t.e_app = e_sem[i], e_loc[i], e_app[i]
                t.score = det.score
                t.class_id = det.class_id
    return [t for t in sorted(by_id.values(), key=lambda t: t.track_id)
            if time_s - t.last_time_s <= cfg.memo_length_s]


def track_sequence(frames: list[tuple[float, list[Detection]]], asm: AssocModel,
                   cfg: TrackerConfig,
                   image_h: float, image_w: float) -> list[tuple]:
    """Run the online loop; returns (frame, id, box, score, class) rows
    in frame-major, id-minor order."""
    memory: list[Tracklet] = []
    next_id = 0
    rows = []
    prev_t = None
    for frame_id, (time_s, detections) in enumerate(frames):
        if prev_t is not None and time_s <= prev_t:
            raise TrackerError("frames out of time order")
        prev_t = time_s
        ids, next_id = match_frame(detections, memory, asm, cfg, next_id,
                                   image_h, image_w)
        memory = update_memo(memory, ids, detections, frame_id, time_s, asm,
                             cfg, image_h, image_w)
        for tid, det in sorted(zip(ids, detections), key=lambda p: p[0]):
            rows.append((frame_id, tid, det.box, det.score, det.class_id))
    return rows


def write_results(rows: list[tuple], path: str) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["frame", "id", "x_min", "y_min", "x_max", "y_max",
                         "score", "class_id"])
        for frame_id, tid, box, score, class_id in rows:
            writer.writerow([frame_id, tid,
                             f"{box.x_min:.4f}", f"{box.y_min:.4f}",
                             f"{box.x_max:.4f}", f"{box.y_max:.4f}",
                             f"{score:.4f}", class_id])


def read_results(path: str) -> list[tuple]:
    rows = []
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        for rec in reader:
            rows.append((int(rec["frame"]), int(rec["id"]),
                         Box(float(rec["x_min"]), float(rec["y_min"]),
                             float(rec["x_max"]), float(rec["y_max"])),
                         float(rec["score"]), int(rec["class_id"])))
    return rows
