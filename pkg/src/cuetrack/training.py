"""Detection-aware training: match detections to sparse ground truth,
build dustbin-augmented target matrices with per-multiplicity marginals,
sample frame pairs, and run the SGD loop."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import matching
from .autodiff import Tensor
from .geometry import Box, iou
from .model import AssocModel
from .simulator import FrameSample


class TrainingError(Exception):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 12
    batch_pairs: int = 16
    learning_rate: float = 0.008
    weight_decay: float = 1e-4
    max_interval_s: float = 3.0
    iou_match_thr: float = 0.7
    sinkhorn_iters: int = 100
    gt_only: bool = False   # ablation: train on clean GT boxes, no DAT channel
    seed: int = 0

    def __post_init__(self):
        if min(self.epochs, self.batch_pairs) < 1 or self.learning_rate < 0:
            raise TrainingError("invalid training configuration")
        if self.max_interval_s <= 0:
            raise TrainingError("max_interval_s must be positive")


@dataclass
class TargetMatrix:
    values: np.ndarray          # (M+1, N+1) binary
    row_marginals: np.ndarray   # length M+1
    col_marginals: np.ndarray   # length N+1


def dat_match(det_boxes: list[Box], gt: list[tuple[int, Box]],
              iou_thr: float) -> list[int | None]:
    """Assign each detection the id of its best-IoU GT box when that IoU
    reaches the threshold; several detections may share one GT id."""
    if not 0 < iou_thr <= 1:
        raise TrainingError("iou_thr must be in (0, 1]")
    ids: list[int | None] = []
    for box in det_boxes:
        best_id, best_iou = None, 0.0
        for gid, gbox in gt:
            v = iou(box, gbox)
            if v > best_iou:
                best_id, best_iou = gid, v
        ids.append(best_id if best_iou >= iou_thr else None)
    return ids


def build_target(key_ids: list[int | None],
                 ref_ids: list[int | None]) -> TargetMatrix:
    """Binary (M+1, N+1) target with dustbin assignments and marginals.

    A shared id marks all its (key, ref) cells as matches; a GT-matched
    detection with no counterpart goes to the dustbin. Detections with no
    GT id get no target cells at all (loss-masked) but keep unit marginal
    mass, which the opposite dustbin absorbs.
    """
    m, n = len(key_ids), len(ref_ids)
    t = np.zeros((m + 1, n + 1))
    for i, kid in enumerate(key_ids):
        if kid is None:
            continue
        hits = [j for j, rid in enumerate(ref_ids) if rid == kid]
        if hits:
            for j in hits:
                t[i, j] = 1.0
        else:
            t[i, n] = 1.0
    for j, rid in enumerate(ref_ids):
        if rid is None:
            continue
        if not any(kid == rid for kid in key_ids):
            t[m, j] = 1.0
    rows = np.ones(m + 1)
    cols = np.ones(n + 1)
    rows[:m] = np.maximum(1.0, t[:m, :n].sum(axis=1))
    cols[:n] = np.maximum(1.0, t[:m, :n].sum(axis=0))
    # each dustbin absorbs whatever the opposite side cannot place
    rows[m] = cols[:n].sum()
    cols[n] = rows[:m].sum()
    return TargetMatrix(values=t, row_marginals=rows, col_marginals=cols)


def sample_pair(sequence: list[FrameSample], max_interval_s: float,
                rng: np.random.Generator) -> tuple[FrameSample, FrameSample]:
    """Uniform ordered pair of frames with 0 < |dt| <= max_interval_s."""
    eligible = [(i, j) for i in range(len(sequence)) for j in range(len(sequence))
                if i != j and 0 < abs(sequence[i].time_s - sequence[j].time_s)
                <= max_interval_s]
    if not eligible:
        raise TrainingError("no eligible frame pair within the interval")
    i, j = eligible[rng.integers(len(eligible))]
    return sequence[i], sequence[j]


def _pair_loss(asm: AssocModel, key: FrameSample, ref: FrameSample,
               cfg: TrainConfig, image_h: float, image_w: float,
               leaves) -> Tensor | None:
    def frame_dets(fr: FrameSample) -> list:
        return _gt_channel(fr) if cfg.gt_only else fr.detections

    key_dets = frame_dets(key)
    ref_dets = frame_dets(ref)
    if not key_dets or not ref_dets:
        return None
    if key.gt is None or ref.gt is None:
        raise TrainingError("training frames require ground truth")
    key_ids = dat_match([d.box for d in key_dets],
                        [(tid, box) for tid, box, _ in key.gt], cfg.iou_match_thr)
    ref_ids = dat_match([d.box for d in ref_dets],
                        [(tid, box) for tid, box, _ in ref.gt], cfg.iou_match_thr)
    target = build_target(key_ids, ref_ids)
    if target.values.sum() == 0:
        return None
    log_plan, _ = asm.forward_pair(key_dets, ref_dets, image_h, image_w,
                                   marginals=(target.row_marginals,
                                              target.col_marginals),
                                   leaves=leaves,
                                   sinkhorn_iters=cfg.sinkhorn_iters)
    return matching.association_loss(log_plan, target.values)


def _gt_channel(fr: FrameSample) -> list:
    """Clean channel for GT-only training: boxes come verbatim from the
    annotation; cue vectors are borrowed from the best-overlapping
    detection. GT boxes with no overlapping detection are skipped."""
    from .simulator import Detection

    out = []
    for tid, box, cid in (fr.gt or []):
        best, best_iou = None, 0.0
        for d in fr.detections:
            v = iou(box, d.box)
            if v > best_iou:
                best, best_iou = d, v
        if best is None or best_iou <= 0:
            continue
        out.append(Detection(box, 1.0, best.semantic_vec, best.appearance_vec, cid))
    return out


def train(dataset: list[list[FrameSample]], cfg: TrainConfig, asm: AssocModel,
          image_h: float, image_w: float,
          log_every: int = 0) -> list[tuple[int, int, float]]:
    """SGD (no momentum) with decoupled weight decay; returns the loss
    history as (step, epoch, loss) rows."""
    if not dataset:
        raise TrainingError("empty dataset")
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    store = asm.store
    history: list[tuple[int, int, float]] = []
    step = 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(dataset))
        batch: list[tuple[FrameSample, FrameSample]] = []
        for seq_idx in order:
            seq = dataset[seq_idx]
            try:
                batch.append(sample_pair(seq, cfg.max_interval_s, rng))
            except TrainingError:
                continue
            if len(batch) < cfg.batch_pairs:
                continue
            loss_val = _train_step(asm, batch, cfg, image_h, image_w)
            if loss_val is not None:
                if not np.isfinite(loss_val):
                    raise TrainingError(f"non-finite loss at step {step}")
                history.append((step, epoch, loss_val))
                if log_every and step % log_every == 0:
                    print(f"step {step} epoch {epoch} loss {loss_val:.4f}")
                step += 1
            batch = []
        if batch:
            loss_val = _train_step(asm, batch, cfg, image_h, image_w)
            if loss_val is not None:
                if not np.isfinite(loss_val):
                    raise TrainingError(f"non-finite loss at step {step}")
                history.append((step, epoch, loss_val))
                step += 1
    return history


def _train_step(asm: AssocModel, batch, cfg: TrainConfig,
                image_h: float, image_w: float) -> float | None:
    store = asm.store
    store.zero_grads()
    total_loss = 0.0
    n_used = 0
    for key, ref in batch:
        leaves = store.leaves()
        loss = _pair_loss(asm, key, ref, cfg, image_h, image_w, leaves)
        if loss is None:
            continue
        loss.backward(np.ones((1, 1)))
        store.harvest(leaves)
        total_loss += float(loss.data[0, 0])
        n_used += 1
    if n_used == 0:
        return None
    lr = cfg.learning_rate
    for name in store.entries:
        store.entries[name] -= lr * (store.grads[name] / n_used)
        store.entries[name] -= lr * cfg.weight_decay * store.entries[name]
    return total_loss / n_used


def write_loss_history(history: list[tuple[int, int, float]], path: str) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["step", "epoch", "loss"])
        for step, epoch, loss in history:
            writer.writerow([step, epoch, f"{loss:.8f}"])
