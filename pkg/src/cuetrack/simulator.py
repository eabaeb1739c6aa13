"""Synthetic multi-class scene simulator.

Generates reproducible tracking sequences: class-conditioned motion
(linear / sinusoidal / random walk), aspect-ratio dynamics, class-stable
semantic vectors, identity-stable appearance vectors, optional absence
windows, and a noisy detection channel (jitter, drops, false positives)
feeding detection-aware training.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field, asdict

import numpy as np

from .geometry import Box, class_agnostic_nms


class SimulatorError(Exception):
    pass


@dataclass
class Detection:
    box: Box
    score: float
    semantic_vec: np.ndarray
    appearance_vec: np.ndarray
    class_id: int = -1


@dataclass
class FrameSample:
    frame_id: int
    time_s: float
    detections: list[Detection]
    gt: list[tuple[int, Box, int]] | None = None  # (track id, box, class id)


@dataclass(frozen=True)
class ClassProfile:
    class_id: int
    motion_kind: str = "linear"          # linear | sinusoidal | random_walk
    speed_px_per_s: float = 10.0
    arc_rate: float = 0.05               # expected |d(w/h)| per second
    size_px: tuple[float, float] = (60.0, 60.0)

    def __post_init__(self):
        if self.motion_kind not in ("linear", "sinusoidal", "random_walk"):
            raise SimulatorError(f"unknown motion kind {self.motion_kind!r}")
        if self.speed_px_per_s < 0 or self.arc_rate < 0:
            raise SimulatorError("speed and arc rate must be non-negative")


@dataclass(frozen=True)
class NoiseConfig:
    semantic_sigma: float = 0.05
    appearance_sigma: float = 0.05
    box_jitter_sigma: float = 0.0
    drop_prob: float = 0.0
    fp_rate: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.drop_prob <= 1.0:
            raise SimulatorError("drop_prob must be in [0, 1]")


@dataclass(frozen=True)
class AbsenceWindow:
    object_index: int
    start_s: float
    duration_s: float


@dataclass
class SceneConfig:
    image_h: float = 600.0
    image_w: float = 800.0
    fps: float = 2.0
    duration_s: float = 12.0
    profiles: tuple[ClassProfile, ...] = (ClassProfile(0),)
    objects_per_class: int = 3
    semantic_dim: int = 16
    appearance_dim: int = 16
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    lookalike_appearance: bool = False
    absence_windows: tuple[AbsenceWindow, ...] = ()
    gt_annotated_fraction: float = 1.0
    max_detections: int = 50
    nms_iou_thr: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.fps <= 0 or self.duration_s <= 0:
            raise SimulatorError("fps and duration must be positive")
        if not self.profiles or self.objects_per_class < 1:
            raise SimulatorError("need at least one profile and one object")
        if not 0.0 < self.gt_annotated_fraction <= 1.0:
            raise SimulatorError("gt_annotated_fraction must be in (0, 1]")


def _hash_rng(*parts) -> np.random.Generator:
    digest = hashlib.sha256("/".join(str(p) for p in parts).encode()).digest()
    return np.random.Generator(np.random.PCG64(int.from_bytes(digest[:8], "little")))


def class_prototype(class_id: int, dim: int) -> np.ndarray:
    """Deterministic unit semantic prototype, stable across scenes."""
    v = _hash_rng("semantic_prototype", class_id, dim).normal(size=dim)
    return v / np.linalg.norm(v)


def _appearance_anchor(class_id: int, dim: int) -> np.ndarray:
    v = _hash_rng("appearance_anchor", class_id, dim).normal(size=dim)
    return v / np.linalg.norm(v)


class _ObjectState:
    """Trajectory generator for one simulated object."""

    def __init__(self, track_id: int, profile: ClassProfile, cfg: SceneConfig,
                 rng: np.random.Generator):
        self.track_id = track_id
        self.profile = profile
        w, h = cfg.image_w, cfg.image_h
        self.pos = np.array([rng.uniform(0.15 * w, 0.85 * w),
                             rng.uniform(0.15 * h, 0.85 * h)])
        theta = rng.uniform(0, 2 * np.pi)
        self.direction = np.array([np.cos(theta), np.sin(theta)])
        self.phase = rng.uniform(0, 2 * np.pi)
        self.sin_amp = rng.uniform(0.5, 1.5) * profile.speed_px_per_s
        self.sin_freq = rng.uniform(0.3, 0.8)  # Hz
        mean_w, mean_h = profile.size_px
        self.area = mean_w * mean_h
        self.aspect = mean_w / mean_h
        self.rng = rng
        # identity appearance vector, optionally near the class anchor
        raw = rng.normal(size=cfg.appearance_dim)
        raw /= np.linalg.norm(raw)
        if cfg.lookalike_appearance:
            anchor = _appearance_anchor(profile.class_id, cfg.appearance_dim)
            raw = anchor + 0.15 * raw
            raw /= np.linalg.norm(raw)
        self.appearance = raw

    def step(self, dt: float, t: float, cfg: SceneConfig) -> None:
        kind = self.profile.motion_kind
        speed = self.profile.speed_px_per_s
        if kind == "linear":
            vel = speed * self.direction
        elif kind == "sinusoidal":
            perp = np.array([-self.direction[1], self.direction[0]])
            omega = 2 * np.pi * self.sin_freq
            wobble = self.sin_amp * omega * np.cos(omega * t + self.phase)
            vel = speed * self.direction + wobble * perp
        else:  # random walk
            theta = self.rng.uniform(0, 2 * np.pi)
            vel = speed * np.array([np.cos(theta), np.sin(theta)])
        self.pos = self.pos + vel * dt
        # reflect at image borders to keep the object in view
        for axis, extent in ((0, cfg.image_w), (1, cfg.image_h)):
            if self.pos[axis] < 0:
                self.pos[axis] = -self.pos[axis]
                self.direction[axis] = -self.direction[axis]
            elif self.pos[axis] > extent:
                self.pos[axis] = 2 * extent - self.pos[axis]
                self.direction[axis] = -self.direction[axis]
        # aspect-ratio random walk at the profile's deformation rate
        self.aspect *= np.exp(self.rng.normal(0.0, self.profile.arc_rate * dt))
        self.aspect = float(np.clip(self.aspect, 0.2, 5.0))

    def box(self, cfg: SceneConfig) -> Box:
        w = np.sqrt(self.area * self.aspect)
        h = np.sqrt(self.area / self.aspect)
        x0 = np.clip(self.pos[0] - w / 2, 0, cfg.image_w - 1)
        y0 = np.clip(self.pos[1] - h / 2, 0, cfg.image_h - 1)
        x1 = np.clip(self.pos[0] + w / 2, x0 + 1e-3, cfg.image_w)
        y1 = np.clip(self.pos[1] + h / 2, y0 + 1e-3, cfg.image_h)
        return Box(float(x0), float(y0), float(x1), float(y1))


def generate(cfg: SceneConfig, sequence_seed: int | None = None) -> list[FrameSample]:
    """One sequence of frames with full ground truth and noisy detections."""
    seed = cfg.seed if sequence_seed is None else sequence_seed
    rng = _hash_rng("scene", seed)
    objects: list[_ObjectState] = []
    tid = 0
    for profile in cfg.profiles:
        for _ in range(cfg.objects_per_class):
            objects.append(_ObjectState(tid, profile, cfg, _hash_rng("object", seed, tid)))
            tid += 1
    absences = {(a.object_index): a for a in cfg.absence_windows}
    # sparse annotation: only a deterministic subset of tracks carries GT
    annotated = {obj.track_id for obj in objects
                 if cfg.gt_annotated_fraction >= 1.0
                 or _hash_rng("annotated", seed, obj.track_id).uniform()
                 < cfg.gt_annotated_fraction}
    dt = 1.0 / cfg.fps
    n_frames = int(round(cfg.duration_s * cfg.fps))
    frames: list[FrameSample] = []
    for fi in range(n_frames):
        t = fi * dt
        if fi > 0:
            for obj in objects:
                obj.step(dt, t, cfg)
        visible = []
        for idx, obj in enumerate(objects):
            a = absences.get(idx)
            if a is not None and a.start_s <= t < a.start_s + a.duration_s:
                continue
            visible.append((obj.track_id, obj.box(cfg), obj.profile.class_id))
        detections = detect(visible, cfg, _hash_rng("detect", seed, fi),
                            appearance_by_id={o.track_id: o.appearance for o in objects})
        gt = [g for g in visible if g[0] in annotated]
        frames.append(FrameSample(frame_id=fi, time_s=t, detections=detections, gt=gt))
    return frames


def detect(gt: list[tuple[int, Box, int]], cfg: SceneConfig,
           rng: np.random.Generator,
           appearance_by_id: dict[int, np.ndarray]) -> list[Detection]:
    """Noisy detection channel over one frame's ground truth."""
    noise = cfg.noise
    raw: list[Detection] = []
    for track_id, box, class_id in gt:
        if rng.uniform() < noise.drop_prob:
            continue
        if noise.box_jitter_sigma > 0:
            j = rng.normal(0, noise.box_jitter_sigma, size=4)
            x0, y0 = box.x_min + j[0], box.y_min + j[1]
            x1, y1 = box.x_max + j[2], box.y_max + j[3]
            box = Box(min(x0, x1), min(y0, y1), max(x0, x1), max(y0, y1))
        sem = class_prototype(class_id, cfg.semantic_dim) \
            + rng.normal(0, noise.semantic_sigma, size=cfg.semantic_dim)
        app = appearance_by_id[track_id] \
            + rng.normal(0, noise.appearance_sigma, size=cfg.appearance_dim)
        score = float(np.clip(rng.normal(0.85, 0.08), 1e-3, 1.0))
        raw.append(Detection(box, score, sem, app, class_id))
    n_fp = rng.poisson(noise.fp_rate) if noise.fp_rate > 0 else 0
    for _ in range(n_fp):
        cx = rng.uniform(0, cfg.image_w)
        cy = rng.uniform(0, cfg.image_h)
        w = rng.uniform(20, 100)
        h = rng.uniform(20, 100)
        box = Box(max(0.0, cx - w / 2), max(0.0, cy - h / 2),
                  min(cfg.image_w, cx + w / 2), min(cfg.image_h, cy + h / 2))
        sem = rng.normal(size=cfg.semantic_dim)
        sem /= np.linalg.norm(sem)
        app = rng.normal(size=cfg.appearance_dim)
        app /= np.linalg.norm(app)
        score = float(np.clip(rng.normal(0.4, 0.1), 1e-3, 1.0))
        raw.append(Detection(box, score, sem, app,
                             int(rng.integers(0, max(1, len(cfg.profiles))))))
    kept = class_agnostic_nms([(d.box, d.score) for d in raw],
                              cfg.nms_iou_thr, cfg.max_detections)
    return [raw[i] for i in kept]


# -- JSONL serialization ----------------------------------------------------

def write_sequence(frames: list[FrameSample], path: str) -> None:
    with open(path, "w") as f:
        for fr in frames:
            rec = {
                "frame": fr.frame_id,
                "time_s": fr.time_s,
                "gt": [{"id": tid, "box": box.as_list(), "class": cid}
                       for tid, box, cid in (fr.gt or [])],
                "detections": [{
                    "box": d.box.as_list(),
                    "score": d.score,
                    "semantic_vec": d.semantic_vec.tolist(),
                    "appearance_vec": d.appearance_vec.tolist(),
                    "class": d.class_id,
                } for d in fr.detections],
            }
            f.write(json.dumps(rec) + "\n")


def read_sequence(path: str) -> list[FrameSample]:
    frames: list[FrameSample] = []
    with open(path) as f:
        for line in f:
            if not line.strip():
                continue
            rec = json.loads(line)
            gt = [(g["id"], Box(*g["box"]), g.get("class", -1))
                  for g in rec.get("gt", [])]
            dets = [Detection(Box(*d["box"]), float(d["score"]),
                              np.asarray(d["semantic_vec"], dtype=np.float64),
                              np.asarray(d["appearance_vec"], dtype=np.float64),
                              int(d.get("class", -1)))
                    for d in rec.get("detections", [])]
            frames.append(FrameSample(frame_id=int(rec["frame"]),
                                      time_s=float(rec["time_s"]),
                                      detections=dets, gt=gt or None))
    return frames


def write_dataset(sequences: list[list[FrameSample]], out_dir: str) -> list[str]:
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for i, frames in enumerate(sequences):
        path = os.path.join(out_dir, f"seq_{i:04d}.jsonl")
        write_sequence(frames, path)
        paths.append(path)
    return paths


def read_dataset(data_dir: str) -> list[list[FrameSample]]:
    names = sorted(n for n in os.listdir(data_dir) if n.endswith(".jsonl"))
    if not names:
        raise SimulatorError(f"no .jsonl sequences under {data_dir}")
    return [read_sequence(os.path.join(data_dir, n)) for n in names]


def generate_dataset(cfg: SceneConfig, num_sequences: int,
                     seed: int | None = None) -> list[list[FrameSample]]:
    base = cfg.seed if seed is None else seed
    return [generate(cfg, sequence_seed=base + i) for i in range(num_sequences)]
