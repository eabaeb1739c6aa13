"""The association model: cue heads, fusion, temporal encoding, the
attention graph, and the dustbin-Sinkhorn matcher, assembled as one
differentiable pipeline over a pair of frames."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import heads, matching, stog
from .autodiff import ParameterStore, Tensor
from .geometry import normalize_box
from .simulator import Detection


class ModelError(Exception):
    pass


@dataclass(frozen=True)
class ModelConfig:
    descriptor_dim: int = 32
    semantic_dim: int = 16
    appearance_dim: int = 16
    head_hidden: int = 64
    num_layers: int = 4
    num_heads: int = 4
    refine_widths: tuple[int, ...] | None = None
    use_semantic: bool = True
    use_location: bool = True
    use_appearance: bool = True
    use_temporal: bool = True
    closed_set: bool = False
    sinkhorn_iters: int = 100
    seed: int = 0

    def __post_init__(self):
        if not (self.use_semantic or self.use_location or self.use_appearance):
            raise ModelError("at least one cue must be enabled")

    @property
    def location_width(self) -> int:
        return 5 if self.closed_set else 4

    @property
    def stog(self) -> stog.StogConfig:
        return stog.StogConfig(dim=self.descriptor_dim, num_layers=self.num_layers,
                               num_heads=self.num_heads,
                               refine_widths=self.refine_widths)


def paper_preset(**overrides) -> ModelConfig:
    """The published large configuration: d=256, 4 layers, 4 heads,
    refine MLP [512, 512, 256], 100 Sinkhorn iterations."""
    base = dict(descriptor_dim=256, num_layers=4, num_heads=4,
                refine_widths=(512, 512, 256), sinkhorn_iters=100,
                head_hidden=256)
    base.update(overrides)
    return ModelConfig(**base)


class AssocModel:
    """Owns the parameter store and runs frame-pair forwards."""

    def __init__(self, cfg: ModelConfig, store: ParameterStore | None = None):
        self.cfg = cfg
        d = cfg.descriptor_dim
        self.sem_spec = heads.mlp_head_spec("sem", cfg.semantic_dim,
                                            cfg.head_hidden, 5, d)
        self.loc_spec = heads.mlp_head_spec("loc", cfg.location_width,
                                            cfg.head_hidden, 5, d)
        self.app_spec = heads.mlp_head_spec("app", cfg.appearance_dim,
                                            cfg.head_hidden, 5, d)
        self.store = store if store is not None else ParameterStore(cfg.seed)
        self._init_params()

    def _init_params(self):
        heads.init_head(self.sem_spec, self.store)
        heads.init_head(self.loc_spec, self.store)
        heads.init_head(self.app_spec, self.store)
        stog.init_stog(self.cfg.stog, self.store)
        if "dustbin" not in self.store.entries:
            self.store.create("dustbin", (1, 1), "zeros")
            self.store.entries["dustbin"][0, 0] = 1.0  # learnable bin score, init 1

    # -- embedding --------------------------------------------------------

    def cue_inputs(self, dets: list[Detection], image_h: float,
                   image_w: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        sem = np.stack([d.semantic_vec for d in dets])
        loc = np.stack([
            heads.location_input(normalize_box(d.box, image_h, image_w),
                                 confidence=d.score,
                                 closed_set=self.cfg.closed_set)
            for d in dets])
        app = np.stack([d.appearance_vec for d in dets])
        return sem, loc, app

    def embed(self, dets: list[Detection], image_h: float, image_w: float,
              leaves: dict[str, Tensor]) -> Tensor:
        """Per-object cue embeddings summed into the fused descriptor;
        a disabled cue fuses as a zero vector."""
        if not dets:
            raise ModelError("cannot embed an empty detection list")
        sem_in, loc_in, app_in = self.cue_inputs(dets, image_h, image_w)
        n, d = len(dets), self.cfg.descriptor_dim
        zero = ad.constant(np.zeros((n, d)))
        e_sem = heads.head_forward(self.sem_spec, leaves, ad.constant(sem_in)) \
            if self.cfg.use_semantic else zero
        e_loc = heads.head_forward(self.loc_spec, leaves, ad.constant(loc_in)) \
            if self.cfg.use_location else zero
        e_app = heads.head_forward(self.app_spec, leaves, ad.constant(app_in)) \
            if self.cfg.use_appearance else zero
        return heads.fuse(e_sem, e_loc, e_app)

    def embed_cues_np(self, dets: list[Detection], image_h: float,
                      image_w: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Plain-array per-cue embeddings (for tracklet memory storage)."""
        leaves = self.store.leaves()
        sem_in, loc_in, app_in = self.cue_inputs(dets, image_h, image_w)
        n, d = len(dets), self.cfg.descriptor_dim
        zeros = np.zeros((n, d))
        e_sem = heads.head_forward(self.sem_spec, leaves, ad.constant(sem_in)).data \
            if self.cfg.use_semantic else zeros
        e_loc = heads.head_forward(self.loc_spec, leaves, ad.constant(loc_in)).data \
            if self.cfg.use_location else zeros
        e_app = heads.head_forward(self.app_spec, leaves, ad.constant(app_in)).data \
            if self.cfg.use_appearance else zeros
        return e_sem, e_loc, e_app

    # -- pair forward -------------------------------------------------------

    def pair_log_plan(self, key_fused: Tensor, ref_fused: Tensor,
                      leaves: dict[str, Tensor],
                      marginals: tuple[np.ndarray, np.ndarray] | None = None,
                      sinkhorn_iters: int | None = None) -> Tensor:
        """Fused descriptors -> STOG -> scores -> dustbin -> log transport plan."""
        if self.cfg.use_temporal:
            key_fused, ref_fused = heads.temporal_encode(key_fused, ref_fused)
        key_out, ref_out = stog.stog_forward(key_fused, ref_fused,
                                             self.cfg.stog, leaves)
        scores = matching.score_matrix(key_out, ref_out)
        aug = matching.augment_dustbin(scores, leaves["dustbin"])
        m, n = scores.data.shape
        if marginals is None:
            marginals = matching.uniform_dustbin_marginals(m, n)
        iters = sinkhorn_iters if sinkhorn_iters is not None else self.cfg.sinkhorn_iters
        return matching.sinkhorn_log(aug, marginals[0], marginals[1], iters)

    def forward_pair(self, key_dets: list[Detection], ref_dets: list[Detection],
                     image_h: float, image_w: float,
                     marginals: tuple[np.ndarray, np.ndarray] | None = None,
                     leaves: dict[str, Tensor] | None = None,
                     sinkhorn_iters: int | None = None) -> tuple[Tensor, dict[str, Tensor]]:
        """Full pipeline on one frame pair; returns (log-plan, leaves)."""
        if leaves is None:
            leaves = self.store.leaves()
        key_fused = self.embed(key_dets, image_h, image_w, leaves)
        ref_fused = self.embed(ref_dets, image_h, image_w, leaves)
        log_plan = self.pair_log_plan(key_fused, ref_fused, leaves, marginals,
                                      sinkhorn_iters)
        return log_plan, leaves
