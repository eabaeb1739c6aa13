"""The assembled association model: cue toggles, frame-pair forward,
checkpoint reload, and end-to-end differentiability."""
import numpy as np
import pytest

from cuetrack.autodiff import load_checkpoint, save_checkpoint
from cuetrack.geometry import Box
from cuetrack.model import AssocModel, ModelConfig, ModelError, paper_preset
from cuetrack.simulator import Detection

H, W = 600.0, 800.0


def _dets(n, seed=0, dim=16):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        x = 50.0 + 80.0 * i
        out.append(Detection(Box(x, 100.0, x + 60.0, 160.0),
                             float(rng.uniform(0.5, 1.0)),
                             rng.normal(size=dim), rng.normal(size=dim), 0))
    return out


def _cfg(**kw):
    args = dict(descriptor_dim=8, semantic_dim=16, appearance_dim=16,
                head_hidden=16, num_layers=2, num_heads=2,
                refine_widths=(16, 8), sinkhorn_iters=30, seed=0)
    args.update(kw)
    return ModelConfig(**args)


class TestConfig:
    def test_all_cues_off_rejected(self):
        with pytest.raises(ModelError):
            _cfg(use_semantic=False, use_location=False, use_appearance=False)

    def test_paper_preset_values(self):
        cfg = paper_preset()
        assert cfg.descriptor_dim == 256
        assert cfg.refine_widths == (512, 512, 256)
        assert cfg.num_layers == 4 and cfg.num_heads == 4
        assert cfg.sinkhorn_iters == 100

    def test_location_width_tracks_mode(self):
        assert _cfg().location_width == 4
        assert _cfg(closed_set=True).location_width == 5


class TestEmbedding:
    def test_disabled_cue_contributes_zero(self):
        dets = _dets(3)
        full = AssocModel(_cfg())
        no_app = AssocModel(_cfg(use_appearance=False))
        e_full = full.embed(dets, H, W, full.store.leaves()).data
        e_no = no_app.embed(dets, H, W, no_app.store.leaves()).data
        # same seed -> identical sem/loc heads; difference is exactly e_app
        e_sem, e_loc, e_app = full.embed_cues_np(dets, H, W)
        assert np.allclose(e_no, e_sem + e_loc, atol=1e-12)
        assert np.allclose(e_full - e_no, e_app, atol=1e-12)

    def test_empty_frame_rejected(self):
        asm = AssocModel(_cfg())
        with pytest.raises(ModelError):
            asm.embed([], H, W, asm.store.leaves())

    def test_dustbin_initialized_to_one(self):
        asm = AssocModel(_cfg())
        assert asm.store.entries["dustbin"][0, 0] == 1.0


class TestForwardPair:
    def test_log_plan_shape_and_marginals(self):
        asm = AssocModel(_cfg())
        lp, _ = asm.forward_pair(_dets(3), _dets(4, seed=1), H, W)
        plan = np.exp(lp.data)
        assert plan.shape == (4, 5)
        assert np.allclose(plan.sum(axis=0), [1, 1, 1, 1, 3], atol=1e-6)
        assert np.allclose(plan.sum(axis=1), [1, 1, 1, 4], atol=1e-6)

    def test_forward_is_deterministic(self):
        asm = AssocModel(_cfg())
        a, _ = asm.forward_pair(_dets(3), _dets(3, seed=1), H, W)
        b, _ = asm.forward_pair(_dets(3), _dets(3, seed=1), H, W)
        assert np.array_equal(a.data, b.data)

    def test_single_detection_frames(self):
        asm = AssocModel(_cfg())
        lp, _ = asm.forward_pair(_dets(1), _dets(1, seed=1), H, W)
        assert lp.data.shape == (2, 2)


class TestCheckpointReload:
    def test_reload_reproduces_forward(self, tmp_path):
        asm = AssocModel(_cfg(seed=4))
        path = str(tmp_path / "m.ckpt")
        save_checkpoint(asm.store, path)
        asm2 = AssocModel(_cfg(seed=99), store=load_checkpoint(path))
        k, r = _dets(3), _dets(4, seed=1)
        a, _ = asm.forward_pair(k, r, H, W)
        b, _ = asm2.forward_pair(k, r, H, W)
        # float32 storage: near-identical, not bitwise
        assert np.max(np.abs(a.data - b.data)) < 1e-5

    def test_loaded_dustbin_not_reset(self, tmp_path):
        asm = AssocModel(_cfg())
        asm.store.entries["dustbin"][0, 0] = 2.5
        path = str(tmp_path / "m.ckpt")
        save_checkpoint(asm.store, path)
        asm2 = AssocModel(_cfg(), store=load_checkpoint(path))
        assert asm2.store.entries["dustbin"][0, 0] == 2.5
