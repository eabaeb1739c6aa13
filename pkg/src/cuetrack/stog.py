"""Spatial-temporal object graph: alternating intra-frame self-attention
and inter-frame cross-attention over object descriptors, each followed by
a residual concat-MLP refinement."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import ParameterStore, Tensor


class StogError(Exception):
    pass


@dataclass(frozen=True)
class StogConfig:
    dim: int = 32
    num_layers: int = 4
    num_heads: int = 4
    refine_widths: tuple[int, ...] | None = None  # defaults to (2d, 2d, d)

    def __post_init__(self):
        if self.dim % self.num_heads != 0:
            raise StogError(f"dim {self.dim} not divisible by {self.num_heads} heads")

    @property
    def refine(self) -> tuple[int, ...]:
        if self.refine_widths is not None:
            return self.refine_widths
        return (2 * self.dim, 2 * self.dim, self.dim)

    def layer_mode(self, i: int) -> str:
        return "self" if i % 2 == 0 else "cross"


def init_stog(cfg: StogConfig, store: ParameterStore) -> None:
    d = cfg.dim
    for i in range(cfg.num_layers):
        p = f"stog.l{i}"
        for proj in ("Wq", "Wk", "Wv", "Wo"):
            store.create(f"{p}.{proj}", (d, d), "xavier")
        in_w = 2 * d
        for j, out_w in enumerate(cfg.refine):
            store.create(f"{p}.mlp{j}.W", (in_w, out_w), "xavier")
            store.create(f"{p}.mlp{j}.b", (1, out_w), "zeros")
            if j < len(cfg.refine) - 1:
                store.create(f"{p}.mlp{j}.gn.gamma", (1, out_w), "ones")
                store.create(f"{p}.mlp{j}.gn.beta", (1, out_w), "zeros")
            in_w = out_w


def attention(queries_from: Tensor, keys_values_from: Tensor,
              leaves: dict[str, Tensor], prefix: str, num_heads: int) -> Tensor:
    """Multi-head scaled dot-product attention with learned projections.

    Self-attention is this operation with both arguments equal; scaling
    uses the per-head width d/num_heads.
    """
    if keys_values_from.data.shape[0] == 0:
        raise StogError("no attention targets")
    d = queries_from.data.shape[1]
    if keys_values_from.data.shape[1] != d:
        raise StogError("query/key descriptor widths differ")
    q = ad.matmul(queries_from, leaves[f"{prefix}.Wq"])
    k = ad.matmul(keys_values_from, leaves[f"{prefix}.Wk"])
    v = ad.matmul(keys_values_from, leaves[f"{prefix}.Wv"])
    dh = d // num_heads
    outs = []
    for h in range(num_heads):
        qh = ad.slice_cols(q, h * dh, (h + 1) * dh)
        kh = ad.slice_cols(k, h * dh, (h + 1) * dh)
        vh = ad.slice_cols(v, h * dh, (h + 1) * dh)
        logits = ad.scale(ad.matmul(qh, ad.transpose(kh)), 1.0 / np.sqrt(dh))
        outs.append(ad.matmul(ad.softmax_rows(logits), vh))
    merged = outs[0] if num_heads == 1 else ad.concat_cols(outs)
    return ad.matmul(merged, leaves[f"{prefix}.Wo"])


def _refine_mlp(x: Tensor, msg: Tensor, leaves: dict[str, Tensor],
                prefix: str, n_layers: int) -> Tensor:
    h = ad.concat_cols([x, msg])
    for j in range(n_layers):
        h = ad.add(ad.matmul(h, leaves[f"{prefix}.mlp{j}.W"]),
                   leaves[f"{prefix}.mlp{j}.b"])
        if j < n_layers - 1:
            h = ad.group_norm(h, leaves[f"{prefix}.mlp{j}.gn.gamma"],
                              leaves[f"{prefix}.mlp{j}.gn.beta"])
            h = ad.relu(h)
    return h


def propagation_layer(key: Tensor, ref: Tensor, mode: str,
                      leaves: dict[str, Tensor], prefix: str,
                      cfg: StogConfig) -> tuple[Tensor, Tensor]:
    """One residual attention layer updating both frames with shared
    weights: out = in + MLP(concat(in, message))."""
    if mode == "self":
        msg_key = attention(key, key, leaves, prefix, cfg.num_heads)
        msg_ref = attention(ref, ref, leaves, prefix, cfg.num_heads)
    elif mode == "cross":
        msg_key = attention(key, ref, leaves, prefix, cfg.num_heads)
        msg_ref = attention(ref, key, leaves, prefix, cfg.num_heads)
    else:
        raise StogError(f"unknown propagation mode {mode!r}")
    n = len(cfg.refine)
    out_key = ad.add(key, _refine_mlp(key, msg_key, leaves, prefix, n))
    out_ref = ad.add(ref, _refine_mlp(ref, msg_ref, leaves, prefix, n))
    return out_key, out_ref


def stog_forward(key: Tensor, ref: Tensor, cfg: StogConfig,
                 leaves: dict[str, Tensor]) -> tuple[Tensor, Tensor]:
    """Alternating self/cross schedule over cfg.num_layers layers."""
    if key.data.shape[0] == 0 or ref.data.shape[0] == 0:
        raise StogError("empty frame")
    for i in range(cfg.num_layers):
        key, ref = propagation_layer(key, ref, cfg.layer_mode(i), leaves,
                                     f"stog.l{i}", cfg)
    return key, ref
