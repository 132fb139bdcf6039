"""Conditional gated fusion, baseline fusions and the classification head."""
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import InputError, ShapeError
from .nn import Dense, Module

FUSIONS = ("conditional", "sum", "concat", "product")


@dataclass
class FusionTrace:
    F_concat: Tensor
    F_cond: Tensor
    F_fc: Tensor
    P_offline: Tensor
    P_online: Tensor
    F_final: Tensor


class GatedFusion(Module):
    """Gate layer mapping [F_online | F_offline | z] (2K+2) to K logits."""

    def __init__(self, K, rng):
        self.K = K
        self.gate = Dense(2 * K + 2, K, rng)


def conditional_fuse(F_online, F_offline, z, params: GatedFusion):
    """Weight each modality per component by a sigmoid gate conditioned on the
    original-modality tag ``z`` [B, 2]; offline gets P, online gets 1 - P.

    Returns (F_final, trace).
    """
    K = params.K
    if F_online.shape != F_offline.shape or F_online.shape[-1] != K:
        raise ShapeError(f"fusion expects two [B, {K}] features, got {F_online.shape} "
                         f"and {F_offline.shape}")
    z = z if isinstance(z, Tensor) else Tensor(np.asarray(z, dtype=F_online.dtype))
    if z.shape != (F_online.shape[0], 2):
        raise ShapeError(f"modality tag must be [B, 2], got {z.shape}")
    f_concat = ad.concat([F_online, F_offline], axis=1)
    f_cond = ad.concat([f_concat, z], axis=1)
    f_fc = params.gate(f_cond)
    p_off = ad.sigmoid(f_fc)
    p_on = ad.sub(1.0, p_off)
    f_final = ad.add(ad.mul(F_offline, p_off), ad.mul(F_online, p_on))
    return f_final, FusionTrace(f_concat, f_cond, f_fc, p_off, p_on, f_final)


def baseline_fuse(F_online, F_offline, kind):
    if F_online.shape != F_offline.shape:
        raise ShapeError(f"fusion inputs differ: {F_online.shape} vs {F_offline.shape}")
    if kind == "sum":
        return ad.add(F_online, F_offline)
    if kind == "product":
        return ad.mul(F_online, F_offline)
    if kind == "concat":
        return ad.concat([F_online, F_offline], axis=1)
    raise InputError(f"unknown baseline fusion {kind!r}")


def classify_head(f, head: Dense):
    """Logits over script classes; softmax is left to the loss / prediction."""
    if f.shape[-1] != head.weight.shape[0]:
        raise ShapeError(f"head expects width {head.weight.shape[0]}, got {f.shape[-1]}")
    return head(f)


def predict_proba(logits):
    return ad.softmax(logits.data if isinstance(logits, Tensor) else np.asarray(logits))
