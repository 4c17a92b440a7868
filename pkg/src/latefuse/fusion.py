"""Step-level combination of two calibrated token distributions.

Two strategies: a static weighted sum of the temperature-scaled
distributions, and uadf (uncertainty-aware dynamic fusion), where the
secondary model's weight at each step is sigmoid(H) - beta with H the
entropy of the primary model's calibrated distribution. A confident
primary (H -> 0, beta = 0.5) therefore decides alone, and the secondary
weight grows with the primary's uncertainty.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .core import argmax_token, entropy, sigmoid, softmax_with_temperature
from .errors import InvalidParameterError

MODES = ("llm-only", "asr-only", "static", "uadf")
_MODE_ALIASES = {"llm": "llm-only", "asr": "asr-only"}
COMBINE_VARIANTS = ("outer-softmax", "renormalize")
UNCERTAINTY_VARIANTS = ("entropy", "top1")


@dataclass(frozen=True)
class FusionConfig:
    mode: str = "uadf"
    w_llm: float = 1.0
    w_asr: float = 0.25
    tau1: float = 1.0
    tau2: float = 1.0
    beta: float = 0.5
    combine: str = "outer-softmax"
    uncertainty: str = "entropy"

    def normalized(self) -> "FusionConfig":
        """Resolve mode aliases ("llm" -> "llm-only") and validate."""
        cfg = self
        if cfg.mode in _MODE_ALIASES:
            cfg = replace(cfg, mode=_MODE_ALIASES[cfg.mode])
        cfg.validate()
        return cfg

    def validate(self):
        mode = _MODE_ALIASES.get(self.mode, self.mode)
        if mode not in MODES:
            raise InvalidParameterError(f"unknown fusion mode {self.mode!r}")
        if not (self.tau1 > 0 and self.tau2 > 0):
            raise InvalidParameterError("tau1 and tau2 must be positive")
        if not 0.0 <= self.beta <= 1.0:
            raise InvalidParameterError(f"beta must be in [0, 1], got {self.beta}")
        if self.combine not in COMBINE_VARIANTS:
            raise InvalidParameterError(f"unknown combine variant {self.combine!r}")
        if self.uncertainty not in UNCERTAINTY_VARIANTS:
            raise InvalidParameterError(f"unknown uncertainty variant {self.uncertainty!r}")
        if mode == "static":
            if self.w_llm < 0 or self.w_asr < 0:
                raise InvalidParameterError("static weights must be >= 0")
            if self.w_llm == 0 and self.w_asr == 0:
                raise InvalidParameterError("static fusion needs at least one nonzero weight")


@dataclass(frozen=True)
class FusionStep:
    """Everything one fused decoding step saw and decided."""

    p_llm: np.ndarray
    p_asr: np.ndarray
    uncertainty: float
    w_asr_effective: float
    fused: np.ndarray
    chosen: int

    def log_entry(self, step: int, vocab, top_k: int = 3) -> dict:
        """Machine-readable per-step diagnostic (one JSON line per step)."""
        def top(p):
            order = np.argsort(-p, kind="stable")[:top_k]
            return [{"token": vocab.token_of(int(i)), "prob": float(p[i])} for i in order]

        return {
            "step": step,
            "u": self.uncertainty,
            "w_asr": self.w_asr_effective,
            "llm_top": top(self.p_llm),
            "asr_top": top(self.p_asr),
            "chosen": vocab.token_of(self.chosen),
        }


def uadf_weight(u: float, beta: float) -> float:
    """Secondary-model fusion weight: sigmoid(u) - beta."""
    return sigmoid(float(u)) - float(beta)


def _uncertainty(p_llm: np.ndarray, variant: str) -> float:
    if variant == "top1":
        pmax = float(p_llm.max())
        return -pmax * math.log(pmax) if pmax > 0.0 else 0.0
    return entropy(p_llm)


def fuse_static(logits_llm, logits_asr, cfg: FusionConfig) -> np.ndarray:
    """w_llm * softmax(l1/tau1) + w_asr * softmax(l2/tau2), renormalized."""
    total = cfg.w_llm + cfg.w_asr
    if total <= 0:
        raise InvalidParameterError("static fusion needs at least one nonzero weight")
    p1 = softmax_with_temperature(logits_llm, cfg.tau1)
    p2 = softmax_with_temperature(logits_asr, cfg.tau2)
    return (cfg.w_llm * p1 + cfg.w_asr * p2) / total


def fuse_uadf(logits_llm, logits_asr, cfg: FusionConfig) -> FusionStep:
    """One dynamic-fusion step; w_llm is fixed at 1 in this mode."""
    p_llm = softmax_with_temperature(logits_llm, cfg.tau1)
    u = _uncertainty(p_llm, cfg.uncertainty)
    w = uadf_weight(u, cfg.beta)
    p_asr = softmax_with_temperature(logits_asr, cfg.tau2)
    summed = p_llm + w * p_asr
    if cfg.combine == "outer-softmax":
        fused = softmax_with_temperature(summed, 1.0)
    else:
        # beta > 0.5 can push entries negative; clip before renormalizing.
        # The maximum stays positive (sum of entries is 1 + w > 0), so the
        # argmax is unaffected either way.
        clipped = np.maximum(summed, 0.0)
        fused = clipped / clipped.sum()
    return FusionStep(
        p_llm=p_llm,
        p_asr=p_asr,
        uncertainty=u,
        w_asr_effective=w,
        fused=fused,
        chosen=argmax_token(summed),
    )


def fuse_step(logits_llm, logits_asr, cfg: FusionConfig) -> FusionStep:
    """Dispatch one fused step for static or uadf mode."""
    if cfg.mode == "uadf":
        return fuse_uadf(logits_llm, logits_asr, cfg)
    if cfg.mode == "static":
        p1 = softmax_with_temperature(logits_llm, cfg.tau1)
        p2 = softmax_with_temperature(logits_asr, cfg.tau2)
        fused = fuse_static(logits_llm, logits_asr, cfg)
        return FusionStep(
            p_llm=p1,
            p_asr=p2,
            uncertainty=entropy(p1),
            w_asr_effective=cfg.w_asr,
            fused=fused,
            chosen=argmax_token(fused),
        )
    raise InvalidParameterError(f"fuse_step handles static/uadf, not {cfg.mode!r}")


def grid_search_static(
    llm_provider,
    asr_provider,
    eval_set,
    grid,
    tau1: float = 1.0,
    tau2: float = 1.0,
    max_len_factor: float = 2.0,
    workers: int = 1,
):
    """Decode `eval_set` at every (w_llm, w_asr) grid point and pick the
    lowest corpus WER (ties go to the smaller w_asr, then smaller w_llm).

    `eval_set` is a list of (UtteranceContext, reference_words) pairs.
    Returns ((w_llm, w_asr), table) where the table has one row per point.
    """
    from .decoding import decode_eval_set
    from .metrics import corpus_wer

    grid = [(float(wl), float(wa)) for wl, wa in grid]
    if not grid or not eval_set:
        raise InvalidParameterError("grid and eval_set must be non-empty")
    table = []
    for w_llm, w_asr in grid:
        cfg = FusionConfig(mode="static", w_llm=w_llm, w_asr=w_asr, tau1=tau1, tau2=tau2)
        hyps = decode_eval_set(
            llm_provider, asr_provider, cfg, eval_set,
            max_len_factor=max_len_factor, workers=workers,
        )
        wer = corpus_wer([(hyp, ref) for hyp, (_ctx, ref) in zip(hyps, eval_set)])
        table.append({"w_llm": w_llm, "w_asr": w_asr, "wer": wer})
    best = min(table, key=lambda row: (row["wer"], row["w_asr"], row["w_llm"]))
    return (best["w_llm"], best["w_asr"]), table
