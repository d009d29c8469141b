"""Composite 3D detection losses for a positive anchor and their exact gradients.

Two objectives are provided:

* the baseline sum ``L_cls + L_reg + L_dir`` where the three sub-task losses
  (focal, SmoothL1, binary cross-entropy) are supervised independently;
* the harmonic loss, which reweights the same terms with factors built from
  ``beta_r = exp(-L_reg)`` and ``beta_c = exp(-L_cls)``::

      (1 + beta_r) L_cls + (1 + beta_c) L_reg + (1 - (beta_r + beta_c) / beta_dir) L_dir

Every function accepts Python floats or numpy arrays (broadcasting over a
leading sample axis; box residuals carry a trailing axis of 7).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from harmonic3d.geometry import BoxDelta

ArrayLike = Union[float, np.ndarray]

SMOOTHL1_FORMS = ("quadratic", "as-printed")


@dataclass(frozen=True)
class LossConfig:
    alpha: float = 0.25
    gamma: float = 2.0
    beta_dir: float = 2.0
    smoothl1_form: str = "quadratic"
    prob_floor: float = 1e-7

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.gamma < 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if self.beta_dir <= 0:
            raise ValueError(f"beta_dir must be > 0, got {self.beta_dir}")
        if self.smoothl1_form not in SMOOTHL1_FORMS:
            raise ValueError(f"smoothl1_form must be one of {SMOOTHL1_FORMS}, got {self.smoothl1_form!r}")
        if not 0.0 < self.prob_floor <= 1e-3:
            raise ValueError(f"prob_floor must lie in (0, 1e-3], got {self.prob_floor}")


DEFAULT_CONFIG = LossConfig()


@dataclass(frozen=True)
class LossSample:
    """Inputs of one anchor: class/direction probabilities and box residuals.

    ``delta`` is the residual between predicted and target offsets,
    ``predicted - target``.
    """

    p: float
    delta: tuple
    p_dir: float
    p_dir_gt: int
    p_gt: int = 1

    def __post_init__(self):
        d = self.delta
        if isinstance(d, BoxDelta):
            d = d.as_tuple()
        d = tuple(float(v) for v in d)
        if len(d) != 7 or not all(np.isfinite(d)):
            raise ValueError(f"delta must be 7 finite values, got {self.delta!r}")
        object.__setattr__(self, "delta", d)
        for name in ("p", "p_dir"):
            v = float(getattr(self, name))
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
            object.__setattr__(self, name, v)
        if self.p_gt not in (0, 1) or self.p_dir_gt not in (0, 1):
            raise ValueError("labels must be 0 or 1")


@dataclass(frozen=True)
class LossTerms:
    l_cls: ArrayLike
    l_reg: ArrayLike
    l_dir: ArrayLike


@dataclass(frozen=True)
class HarmonicWeights:
    beta_r: ArrayLike
    beta_c: ArrayLike
    w_cls: ArrayLike
    w_reg: ArrayLike
    w_dir: ArrayLike


@dataclass(frozen=True)
class GradRecord:
    """Loss value and its partials w.r.t. ``p``, the 7 residuals and ``p_dir``."""

    loss: ArrayLike
    d_p: ArrayLike
    d_delta: np.ndarray
    d_pdir: ArrayLike


def _out(x):
    # 0-d arrays back to numpy scalars
    return x[()] if isinstance(x, np.ndarray) and x.ndim == 0 else x


# -- sub-task losses ---------------------------------------------------------

def focal_loss(p: ArrayLike, cfg: LossConfig = DEFAULT_CONFIG) -> ArrayLike:
    """Focal loss of a positive sample, ``-alpha (1-p)^gamma log p``."""
    p = np.clip(np.asarray(p, dtype=np.float64), cfg.prob_floor, 1.0)
    return _out(-cfg.alpha * (1.0 - p) ** cfg.gamma * np.log(p))


def focal_loss_grad(p: ArrayLike, cfg: LossConfig = DEFAULT_CONFIG) -> ArrayLike:
    """d/dp of :func:`focal_loss`, evaluated at the clamped probability."""
    p = np.clip(np.asarray(p, dtype=np.float64), cfg.prob_floor, 1.0)
    q = 1.0 - p
    g = cfg.gamma
    # (1-p)^(g-1) is undefined at p=1 for g<1; the product with log p is 0 there
    lead = np.where(q > 0, g * q ** np.where(q > 0, g - 1.0, 1.0) * np.log(p), 0.0) if g > 0 else 0.0
    return _out(-cfg.alpha * (q ** g / p - lead))


def focal_loss_negative(p: ArrayLike, cfg: LossConfig = DEFAULT_CONFIG) -> ArrayLike:
    """Focal loss of a negative sample, ``-(1-alpha) p^gamma log(1-p)``."""
    p = np.clip(np.asarray(p, dtype=np.float64), 0.0, 1.0 - cfg.prob_floor)
    return _out(-(1.0 - cfg.alpha) * p ** cfg.gamma * np.log1p(-p))


def focal_loss_negative_grad(p: ArrayLike, cfg: LossConfig = DEFAULT_CONFIG) -> ArrayLike:
    p = np.clip(np.asarray(p, dtype=np.float64), 0.0, 1.0 - cfg.prob_floor)
    g = cfg.gamma
    lead = np.where(p > 0, g * p ** np.where(p > 0, g - 1.0, 1.0) * np.log1p(-p), 0.0) if g > 0 else 0.0
    return _out(-(1.0 - cfg.alpha) * (lead - p ** g / (1.0 - p)))


def smooth_l1(d: ArrayLike, cfg: LossConfig = DEFAULT_CONFIG) -> ArrayLike:
    d = np.asarray(d, dtype=np.float64)
    a = np.abs(d)
    inner = 0.5 * d * d if cfg.smoothl1_form == "quadratic" else 0.5 * a
    return _out(np.where(a < 1.0, inner, a - 0.5))


def smooth_l1_grad(d: ArrayLike, cfg: LossConfig = DEFAULT_CONFIG) -> ArrayLike:
    d = np.asarray(d, dtype=np.float64)
    s = np.sign(d)
    inner = d if cfg.smoothl1_form == "quadratic" else 0.5 * s
    return _out(np.where(np.abs(d) < 1.0, inner, s))


def _residuals(delta) -> np.ndarray:
    if isinstance(delta, BoxDelta):
        delta = delta.as_tuple()
    d = np.asarray(delta, dtype=np.float64)
    if d.shape[-1] != 7:
        raise ValueError(f"residuals need a trailing axis of 7, got shape {d.shape}")
    return d


def reg_loss(delta, cfg: LossConfig = DEFAULT_CONFIG) -> ArrayLike:
    """Sum of SmoothL1 over the 7 box residuals."""
    return _out(np.sum(smooth_l1(_residuals(delta), cfg), axis=-1))


def dir_loss(p_dir: ArrayLike, p_dir_gt: ArrayLike, cfg: LossConfig = DEFAULT_CONFIG) -> ArrayLike:
    """Binary cross-entropy of the direction head."""
    q = np.clip(np.asarray(p_dir, dtype=np.float64), cfg.prob_floor, 1.0 - cfg.prob_floor)
    t = np.asarray(p_dir_gt, dtype=np.float64)
    return _out(-t * np.log(q) - (1.0 - t) * np.log1p(-q))


def dir_loss_grad(p_dir: ArrayLike, p_dir_gt: ArrayLike, cfg: LossConfig = DEFAULT_CONFIG) -> ArrayLike:
    q = np.clip(np.asarray(p_dir, dtype=np.float64), cfg.prob_floor, 1.0 - cfg.prob_floor)
    t = np.asarray(p_dir_gt, dtype=np.float64)
    return _out(-t / q + (1.0 - t) / (1.0 - q))


# -- composite objectives ---------------------------------------------------

def loss_terms(p, delta, p_dir, p_dir_gt, cfg: LossConfig = DEFAULT_CONFIG) -> LossTerms:
    return LossTerms(focal_loss(p, cfg), reg_loss(delta, cfg), dir_loss(p_dir, p_dir_gt, cfg))


def harmonic_weights(l_cls: ArrayLike, l_reg: ArrayLike, beta_dir: float = 2.0) -> HarmonicWeights:
    beta_r = np.exp(-np.asarray(l_reg, dtype=np.float64))
    beta_c = np.exp(-np.asarray(l_cls, dtype=np.float64))
    return HarmonicWeights(
        beta_r=_out(beta_r),
        beta_c=_out(beta_c),
        w_cls=_out(1.0 + beta_r),
        w_reg=_out(1.0 + beta_c),
        w_dir=_out(1.0 - (beta_r + beta_c) / beta_dir),
    )


def harmonic_total(l_cls: ArrayLike, l_reg: ArrayLike, l_dir: ArrayLike, beta_dir: float = 2.0) -> ArrayLike:
    w = harmonic_weights(l_cls, l_reg, beta_dir)
    return _out(w.w_cls * np.asarray(l_cls) + w.w_reg * np.asarray(l_reg) + w.w_dir * np.asarray(l_dir))


# Partials of the harmonic total expressed through the component losses and
# each component's own derivative. beta = exp(-L) gives d beta = -beta dL.

def harmonic_cls_partial(dl_cls, l_cls, l_reg, l_dir, beta_dir=2.0):
    beta_r = np.exp(-np.asarray(l_reg, dtype=np.float64))
    beta_c = np.exp(-np.asarray(l_cls, dtype=np.float64))
    return _out((1.0 + beta_r) * dl_cls + (l_reg - l_dir / beta_dir) * (-beta_c * dl_cls))


def harmonic_reg_partial(dl_reg, l_cls, l_reg, l_dir, beta_dir=2.0):
    beta_r = np.exp(-np.asarray(l_reg, dtype=np.float64))
    beta_c = np.exp(-np.asarray(l_cls, dtype=np.float64))
    return _out((1.0 + beta_c) * dl_reg + (l_cls - l_dir / beta_dir) * (-beta_r * dl_reg))


def harmonic_dir_partial(dl_dir, l_cls, l_reg, beta_dir=2.0):
    beta_r = np.exp(-np.asarray(l_reg, dtype=np.float64))
    beta_c = np.exp(-np.asarray(l_cls, dtype=np.float64))
    return _out((1.0 - (beta_r + beta_c) / beta_dir) * dl_dir)


def _check_positive(s: LossSample):
    if s.p_gt != 1:
        raise ValueError("composite losses are defined for positive samples (p_gt=1)")


def baseline_loss(s: LossSample, cfg: LossConfig = DEFAULT_CONFIG) -> tuple[LossTerms, float]:
    _check_positive(s)
    t = loss_terms(s.p, s.delta, s.p_dir, s.p_dir_gt, cfg)
    return t, float(t.l_cls + t.l_reg + t.l_dir)


def harmonic_loss(s: LossSample, cfg: LossConfig = DEFAULT_CONFIG) -> tuple[LossTerms, HarmonicWeights, float]:
    _check_positive(s)
    t = loss_terms(s.p, s.delta, s.p_dir, s.p_dir_gt, cfg)
    w = harmonic_weights(t.l_cls, t.l_reg, cfg.beta_dir)
    return t, w, float(harmonic_total(t.l_cls, t.l_reg, t.l_dir, cfg.beta_dir))


def baseline_grads_array(p, delta, p_dir, p_dir_gt, cfg: LossConfig = DEFAULT_CONFIG) -> GradRecord:
    """Batched baseline loss and partials; ``delta`` has a trailing axis of 7."""
    delta = _residuals(delta)
    t = loss_terms(p, delta, p_dir, p_dir_gt, cfg)
    return GradRecord(
        loss=_out(np.asarray(t.l_cls + t.l_reg + t.l_dir)),
        d_p=focal_loss_grad(p, cfg),
        d_delta=np.asarray(smooth_l1_grad(delta, cfg)),
        d_pdir=dir_loss_grad(p_dir, p_dir_gt, cfg),
    )


def harmonic_grads_array(p, delta, p_dir, p_dir_gt, cfg: LossConfig = DEFAULT_CONFIG) -> GradRecord:
    """Batched harmonic loss and its full chain-rule partials."""
    delta = _residuals(delta)
    t = loss_terms(p, delta, p_dir, p_dir_gt, cfg)
    l_cls, l_reg, l_dir = (np.asarray(v) for v in (t.l_cls, t.l_reg, t.l_dir))
    d_delta = harmonic_reg_partial(np.asarray(smooth_l1_grad(delta, cfg)),
                                   l_cls[..., None], l_reg[..., None], l_dir[..., None], cfg.beta_dir)
    return GradRecord(
        loss=harmonic_total(l_cls, l_reg, l_dir, cfg.beta_dir),
        d_p=harmonic_cls_partial(focal_loss_grad(p, cfg), l_cls, l_reg, l_dir, cfg.beta_dir),
        d_delta=np.asarray(d_delta),
        d_pdir=harmonic_dir_partial(dir_loss_grad(p_dir, p_dir_gt, cfg), l_cls, l_reg, cfg.beta_dir),
    )


def _scalar_record(r: GradRecord) -> GradRecord:
    return GradRecord(float(r.loss), float(r.d_p), np.asarray(r.d_delta, dtype=np.float64), float(r.d_pdir))


def baseline_grads(s: LossSample, cfg: LossConfig = DEFAULT_CONFIG) -> GradRecord:
    _check_positive(s)
    return _scalar_record(baseline_grads_array(s.p, s.delta, s.p_dir, s.p_dir_gt, cfg))


def harmonic_grads(s: LossSample, cfg: LossConfig = DEFAULT_CONFIG) -> GradRecord:
    _check_positive(s)
    return _scalar_record(harmonic_grads_array(s.p, s.delta, s.p_dir, s.p_dir_gt, cfg))


LOSS_KINDS = ("baseline", "harmonic")


def grads_array(kind: str, p, delta, p_dir, p_dir_gt, cfg: LossConfig = DEFAULT_CONFIG) -> GradRecord:
    if kind == "baseline":
        return baseline_grads_array(p, delta, p_dir, p_dir_gt, cfg)
    if kind == "harmonic":
        return harmonic_grads_array(p, delta, p_dir, p_dir_gt, cfg)
    raise ValueError(f"unknown loss kind {kind!r}; expected one of {LOSS_KINDS}")


def total_array(kind: str, p, delta, p_dir, p_dir_gt, cfg: LossConfig = DEFAULT_CONFIG) -> ArrayLike:
    """Batched loss value only; used by finite-difference oracles."""
    t = loss_terms(p, delta, p_dir, p_dir_gt, cfg)
    if kind == "baseline":
        return _out(np.asarray(t.l_cls + t.l_reg + t.l_dir))
    if kind == "harmonic":
        return harmonic_total(t.l_cls, t.l_reg, t.l_dir, cfg.beta_dir)
    raise ValueError(f"unknown loss kind {kind!r}; expected one of {LOSS_KINDS}")
