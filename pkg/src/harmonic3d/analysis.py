"""Finite-difference gradient oracle and gradient-field sampling for the losses."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np

from harmonic3d import losses as L
from harmonic3d.losses import LossConfig, LossSample

#: coordinate ids accepted by :func:`finite_diff`
COORDS = ("p", "d0", "d1", "d2", "d3", "d4", "d5", "d6", "p_dir")

H_MIN, H_MAX = 1e-8, 1e-3
# the batched oracle scales its step with x, so it may go below H_MIN next to p = eps
_H_FLOOR = 1e-12


class FDResult(NamedTuple):
    value: float
    #: True when the stencil had to be moved to one side of ``x``
    shifted: bool


def _get(s: LossSample, coord: str) -> float:
    if coord == "p":
        return s.p
    if coord == "p_dir":
        return s.p_dir
    return s.delta[int(coord[1])]


def _with(s: LossSample, coord: str, v: float) -> LossSample:
    if coord in ("p", "p_dir"):
        return dataclasses.replace(s, **{coord: v})
    d = list(s.delta)
    d[int(coord[1])] = v
    return dataclasses.replace(s, delta=tuple(d))


def _domain(coord: str, cfg: LossConfig, form: str):
    """Smooth interval limits and interior kinks for a coordinate."""
    if coord in ("p", "p_dir"):
        return (cfg.prob_floor, 1.0 - cfg.prob_floor), ()
    kinks = (-1.0, 1.0) if form == "quadratic" else (-1.0, 0.0, 1.0)
    return (-np.inf, np.inf), kinks


def _stencil_side(x, h, lo, hi, kinks):
    """Return 0 for a central stencil, +1 / -1 for a forward / backward one."""
    if x - 2 * h < lo:
        return 1
    if x + 2 * h > hi:
        return -1
    for k in kinks:
        if x != k and abs(x - k) < 2 * h:
            return 1 if x > k else -1
    return 0


def _difference(g, x, h, side):
    if side == 0:
        return (g(x + h) - g(x - h)) / (2 * h)
    # second-order one-sided stencil
    return side * (-3 * g(x) + 4 * g(x + side * h) - g(x + 2 * side * h)) / (2 * h)


def finite_diff(f: Callable[[LossSample], float], s: LossSample, coord: str, h: float,
                cfg: LossConfig = L.DEFAULT_CONFIG, richardson: bool = False) -> FDResult:
    """Central difference of ``f`` along one coordinate of a sample.

    Probabilities stay inside ``(prob_floor, 1 - prob_floor)``; when the
    stencil would leave that interval, or straddle a SmoothL1 branch point,
    a one-sided second-order stencil is used instead and the result is
    flagged. With ``richardson=True`` two step sizes are combined to cancel
    the leading truncation term.
    """
    if coord not in COORDS:
        raise ValueError(f"unknown coordinate {coord!r}; expected one of {COORDS}")
    if not H_MIN <= h <= H_MAX:
        raise ValueError(f"step must lie in [{H_MIN}, {H_MAX}], got {h}")
    x = _get(s, coord)
    (lo, hi), kinks = _domain(coord, cfg, cfg.smoothl1_form)
    side = _stencil_side(x, h, lo, hi, kinks)

    def g(v):
        return float(f(_with(s, coord, v)))

    d = _difference(g, x, h, side)
    if richardson:
        d_half = _difference(g, x, h / 2, side)
        d = (4 * d_half - d) / 3
    return FDResult(d, side != 0)


# -- batched oracle ---------------------------------------------------------

def _fd_batch(kind, cfg, p, delta, p_dir, p_dir_gt, coord):
    """Richardson-extrapolated finite differences for every sample at once.

    The preferred step scales with the distance to the nearest singularity
    of the coordinate (``log p`` at 0 for the focal term, ``log p_dir`` or
    ``log(1 - p_dir)`` for cross-entropy). It shrinks to keep a central
    stencil inside the smooth piece; when that would make it too small the
    stencil goes one-sided instead.
    """
    # probabilities outside the clamp interval are differentiated at the clamp,
    # which is where the analytic partials are evaluated
    if coord == "p":
        x = np.clip(p, cfg.prob_floor, 1.0 - cfg.prob_floor)
        scale = x
    elif coord == "p_dir":
        x = np.clip(p_dir, cfg.prob_floor, 1.0 - cfg.prob_floor)
        scale = np.where(p_dir_gt > 0.5, x, 1.0 - x)
    else:
        x = delta[:, int(coord[1])]
        scale = np.ones_like(x)
    h_pref = np.clip(1e-3 * scale, _H_FLOOR, H_MAX)

    if coord in ("p", "p_dir"):
        lo, hi = cfg.prob_floor, 1.0 - cfg.prob_floor
        dist_lo, dist_hi = x - lo, hi - x
    else:
        kinks = np.array((-1.0, 1.0) if cfg.smoothl1_form == "quadratic" else (-1.0, 0.0, 1.0))
        gap = x[:, None] - kinks[None, :]
        # a sample sitting exactly on a kink keeps the symmetric stencil
        below = np.where(gap > 0, gap, np.inf).min(axis=1)
        above = np.where(gap < 0, -gap, np.inf).min(axis=1)
        dist_lo, dist_hi = below, above
    room = np.minimum(dist_lo, dist_hi) / 2.5
    central = room >= 0.1 * h_pref
    # one-sided stencils keep an O(h^3) residual after extrapolation
    h = np.where(central, np.minimum(h_pref, room), np.maximum(0.1 * h_pref, _H_FLOOR))
    side = np.where(central, 0, np.where(dist_hi >= dist_lo, 1, -1))

    def g(v):
        if coord == "p":
            return L.total_array(kind, v, delta, p_dir, p_dir_gt, cfg)
        if coord == "p_dir":
            return L.total_array(kind, p, delta, v, p_dir_gt, cfg)
        d = delta.copy()
        d[:, int(coord[1])] = v
        return L.total_array(kind, p, d, p_dir, p_dir_gt, cfg)

    def diff(hh):
        c = (g(x + hh) - g(x - hh)) / (2 * hh)
        sgn = np.where(side == 0, 1, side)
        o = sgn * (-3 * g(x) + 4 * g(x + sgn * hh) - g(x + 2 * sgn * hh)) / (2 * hh)
        return np.where(side == 0, c, o)

    return (4 * diff(h / 2) - diff(h)) / 3


@dataclass
class GradcheckReport:
    n: int
    max_rel_err: float
    max_abs_err: float
    failures: int
    worst: list = field(default_factory=list)
    per_config: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.failures == 0

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def check_samples(p, delta, p_dir, p_dir_gt, *, kinds=L.LOSS_KINDS, forms=L.SMOOTHL1_FORMS,
                  tol_rel: float = 1e-6, tol_abs: float = 1e-9,
                  cfg: Optional[LossConfig] = None, n_worst: int = 10) -> GradcheckReport:
    """Compare analytic partials with the finite-difference oracle on given samples.

    A partial fails when its absolute error exceeds ``tol_abs`` *and* its
    relative error exceeds ``tol_rel``.
    """
    cfg = cfg or L.DEFAULT_CONFIG
    p = np.atleast_1d(np.asarray(p, dtype=np.float64))
    p_dir = np.atleast_1d(np.asarray(p_dir, dtype=np.float64))
    delta = np.asarray(delta, dtype=np.float64).reshape(-1, 7)
    gts = np.broadcast_to(np.asarray(p_dir_gt, dtype=np.float64), p.shape)
    n = len(p)

    max_rel = 0.0
    max_abs = 0.0
    failures = 0
    offenders = []
    per_config = {}
    for kind in kinds:
        for form in forms:
            c = dataclasses.replace(cfg, smoothl1_form=form)
            rec = L.grads_array(kind, p, delta, p_dir, gts, c)
            analytic = {"p": np.asarray(rec.d_p), "p_dir": np.asarray(rec.d_pdir)}
            for k in range(7):
                analytic[f"d{k}"] = rec.d_delta[:, k]
            cfg_fail = 0
            cfg_rel = 0.0
            for coord in COORDS:
                a = analytic[coord]
                fd = _fd_batch(kind, c, p, delta, p_dir, gts, coord)
                abs_err = np.abs(a - fd)
                scale = np.maximum(np.abs(a), np.abs(fd))
                rel_err = np.divide(abs_err, scale, out=np.zeros_like(abs_err), where=scale > 0)
                significant = abs_err > tol_abs
                bad = significant & (rel_err > tol_rel)
                max_abs = max(max_abs, float(abs_err.max()))
                if significant.any():
                    r = float(rel_err[significant].max())
                    max_rel = max(max_rel, r)
                    cfg_rel = max(cfg_rel, r)
                cfg_fail += int(bad.sum())
                for i in np.nonzero(bad)[0][:n_worst]:
                    offenders.append({
                        "kind": kind, "form": form, "coord": coord, "index": int(i),
                        "analytic": float(a[i]), "numeric": float(fd[i]),
                        "rel_err": float(rel_err[i]), "abs_err": float(abs_err[i]),
                    })
            failures += cfg_fail
            per_config[f"{kind}/{form}"] = {"failures": cfg_fail, "max_rel_err": cfg_rel}

    offenders.sort(key=lambda o: -o["rel_err"])
    return GradcheckReport(n=n, max_rel_err=max_rel, max_abs_err=max_abs, failures=failures,
                           worst=offenders[:n_worst], per_config=per_config)


def gradcheck(n: int, tol_rel: float = 1e-6, seed: int = 0, tol_abs: float = 1e-9,
              cfg: Optional[LossConfig] = None) -> GradcheckReport:
    """Random-sample gradient check of both loss kinds and both SmoothL1 forms.

    Draws ``n`` samples with ``p, p_dir ~ U(eps, 1-eps)`` and residuals
    ``~ U(-3, 3)``, and checks them once per direction label, so each
    configuration sees ``2 n`` samples.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    cfg = cfg or L.DEFAULT_CONFIG
    rng = np.random.default_rng(seed)
    eps = cfg.prob_floor
    p = rng.uniform(eps, 1 - eps, n)
    p_dir = rng.uniform(eps, 1 - eps, n)
    delta = rng.uniform(-3.0, 3.0, (n, 7))
    gts = np.concatenate([np.zeros(n), np.ones(n)])
    rep = check_samples(np.tile(p, 2), np.tile(delta, (2, 1)), np.tile(p_dir, 2), gts,
                        tol_rel=tol_rel, tol_abs=tol_abs, cfg=cfg)
    rep.n = n
    return rep


# -- gradient fields -----------------------------------------------------------

PARTIALS = ("cls", "reg", "dir")

#: axis names for each partial, in output order
AXES = {
    "cls": ("p", "l_reg", "l_dir"),
    "reg": ("delta", "l_cls", "l_dir"),
    "dir": ("p_dir", "l_cls", "l_reg"),
}


def default_ranges(which_partial: str, dir_gt: int = 1):
    loss_axis = (0.0, 4.0)
    if which_partial == "cls":
        return ((0.01, 1.0), loss_axis, loss_axis)
    if which_partial == "reg":
        return ((0.0, 4.0), loss_axis, loss_axis)
    if which_partial == "dir":
        p_axis = (0.01, 1.0) if dir_gt == 1 else (0.0, 0.99)
        return (p_axis, loss_axis, loss_axis)
    raise ValueError(f"unknown partial {which_partial!r}; expected one of {PARTIALS}")


@dataclass(frozen=True)
class GradFieldSpec:
    which_partial: str = "cls"
    loss_kind: str = "harmonic"
    ranges: Optional[tuple] = None
    resolution: int = 22
    dir_gt: int = 1
    #: residual component varied along the first axis of the ``reg`` field
    component: int = 0
    max_points: int = 1_000_000

    def __post_init__(self):
        if self.which_partial not in PARTIALS:
            raise ValueError(f"unknown partial {self.which_partial!r}; expected one of {PARTIALS}")
        if self.loss_kind not in L.LOSS_KINDS:
            raise ValueError(f"unknown loss kind {self.loss_kind!r}")
        if self.resolution < 2:
            raise ValueError("resolution must be >= 2")
        if self.dir_gt not in (0, 1):
            raise ValueError("dir_gt must be 0 or 1")
        if not 0 <= self.component < 7:
            raise ValueError("component must be in 0..6")
        ranges = self.ranges or default_ranges(self.which_partial, self.dir_gt)
        ranges = tuple((float(lo), float(hi)) for lo, hi in ranges)
        if len(ranges) != 3 or any(not hi > lo for lo, hi in ranges):
            raise ValueError(f"need three nonempty ranges, got {ranges}")
        object.__setattr__(self, "ranges", ranges)

    @property
    def n_points(self) -> int:
        return self.resolution ** 3

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["ranges"] = [list(r) for r in self.ranges]
        d["axes"] = list(AXES[self.which_partial])
        return d


class GradFieldSample(NamedTuple):
    coord: tuple
    grad: float


class FieldTooLarge(ValueError):
    pass


def grid_axes(spec: GradFieldSpec) -> list[np.ndarray]:
    return [np.linspace(lo, hi, spec.resolution) for lo, hi in spec.ranges]


def field_values(spec: GradFieldSpec, cfg: Optional[LossConfig] = None) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate a gradient field on its grid.

    Returns ``(coords, grad)`` with coords of shape (N, 3) in row-major order
    over the three axes. Component losses on the second and third axes are
    injected directly rather than derived from sample inputs.
    """
    cfg = cfg or L.DEFAULT_CONFIG
    if spec.n_points > spec.max_points:
        raise FieldTooLarge(f"grid of {spec.n_points} points exceeds the cap of {spec.max_points}")
    a1, a2, a3 = np.meshgrid(*grid_axes(spec), indexing="ij")
    a1, a2, a3 = a1.ravel(), a2.ravel(), a3.ravel()
    harmonic = spec.loss_kind == "harmonic"
    if spec.which_partial == "cls":
        dl = L.focal_loss_grad(a1, cfg)
        grad = L.harmonic_cls_partial(dl, L.focal_loss(a1, cfg), a2, a3, cfg.beta_dir) if harmonic else dl
    elif spec.which_partial == "reg":
        dl = L.smooth_l1_grad(a1, cfg)
        grad = L.harmonic_reg_partial(dl, a2, L.smooth_l1(a1, cfg), a3, cfg.beta_dir) if harmonic else dl
    else:
        dl = L.dir_loss_grad(a1, spec.dir_gt, cfg)
        grad = L.harmonic_dir_partial(dl, a2, a3, cfg.beta_dir) if harmonic else dl
    grad = np.broadcast_to(np.asarray(grad, dtype=np.float64), a1.shape).copy()
    return np.stack([a1, a2, a3], axis=1), grad


def sample_grad_field(spec: GradFieldSpec, cfg: Optional[LossConfig] = None) -> list[GradFieldSample]:
    coords, grad = field_values(spec, cfg)
    return [GradFieldSample(tuple(c), float(g)) for c, g in zip(coords.tolist(), grad.tolist())]


def find_stationary_points(field_: Sequence[GradFieldSample], tol_abs: float = 1e-9) -> list[tuple]:
    if not field_:
        raise ValueError("field is empty")
    return [s.coord for s in field_ if abs(s.grad) < tol_abs]


def field_to_csv(field_: Sequence[GradFieldSample]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["axis1", "axis2", "axis3", "grad"])
    for s in field_:
        w.writerow([repr(float(v)) for v in s.coord] + [repr(float(s.grad))])
    return buf.getvalue()


def write_grad_field(spec: GradFieldSpec, path, cfg: Optional[LossConfig] = None) -> list[GradFieldSample]:
    """Write the field as CSV at ``path`` plus a JSON sidecar next to it."""
    from pathlib import Path

    cfg = cfg or L.DEFAULT_CONFIG
    path = Path(path)
    field_ = sample_grad_field(spec, cfg)
    path.write_text(field_to_csv(field_))
    meta = {"spec": spec.to_dict(), "loss_config": dataclasses.asdict(cfg), "n_points": len(field_)}
    path.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return field_
