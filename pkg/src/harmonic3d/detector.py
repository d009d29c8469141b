"""Synthetic BEV scenes and a tiny per-anchor detector trained by manual backprop.

The scene generator writes each anchor's regression target (plus noise)
directly into its feature vector, so the learning problem isolates how the
training loss shapes classification confidence, localization and direction
estimation. The same :func:`predict` path serves models trained with either
loss kind.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from harmonic3d import losses as L
from harmonic3d.evaluation import Detection, FrameResult, evaluate, nms_indices
from harmonic3d.geometry import Box3D, boxes_to_array, decode_boxes, encode_boxes, iou_matrix, wrap_angles

log = logging.getLogger(__name__)

N_OUT = 9  # class logit, 7 offsets, direction logit
POSITIVE_MIN = 0
NEGATIVE = -1
IGNORED = -2


# -- scenes --------------------------------------------------------------------

@dataclass(frozen=True)
class SceneSpec:
    x_range: tuple = (0.0, 32.0)
    y_range: tuple = (-16.0, 16.0)
    anchor_stride: float = 1.0
    anchor_size: tuple = (3.9, 1.6, 1.56)  # l, w, h
    anchor_z: float = -1.0
    n_objects: tuple = (3, 6)
    l_range: tuple = (3.5, 4.8)
    w_range: tuple = (1.6, 2.0)
    h_range: tuple = (1.4, 1.8)
    z_jitter: float = 0.2
    yaw_range: tuple = (-math.pi, math.pi)
    #: base std of the noise on object evidence; grows with sensor range
    noise_sigma: float = 0.03
    #: direction cue noise, as a multiple of the evidence noise
    dir_noise_scale: float = 5.0
    #: regression-channel noise, as a multiple of the evidence noise
    offset_noise_scale: float = 2.0
    background_sigma: float = 0.5
    clutter_fraction: float = 0.02
    n_distractors: int = 1
    max_overlap_iou: float = 0.1
    placement_retries: int = 200
    seed: int = 0

    def __post_init__(self):
        for name in ("x_range", "y_range", "n_objects", "l_range", "w_range", "h_range", "yaw_range"):
            lo, hi = getattr(self, name)
            if not hi >= lo:
                raise ValueError(f"{name} must be an ordered pair, got {(lo, hi)}")
        if min(self.l_range[0], self.w_range[0], self.h_range[0], *self.anchor_size) <= 0:
            raise ValueError("object and anchor dimensions must be positive")
        if self.n_objects[0] < 0:
            raise ValueError("object counts must be nonnegative")
        if self.anchor_stride <= 0:
            raise ValueError("anchor_stride must be positive")
        if min(self.noise_sigma, self.background_sigma, self.dir_noise_scale, self.offset_noise_scale) < 0:
            raise ValueError("noise levels must be nonnegative")
        if not 0.0 <= self.clutter_fraction <= 1.0:
            raise ValueError("clutter_fraction must lie in [0, 1]")

    @property
    def n_features(self) -> int:
        return 11 + self.n_distractors


@dataclass
class Scene:
    """One synthetic frame.

    Feature channels per anchor: 0-6 noisy regression target, 7 noisy BEV IoU
    with the best gt, 8 direction cue (+-1 plus noise), 9 range fraction,
    10 IoU relative to that gt's best anchor, 11+ pure-noise distractors.
    Anchors without any gt overlap hold background noise instead.
    """

    gt_boxes: list
    anchors: np.ndarray  # (A, 7)
    features: np.ndarray  # (A, F)
    #: True when fewer objects than requested could be placed
    placement_failed: bool = False
    index: int = 0

    @property
    def anchor_boxes(self) -> list:
        return [Box3D.from_array(a) for a in self.anchors]


def make_anchors(spec: SceneSpec) -> np.ndarray:
    s = spec.anchor_stride
    xs = np.arange(spec.x_range[0] + s / 2, spec.x_range[1], s)
    ys = np.arange(spec.y_range[0] + s / 2, spec.y_range[1], s)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    l, w, h = spec.anchor_size
    rows = []
    for x, y in zip(gx.ravel(), gy.ravel()):
        for yaw in (0.0, math.pi / 2):
            rows.append((x, y, spec.anchor_z, l, w, h, yaw))
    return np.array(rows, dtype=np.float64)


def direction_label(yaw) -> np.ndarray:
    """1 where the wrapped heading lies in [0, pi), else 0."""
    y = wrap_angles(yaw)
    return ((y >= 0.0) & (y < math.pi)).astype(np.int64)


def fold_yaw(gt_yaw, anchor_yaw) -> np.ndarray:
    """Shift headings by pi where needed so they lie within pi/2 of the anchor."""
    d = wrap_angles(np.asarray(gt_yaw) - np.asarray(anchor_yaw))
    return np.where(np.abs(d) > math.pi / 2, wrap_angles(np.asarray(gt_yaw) + math.pi), gt_yaw)


def regression_targets(gt_rows: np.ndarray, anchors: np.ndarray) -> np.ndarray:
    """Encoded offsets with the heading folded onto the anchor's half-plane.

    The direction head carries the remaining pi ambiguity.
    """
    g = np.array(gt_rows, dtype=np.float64, copy=True)
    g[:, 6] = fold_yaw(g[:, 6], anchors[:, 6])
    return encode_boxes(g, anchors)


def _place_objects(spec: SceneSpec, rng: np.random.Generator):
    n_target = int(rng.integers(spec.n_objects[0], spec.n_objects[1] + 1))
    margin = 0.5 * spec.l_range[1]
    boxes: list = []
    tries = 0
    while len(boxes) < n_target and tries < spec.placement_retries:
        tries += 1
        cand = Box3D(
            x=rng.uniform(spec.x_range[0] + margin, spec.x_range[1] - margin),
            y=rng.uniform(spec.y_range[0] + margin, spec.y_range[1] - margin),
            z=spec.anchor_z + rng.uniform(-spec.z_jitter, spec.z_jitter),
            l=rng.uniform(*spec.l_range),
            w=rng.uniform(*spec.w_range),
            h=rng.uniform(*spec.h_range),
            yaw=rng.uniform(*spec.yaw_range),
        )
        if boxes and iou_matrix([cand], boxes, "bev").max() > spec.max_overlap_iou:
            continue
        boxes.append(cand)
    return boxes, len(boxes) < n_target


def gen_scene(spec: SceneSpec, index: int) -> Scene:
    """Build scene ``index`` of the stream defined by ``spec.seed``."""
    rng = np.random.default_rng([spec.seed, index])
    gts, failed = _place_objects(spec, rng)
    return _build_scene(spec, gts, failed, rng, index)


def scene_from_boxes(spec: SceneSpec, gt_boxes: Sequence[Box3D], index: int = 0) -> Scene:
    """Scene with caller-chosen objects; feature noise still comes from ``(seed, index)``."""
    rng = np.random.default_rng([spec.seed, index, 1])
    return _build_scene(spec, list(gt_boxes), False, rng, index)


def _build_scene(spec: SceneSpec, gts: list, failed: bool, rng: np.random.Generator, index: int) -> Scene:
    anchors = make_anchors(spec)
    A = len(anchors)
    F = spec.n_features

    r_max = math.hypot(max(abs(spec.x_range[0]), abs(spec.x_range[1])),
                       max(abs(spec.y_range[0]), abs(spec.y_range[1])))
    rng_frac = np.hypot(anchors[:, 0], anchors[:, 1]) / r_max
    sigma = spec.noise_sigma * (0.5 + 1.5 * rng_frac)

    feats = np.zeros((A, F))
    feats[:, :7] = rng.normal(0.0, 1.0, (A, 7)) * spec.background_sigma
    feats[:, 7] = rng.normal(0.0, 1.0, A) * sigma
    feats[:, 8] = rng.normal(0.0, 1.0, A) * sigma * spec.dir_noise_scale
    feats[:, 9] = rng_frac
    feats[:, 10] = rng.normal(0.0, 1.0, A) * sigma
    feats[:, 11:] = rng.normal(0.0, 1.0, (A, spec.n_distractors))

    evidence = np.zeros(A, dtype=bool)
    if gts:
        gt_rows = boxes_to_array(gts)
        ious = iou_matrix(anchors, gt_rows, "bev")
        best = ious.argmax(axis=1)
        m = ious[np.arange(A), best]
        evidence = m > 0
        idx = np.nonzero(evidence)[0]
        if len(idx):
            tgt = regression_targets(gt_rows[best[idx]], anchors[idx])
            noise7 = rng.normal(0.0, 1.0, (len(idx), 7)) * (sigma[idx, None] * spec.offset_noise_scale)
            feats[idx, :7] = tgt + noise7
            feats[idx, 7] = m[idx] + rng.normal(0.0, 1.0, len(idx)) * sigma[idx]
            # match quality relative to the gt's best anchor: 1 on the anchor that
            # the assignment always keeps, even when its raw IoU is low
            rel = m / ious.max(axis=0)[best]
            feats[idx, 10] = rel[idx] + rng.normal(0.0, 1.0, len(idx)) * sigma[idx]
            sign = 2.0 * direction_label(gt_rows[best[idx], 6]) - 1.0
            feats[idx, 8] = sign + rng.normal(0.0, 1.0, len(idx)) * sigma[idx] * spec.dir_noise_scale

    bg = np.nonzero(~evidence)[0]
    n_clutter = int(round(spec.clutter_fraction * len(bg)))
    if n_clutter:
        c = rng.choice(bg, size=n_clutter, replace=False)
        c.sort()
        feats[c, 7] += rng.uniform(0.3, 0.7, n_clutter)
        feats[c, 8] += rng.choice([-1.0, 1.0], n_clutter)
    return Scene(gts, anchors, feats, failed, index)


# -- target assignment --------------------------------------------------------------

@dataclass
class Assignment:
    #: per anchor: gt index (>= 0) for positives, NEGATIVE or IGNORED otherwise
    labels: np.ndarray
    max_iou: np.ndarray

    @property
    def positive(self) -> np.ndarray:
        return self.labels >= POSITIVE_MIN

    @property
    def negative(self) -> np.ndarray:
        return self.labels == NEGATIVE


def assign_targets(scene: Scene, pos_iou: float = 0.6, neg_iou: float = 0.45) -> Assignment:
    """Label anchors by BEV IoU; each gt's best anchor is forced positive."""
    if not 0.0 <= neg_iou < pos_iou <= 1.0:
        raise ValueError(f"need 0 <= neg_iou < pos_iou <= 1, got {neg_iou}, {pos_iou}")
    A = len(scene.anchors)
    if not scene.gt_boxes:
        return Assignment(np.full(A, NEGATIVE, dtype=np.int64), np.zeros(A))
    ious = iou_matrix(scene.anchors, scene.gt_boxes, "bev")
    best_gt = ious.argmax(axis=1)  # first max -> lowest gt index on ties
    m = ious[np.arange(A), best_gt]
    labels = np.full(A, IGNORED, dtype=np.int64)
    labels[m < neg_iou] = NEGATIVE
    pos = m >= pos_iou
    labels[pos] = best_gt[pos]
    # an anchor forced by several gts keeps the usual tie-break (highest IoU, then lowest index)
    best_anchor = ious.argmax(axis=0)
    for g, a in enumerate(best_anchor):
        if ious[a, g] > 0:
            labels[a] = best_gt[a]
    return Assignment(labels, m)


def anchor_targets(scene: Scene, assignment: Assignment):
    """Regression and direction targets for the positive anchors."""
    pos = np.nonzero(assignment.positive)[0]
    if len(pos) == 0:
        return pos, np.zeros((0, 7)), np.zeros(0, dtype=np.int64)
    gt_rows = boxes_to_array(scene.gt_boxes)[assignment.labels[pos]]
    return pos, regression_targets(gt_rows, scene.anchors[pos]), direction_label(gt_rows[:, 6])


# -- model -------------------------------------------------------------------------

@dataclass
class ToyModel:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    seed: int = 0

    PARAMS = ("W1", "b1", "W2", "b2")

    @classmethod
    def init(cls, n_features: int, hidden: int = 32, seed: int = 0, out_scale: float = 0.1,
             prior: float = 0.01) -> "ToyModel":
        """Random hidden layer, small output layer (offsets start near 0), class bias at ``prior``."""
        rng = np.random.default_rng(seed)
        b2 = np.zeros(N_OUT)
        b2[0] = -math.log((1.0 - prior) / prior)
        return cls(
            W1=rng.normal(0.0, 1.0 / math.sqrt(n_features), (n_features, hidden)),
            b1=np.zeros(hidden),
            W2=rng.normal(0.0, out_scale / math.sqrt(hidden), (hidden, N_OUT)),
            b2=b2,
            seed=seed,
        )

    @classmethod
    def zeros(cls, n_features: int, hidden: int = 32) -> "ToyModel":
        return cls(np.zeros((n_features, hidden)), np.zeros(hidden), np.zeros((hidden, N_OUT)), np.zeros(N_OUT))

    def params(self) -> dict:
        return {k: getattr(self, k) for k in self.PARAMS}

    def copy(self) -> "ToyModel":
        return ToyModel(*(getattr(self, k).copy() for k in self.PARAMS), seed=self.seed)

    def to_json(self) -> dict:
        return {
            "seed": self.seed,
            "params": {k: {"shape": list(v.shape), "data": v.ravel().tolist()} for k, v in self.params().items()},
        }

    @classmethod
    def from_json(cls, d: dict) -> "ToyModel":
        ps = {k: np.array(v["data"], dtype=np.float64).reshape(v["shape"]) for k, v in d["params"].items()}
        return cls(**ps, seed=d.get("seed", 0))


def _sigmoid(z):
    # split by sign to avoid overflow in exp
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _forward_raw(model: ToyModel, x: np.ndarray):
    a1 = x @ model.W1 + model.b1
    h = np.tanh(a1)
    return h, h @ model.W2 + model.b2


@dataclass
class ForwardOutput:
    p: np.ndarray
    offsets: np.ndarray
    p_dir: np.ndarray


def forward(model: ToyModel, scene: Scene) -> ForwardOutput:
    if scene.features.shape[1] != model.W1.shape[0]:
        raise ValueError(f"model expects {model.W1.shape[0]} features, scene has {scene.features.shape[1]}")
    _, out = _forward_raw(model, scene.features)
    return ForwardOutput(_sigmoid(out[:, 0]), out[:, 1:8], _sigmoid(out[:, 8]))


# -- objective and backprop --------------------------------------------------------------

@dataclass
class Batch:
    """Pre-assigned training data: stacked features plus per-anchor targets."""

    features: np.ndarray
    pos: np.ndarray
    neg: np.ndarray
    reg_target: np.ndarray
    dir_target: np.ndarray


def make_batch(scenes: Sequence[Scene], assignments: Sequence[Assignment]) -> Batch:
    feats, pos, neg, reg, dirs = [], [], [], [], []
    offset = 0
    for s, a in zip(scenes, assignments):
        p_idx, tgt, dt = anchor_targets(s, a)
        feats.append(s.features)
        pos.append(p_idx + offset)
        neg.append(np.nonzero(a.negative)[0] + offset)
        reg.append(tgt)
        dirs.append(dt)
        offset += len(s.features)
    return Batch(np.concatenate(feats), np.concatenate(pos), np.concatenate(neg),
                 np.concatenate(reg), np.concatenate(dirs))


@dataclass
class StepStats:
    objective: float
    l_cls: float
    l_reg: float
    l_dir: float
    l_neg: float
    n_pos: int


def objective_and_grads(model: ToyModel, batch: Batch, loss_kind: str,
                        cfg: L.LossConfig = L.DEFAULT_CONFIG):
    """Normalized batch objective and its gradient w.r.t. every model parameter.

    Positives contribute the selected composite loss, negatives the negative
    focal term; the sum is divided by the positive count.
    """
    h, out = _forward_raw(model, batch.features)
    p = _sigmoid(out[:, 0])
    p_dir = _sigmoid(out[:, 8])
    norm = max(1, len(batch.pos))
    d_out = np.zeros_like(out)

    pos = batch.pos
    rec = L.grads_array(loss_kind, p[pos], out[pos, 1:8] - batch.reg_target, p_dir[pos], batch.dir_target, cfg)
    terms = L.loss_terms(p[pos], out[pos, 1:8] - batch.reg_target, p_dir[pos], batch.dir_target, cfg)
    pp = p[pos]
    pd = p_dir[pos]
    d_out[pos, 0] = np.asarray(rec.d_p) * pp * (1.0 - pp)
    d_out[pos, 1:8] = rec.d_delta
    d_out[pos, 8] = np.asarray(rec.d_pdir) * pd * (1.0 - pd)

    neg = batch.neg
    pn = p[neg]
    l_neg = np.asarray(L.focal_loss_negative(pn, cfg))
    d_out[neg, 0] = np.asarray(L.focal_loss_negative_grad(pn, cfg)) * pn * (1.0 - pn)

    objective = (float(np.sum(rec.loss)) + float(np.sum(l_neg))) / norm
    d_out /= norm

    dW2 = h.T @ d_out
    db2 = d_out.sum(axis=0)
    da1 = (d_out @ model.W2.T) * (1.0 - h * h)
    dW1 = batch.features.T @ da1
    db1 = da1.sum(axis=0)
    grads = {"W1": dW1, "b1": db1, "W2": dW2, "b2": db2}

    n = max(1, len(pos))
    stats = StepStats(
        objective=objective,
        l_cls=float(np.sum(terms.l_cls)) / n,
        l_reg=float(np.sum(terms.l_reg)) / n,
        l_dir=float(np.sum(terms.l_dir)) / n,
        l_neg=float(np.sum(l_neg)) / norm,
        n_pos=len(pos),
    )
    return objective, grads, stats


# -- training ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    loss_kind: str = "harmonic"
    epochs: int = 30
    lr: float = 0.1
    momentum: float = 0.9
    batch_size: int = 4
    train_scenes: int = 48
    val_scenes: int = 24
    pos_iou: float = 0.6
    neg_iou: float = 0.45
    hidden: int = 32
    score_thr: float = 0.1
    nms_iou: float = 0.1
    pre_nms_top_k: int = 200
    #: run validation every this many epochs (the last epoch always runs)
    eval_every: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.loss_kind not in L.LOSS_KINDS:
            raise ValueError(f"unknown loss kind {self.loss_kind!r}")
        if not self.pos_iou > self.neg_iou > 0:
            raise ValueError("need pos_iou > neg_iou > 0")
        for name in ("lr", "batch_size", "train_scenes", "val_scenes", "hidden", "eval_every"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int, history: list):
        super().__init__(f"non-finite loss at epoch {epoch}")
        self.epoch = epoch
        self.history = history


@dataclass
class Dataset:
    train: list
    val: list
    train_assign: list


def make_dataset(spec: SceneSpec, cfg: TrainConfig) -> Dataset:
    """Training scenes use indices [0, n_train); validation follows them."""
    train = [gen_scene(spec, i) for i in range(cfg.train_scenes)]
    val = [gen_scene(spec, cfg.train_scenes + i) for i in range(cfg.val_scenes)]
    assign = [assign_targets(s, cfg.pos_iou, cfg.neg_iou) for s in train]
    return Dataset(train, val, assign)


def validation_metrics(model: ToyModel, scenes: Sequence[Scene], cfg: TrainConfig) -> dict:
    frames = [FrameResult(s.gt_boxes, predict(model, s, cfg.score_thr, cfg.nms_iou, cfg.pre_nms_top_k))
              for s in scenes]
    summ = evaluate(frames, (0.7, 0.5), "bev")
    return {
        "ap_07": summ.ap[0.7],
        "ap_05": summ.ap[0.5],
        "aos_07": summ.aos[0.7],
        "pearson_r": summ.pearson_r,
    }


def train(cfg: TrainConfig, spec: SceneSpec, loss_cfg: L.LossConfig = L.DEFAULT_CONFIG,
          dataset: Optional[Dataset] = None):
    """SGD with momentum on the synthetic stream.

    Returns:
        ``(model, history)`` where history holds one dict per epoch with mean
        per-positive loss terms and, on evaluation epochs, validation metrics.

    Raises:
        TrainingDiverged: the objective became non-finite.
    """
    data = dataset or make_dataset(spec, cfg)
    model = ToyModel.init(spec.n_features, cfg.hidden, seed=cfg.seed)
    velocity = {k: np.zeros_like(v) for k, v in model.params().items()}
    order_rng = np.random.default_rng([cfg.seed, 1])
    history: list = []
    n = len(data.train)
    for epoch in range(1, cfg.epochs + 1):
        order = order_rng.permutation(n)
        acc = {"objective": 0.0, "l_cls": 0.0, "l_reg": 0.0, "l_dir": 0.0, "l_neg": 0.0}
        steps = 0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            batch = make_batch([data.train[i] for i in idx], [data.train_assign[i] for i in idx])
            obj, grads, st = objective_and_grads(model, batch, cfg.loss_kind, loss_cfg)
            if not math.isfinite(obj):
                raise TrainingDiverged(epoch, history)
            for k, g in grads.items():
                v = velocity[k]
                v *= cfg.momentum
                v -= cfg.lr * g
                getattr(model, k)[...] += v
            for k in acc:
                acc[k] += getattr(st, k)
            steps += 1
        rec = {"epoch": epoch, **{k: v / max(1, steps) for k, v in acc.items()}}
        if epoch % cfg.eval_every == 0 or epoch == cfg.epochs:
            rec.update(validation_metrics(model, data.val, cfg))
        log.debug("epoch %d %s", epoch, rec)
        history.append(rec)
    return model, history


# -- inference --------------------------------------------------------------------------

def decode_predictions(anchors: np.ndarray, p: np.ndarray, offsets: np.ndarray, p_dir: np.ndarray,
                       score_thr: float, nms_iou: float, pre_nms_top_k: Optional[int] = None) -> list:
    """Turn per-anchor head outputs into scored boxes after thresholding and NMS."""
    if not (0.0 <= nms_iou <= 1.0) or score_thr < 0:
        raise ValueError("thresholds must lie in [0, 1]")
    idx = np.nonzero(p >= score_thr)[0]
    if len(idx) == 0:
        return []
    if pre_nms_top_k is not None and len(idx) > pre_nms_top_k:
        top = np.argsort(-p[idx], kind="stable")[:pre_nms_top_k]
        idx = np.sort(idx[top])
    d = np.array(offsets[idx], dtype=np.float64, copy=True)
    d[:, 3:6] = np.clip(d[:, 3:6], -5.0, 5.0)
    boxes = decode_boxes(d, anchors[idx])
    want = p_dir[idx] >= 0.5
    flip = direction_label(boxes[:, 6]).astype(bool) != want
    boxes[flip, 6] = wrap_angles(boxes[flip, 6] + math.pi)
    keep = nms_indices(boxes, p[idx], nms_iou, "bev")
    return [Detection(Box3D.from_array(boxes[k]), float(p[idx[k]])) for k in keep]


def predict(model: ToyModel, scene: Scene, score_thr: float = 0.1, nms_iou: float = 0.1,
            pre_nms_top_k: Optional[int] = 200) -> list:
    out = forward(model, scene)
    return decode_predictions(scene.anchors, out.p, out.offsets, out.p_dir, score_thr, nms_iou, pre_nms_top_k)


# -- benchmark -------------------------------------------------------------------------

BENCH_FIELDS = ("seed", "loss_kind", "ap_07", "ap_05", "aos_07", "pearson_r")


def run_benchmark(cfg: TrainConfig, spec: SceneSpec, seeds: Sequence[int],
                  loss_cfg: L.LossConfig = L.DEFAULT_CONFIG) -> list:
    """Train both loss kinds on identical data for every seed; one row per run."""
    rows = []
    for seed in seeds:
        s_spec = dataclasses.replace(spec, seed=seed)
        data = make_dataset(s_spec, dataclasses.replace(cfg, seed=seed))
        for kind in L.LOSS_KINDS:
            c = dataclasses.replace(cfg, loss_kind=kind, seed=seed)
            model, _ = train(c, s_spec, loss_cfg, dataset=data)
            m = validation_metrics(model, data.val, c)
            rows.append({"seed": seed, "loss_kind": kind, **m})
    return rows


def bench_medians(rows: Sequence[dict]) -> dict:
    out = {}
    for kind in L.LOSS_KINDS:
        sel = [r for r in rows if r["loss_kind"] == kind]
        out[kind] = {}
        for k in ("ap_07", "ap_05", "aos_07", "pearson_r"):
            vals = [r[k] for r in sel if r[k] is not None]
            out[kind][k] = float(np.median(vals)) if vals else None
    return out


def save_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
