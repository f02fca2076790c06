"""Sub-tractogram partitioning, augmentation, training, inference, metrics."""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from .core import Tractogram, compute_normalization, normalize, normalize_points, reverse
from .embedding import embed_tokens, input_dim
from .errors import (
    EmptyTractogram,
    LabelOutOfRange,
    LengthMismatch,
    ModelConfigMismatch,
    NonFiniteLoss,
    UnknownCluster,
)
from .nn import autograd as ag
from .nn.model import EncoderConfig, as_params, forward, init_params
from .nn.optim import OptimizerState, adam_step, cosine_lr

log = logging.getLogger(__name__)

EMBEDDING_MODES = ("flip_invariant", "flip_augmented")


@dataclass
class SubTractogram:
    streamlines: np.ndarray
    indices: np.ndarray
    labels: np.ndarray | None = None

    def __len__(self):
        return len(self.indices)


def partition(t: Tractogram | int, context_size: int, rng) -> list[SubTractogram]:
    """Split a random permutation of the streamlines into chunks of ``context_size``.

    The last chunk holds the remainder and may be smaller.  ``t`` may also be a
    streamline count, in which case the chunks carry indices only.
    """
    n = t if isinstance(t, int) else len(t)
    if n == 0:
        raise EmptyTractogram("cannot partition an empty tractogram")
    if context_size < 1:
        raise ValueError("context_size must be >= 1")
    order = np.random.default_rng(rng).permutation(n)
    subs = []
    for start in range(0, n, context_size):
        idx = order[start : start + context_size]
        if isinstance(t, int):
            subs.append(SubTractogram(np.empty((len(idx), 0, 3), np.float32), idx))
        else:
            lab = None if t.labels is None else t.labels[idx]
            subs.append(SubTractogram(t.streamlines[idx], idx, lab))
    return subs


@dataclass(frozen=True)
class AugmentConfig:
    """Angle ranges are symmetric bounds in degrees: LR about x, AP about y, SI about z."""

    rot_lr: float = 45.0
    rot_ap: float = 10.0
    rot_si: float = 10.0
    noise_sigma: float = 0.001
    flip_prob: float = 0.5
    renormalize: bool = True

    @classmethod
    def for_mode(cls, mode: str, **overrides) -> "AugmentConfig":
        if mode not in EMBEDDING_MODES:
            raise ValueError(f"unknown embedding mode {mode!r}")
        flip = 0.5 if mode == "flip_augmented" else 0.0
        return cls(**{"flip_prob": flip, **overrides})


def rotation_matrix(lr_deg: float, ap_deg: float, si_deg: float) -> np.ndarray:
    """Composition R_lr @ R_ap @ R_si of rotations about x, y, z."""
    a, b, c = np.radians([lr_deg, ap_deg, si_deg])
    rx = np.array([[1, 0, 0], [0, math.cos(a), -math.sin(a)], [0, math.sin(a), math.cos(a)]])
    ry = np.array([[math.cos(b), 0, math.sin(b)], [0, 1, 0], [-math.sin(b), 0, math.cos(b)]])
    rz = np.array([[math.cos(c), -math.sin(c), 0], [math.sin(c), math.cos(c), 0], [0, 0, 1]])
    return rx @ ry @ rz


def random_flips(streamlines: np.ndarray, prob: float, rng: np.random.Generator) -> np.ndarray:
    """Reverse each streamline independently with probability ``prob``."""
    out = np.array(streamlines, copy=True)
    if prob > 0:
        mask = rng.random(len(out)) < prob
        out[mask] = reverse(out[mask])
    return out


def augment_points(x: np.ndarray, cfg: AugmentConfig, rng: np.random.Generator) -> np.ndarray:
    """Rotate, add noise, flip, renormalize an (n, 15, 3) block; returns float64."""
    x = np.asarray(x, dtype=np.float64)
    angles = [rng.uniform(-r, r) if r else 0.0 for r in (cfg.rot_lr, cfg.rot_ap, cfg.rot_si)]
    x = x @ rotation_matrix(*angles).T
    if cfg.noise_sigma:
        x = x + rng.normal(0.0, cfg.noise_sigma, size=x.shape)
    x = random_flips(x, cfg.flip_prob, rng)
    if cfg.renormalize:
        x = normalize_points(x, compute_normalization(x))
    return x


def augment(s: SubTractogram, cfg: AugmentConfig, rng) -> SubTractogram:
    rng = np.random.default_rng(rng)
    return SubTractogram(augment_points(s.streamlines, cfg, rng), s.indices, s.labels)


@dataclass
class ModelCheckpoint:
    """Everything needed to run inference; tensors are float32."""

    encoder: EncoderConfig
    embedding_mode: str
    params: dict[str, np.ndarray]
    train: dict = field(default_factory=dict)
    weight_decay_coupling: str = "l2"

    def __post_init__(self):
        if self.embedding_mode not in EMBEDDING_MODES:
            raise ModelConfigMismatch(f"unknown embedding mode {self.embedding_mode!r}")
        self.params = {k: np.asarray(v, dtype=np.float32) for k, v in self.params.items()}


@dataclass
class TrainConfig:
    batch_size: int = 64
    iterations: int = 50000
    context_size: int = 2000
    embedding_mode: str = "flip_invariant"
    seed: int = 0
    encoder: EncoderConfig | None = None
    lr: float = 8.5e-4
    weight_decay: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    augment: AugmentConfig | None = None
    dtype: str = "float64"

    def __post_init__(self):
        if self.embedding_mode not in EMBEDDING_MODES:
            raise ValueError(f"unknown embedding mode {self.embedding_mode!r}")
        want = input_dim(self.embedding_mode)
        if self.encoder is None:
            self.encoder = EncoderConfig(input_dim=want)
        elif self.encoder.input_dim != want:
            raise ModelConfigMismatch(
                f"{self.embedding_mode} needs input_dim {want}, encoder has {self.encoder.input_dim}"
            )
        if self.augment is None:
            self.augment = AugmentConfig.for_mode(self.embedding_mode)
        for name in ("batch_size", "context_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")

    def metadata(self) -> dict:
        d = asdict(self)
        d.pop("encoder")
        return d


def _sample_subject(t: Tractogram, n: int, rng: np.random.Generator) -> np.ndarray:
    if len(t) >= n:
        return rng.choice(len(t), size=n, replace=False)
    log.warning("subject has %d streamlines < context %d; sampling with replacement", len(t), n)
    return rng.choice(len(t), size=n, replace=True)


def train(
    data: Sequence[Tractogram],
    cfg: TrainConfig,
    progress: Callable[[int, float, float], None] | None = None,
) -> ModelCheckpoint:
    """Train on labeled subjects; each batch element is one augmented sub-tractogram.

    ``progress(iteration, loss, lr)`` is called after every optimizer step.
    """
    enc = cfg.encoder
    if not data:
        raise EmptyTractogram("no training subjects")
    for t in data:
        if t.labels is None:
            raise LabelOutOfRange("training tractograms must be labeled")
        t.check_labels(enc.num_classes)
    dtype = np.dtype(cfg.dtype)
    subjects = [normalize(t) for t in data]
    init_ss, data_ss, drop_ss = np.random.SeedSequence(cfg.seed).spawn(3)
    params = init_params(enc, np.random.default_rng(init_ss), dtype)
    data_rng = np.random.default_rng(data_ss)
    drop_rng = np.random.default_rng(drop_ss)
    state = OptimizerState(cfg.lr, cfg.weight_decay, cfg.beta1, cfg.beta2, cfg.eps)

    for it in range(cfg.iterations):
        lr = cosine_lr(it, cfg.iterations, cfg.lr)
        xs, ys = [], []
        for _ in range(cfg.batch_size):
            subj = subjects[data_rng.integers(len(subjects))]
            idx = _sample_subject(subj, cfg.context_size, data_rng)
            pts = augment_points(subj.streamlines[idx], cfg.augment, data_rng)
            xs.append(embed_tokens(pts, cfg.embedding_mode))
            ys.append(subj.labels[idx])
        x = np.stack(xs).astype(dtype)
        for p in params.values():
            p.grad = None
        loss = ag.cross_entropy(forward(x, params, enc, True, drop_rng), np.stack(ys))
        value = float(loss.data)
        if not math.isfinite(value):
            raise NonFiniteLoss(f"loss {value} at iteration {it} (lr {lr:.3g})")
        loss.backward()
        adam_step(params, state, lr)
        if progress is not None:
            progress(it, value, lr)

    return ModelCheckpoint(
        encoder=enc,
        embedding_mode=cfg.embedding_mode,
        params={k: p.data for k, p in params.items()},
        train=cfg.metadata(),
    )


@dataclass
class InferenceResult:
    labels: np.ndarray
    seconds: float
    streamlines_per_second: float
    num_subtractograms: int


def _batches(subs: list[SubTractogram], batch_sub: int) -> list[list[SubTractogram]]:
    full = [s for s in subs if len(s) == len(subs[0])]
    rest = [s for s in subs if len(s) != len(subs[0])]
    groups = [full[i : i + batch_sub] for i in range(0, len(full), batch_sub)]
    return groups + [[s] for s in rest]


def infer(
    model: ModelCheckpoint,
    t: Tractogram,
    context_size: int = 2000,
    batch_sub: int = 512,
    rng=0,
    threads: int = 1,
) -> InferenceResult:
    """Predict a cluster id for every streamline.

    The tractogram is normalized as a whole, randomly partitioned, and the
    sub-tractograms are classified in batches of ``batch_sub``, spread over
    ``threads`` workers.  Predictions come back in input order.
    """
    enc = model.encoder
    if enc.input_dim != input_dim(model.embedding_mode):
        raise ModelConfigMismatch("checkpoint input_dim does not match its embedding mode")
    if batch_sub < 1 or threads < 1:
        raise ValueError("batch_sub and threads must be >= 1")
    start = time.perf_counter()
    norm = normalize(t)
    subs = partition(norm, context_size, rng)
    params = as_params(model.params)

    def run(group):
        x = np.stack([embed_tokens(s.streamlines, model.embedding_mode) for s in group])
        with ag.no_grad():
            logits = forward(x.astype(np.float32), params, enc).data
        # argmax takes the lowest index on ties
        return group, logits.argmax(axis=-1)

    preds = np.empty(len(t), dtype=np.int64)
    groups = _batches(subs, batch_sub)
    if threads == 1:
        results = map(run, groups)
        for group, lab in results:
            for s, row in zip(group, lab):
                preds[s.indices] = row
    else:
        with threadpool_limits(1), ThreadPoolExecutor(threads) as pool:
            for group, lab in pool.map(run, groups):
                for s, row in zip(group, lab):
                    preds[s.indices] = row
    seconds = time.perf_counter() - start
    rate = len(t) / seconds if seconds > 0 else math.inf
    return InferenceResult(preds, seconds, rate, len(subs))


@dataclass(frozen=True)
class ClusterBundleMap:
    mapping: np.ndarray
    outlier: int | None = None

    def __post_init__(self):
        m = np.asarray(self.mapping, dtype=np.int64)
        if m.ndim != 1 or (m.size and m.min() < 0):
            raise ValueError("mapping must be a 1-D array of non-negative bundle ids")
        object.__setattr__(self, "mapping", m)

    @property
    def num_clusters(self) -> int:
        return len(self.mapping)

    @property
    def num_bundles(self) -> int:
        return len(np.unique(self.mapping))


def map_to_bundles(labels, m: ClusterBundleMap) -> np.ndarray:
    lab = np.asarray(labels, dtype=np.int64)
    bad = (lab < 0) | (lab >= m.num_clusters)
    if np.any(bad):
        raise UnknownCluster(f"cluster {int(lab[bad][0])} not in map of {m.num_clusters}")
    return m.mapping[lab]


@dataclass
class EvalReport:
    accuracy: float
    macro_f1: float
    classes: np.ndarray
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    support: np.ndarray
    seconds: float | None = None
    streamlines_per_second: float | None = None

    def summary(self) -> dict:
        d = {"accuracy": self.accuracy, "macro_f1": self.macro_f1, "num_classes": len(self.classes)}
        if self.seconds is not None:
            d["seconds"] = self.seconds
            d["streamlines_per_second"] = self.streamlines_per_second
        return d


def evaluate(pred, truth, num_classes: int | None = None) -> EvalReport:
    """Accuracy and macro F1 over the classes present in ``pred`` or ``truth``."""
    pred = np.asarray(pred, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    if pred.shape != truth.shape:
        raise LengthMismatch(f"{len(pred)} predictions vs {len(truth)} labels")
    if pred.size == 0:
        raise EmptyTractogram("nothing to evaluate")
    if num_classes is not None and max(pred.max(), truth.max()) >= num_classes:
        raise LabelOutOfRange(f"labels must lie in [0, {num_classes})")
    classes = np.union1d(pred, truth)
    p_idx = np.searchsorted(classes, pred)
    t_idx = np.searchsorted(classes, truth)
    k = len(classes)
    tp = np.bincount(t_idx[pred == truth], minlength=k).astype(np.float64)
    pred_count = np.bincount(p_idx, minlength=k).astype(np.float64)
    true_count = np.bincount(t_idx, minlength=k).astype(np.float64)
    precision = np.divide(tp, pred_count, out=np.zeros(k), where=pred_count > 0)
    recall = np.divide(tp, true_count, out=np.zeros(k), where=true_count > 0)
    denom = precision + recall
    f1 = np.divide(2 * precision * recall, denom, out=np.zeros(k), where=denom > 0)
    return EvalReport(
        accuracy=float(np.mean(pred == truth)),
        macro_f1=float(f1.mean()),
        classes=classes,
        precision=precision,
        recall=recall,
        f1=f1,
        support=true_count.astype(np.int64),
    )


STABILITY_MODES = ("none", "flips", "rsp", "both")


@dataclass
class StabilityResult:
    mode: str
    accuracies: np.ndarray

    @property
    def mean(self) -> float:
        return float(self.accuracies.mean())

    @property
    def std(self) -> float:
        """Population standard deviation of the accuracy fractions."""
        # shifting first keeps identical runs at exactly 0
        return float((self.accuracies - self.accuracies[0]).std())

    def summary(self) -> dict:
        return {
            "mode": self.mode,
            "runs": len(self.accuracies),
            "mean": self.mean,
            "std": self.std,
            "mean_pct": 100 * self.mean,
            "std_pct": 100 * self.std,
        }


def stability_experiment(
    model: ModelCheckpoint,
    t: Tractogram,
    n_runs: int = 20,
    mode: str = "both",
    context_size: int = 2000,
    batch_sub: int = 512,
    seed: int = 0,
    threads: int = 1,
) -> StabilityResult:
    """Repeat inference under random flips and/or random partitioning.

    Without ``rsp`` every run reuses the partition seed ``seed``; with it,
    run ``i`` partitions with a seed derived from ``(seed, i)``.
    """
    if mode not in STABILITY_MODES:
        raise ValueError(f"mode must be one of {STABILITY_MODES}")
    if t.labels is None:
        raise LabelOutOfRange("stability experiments need a labeled tractogram")
    flips = mode in ("flips", "both")
    rsp = mode in ("rsp", "both")
    flip_rng = np.random.default_rng([seed, 1])
    accs = []
    for i in range(n_runs):
        x = random_flips(t.streamlines, 0.5, flip_rng) if flips else t.streamlines
        part_seed = [seed, 2, i] if rsp else seed
        res = infer(model, Tractogram(x), context_size, batch_sub, part_seed, threads)
        accs.append(float(np.mean(res.labels == t.labels)))
    return StabilityResult(mode, np.array(accs))

