"""Metrics, encoding-level sweeps, joint-space slices and latency benchmarks."""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .dataset import Dataset
from .encoding import encoded_length
from .errors import DimensionMismatch
from .neuralnet import CollisionModel, NetworkParams, TrainConfig, forward, preset_spec, train
from .robot import RobotModel, self_collision, self_collision_batch

THRESHOLD = 0.5
TP, TN, FP, FN = 0, 1, 2, 3
CATEGORY_NAMES = ("TP", "TN", "FP", "FN")
CATEGORY_COLOURS = np.array([
    [0, 0, 255],      # TP blue
    [0, 200, 0],      # TN green
    [255, 165, 0],    # FP orange
    [255, 0, 0],      # FN red
], dtype=np.uint8)


# --------------------------------------------------------------------------
# metrics
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Metrics:
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    @property
    def accuracy(self) -> float:
        return (self.tp + self.tn) / self.total if self.total else float("nan")

    @classmethod
    def from_labels(cls, y_true, y_pred) -> Metrics:
        t = np.asarray(y_true).reshape(-1) == 1
        p = np.asarray(y_pred).reshape(-1) == 1
        if t.shape != p.shape:
            raise DimensionMismatch(f"{len(t)} labels but {len(p)} predictions")
        return cls(int(np.sum(t & p)), int(np.sum(~t & ~p)), int(np.sum(~t & p)), int(np.sum(t & ~p)))


@dataclass(frozen=True)
class Summary:
    mean_accuracy: float
    std_accuracy: float
    n_trials: int


def aggregate(metrics) -> Summary:
    acc = np.array([m.accuracy for m in metrics])
    if acc.size == 0:
        raise ValueError("nothing to aggregate")
    return Summary(float(acc.mean()), float(acc.std()), int(acc.size))


def as_predictor(obj):
    """Callable mapping an (m, n) array to collision scores in [0, 1].

    Accepts NetworkParams (encoded inputs), CollisionModel (raw inputs),
    fitted estimators with ``predict_proba`` or ``predict``, or any callable.
    """
    if isinstance(obj, NetworkParams):
        return lambda X: forward(obj, X)
    if isinstance(obj, CollisionModel):
        return obj.predict_proba
    if hasattr(obj, "predict_proba"):
        return lambda X: obj.predict_proba(X)[:, 1]
    if hasattr(obj, "predict"):
        return obj.predict
    if callable(obj):
        return obj
    raise TypeError(f"cannot use {type(obj).__name__} as a predictor")


def predict_labels(predictor, X) -> np.ndarray:
    scores = np.asarray(as_predictor(predictor)(X), dtype=np.float64).reshape(-1)
    if len(scores) != len(X):
        raise DimensionMismatch(f"predictor returned {len(scores)} scores for {len(X)} inputs")
    return (scores >= THRESHOLD).astype(np.int64)


def evaluate(predictor, X, y) -> Metrics:
    """Confusion counts of ``predictor`` on ``(X, y)`` at threshold 0.5."""
    return Metrics.from_labels(y, predict_labels(predictor, X))


# --------------------------------------------------------------------------
# encoding-level sweep
# --------------------------------------------------------------------------

@dataclass
class SweepRow:
    L: int
    mean_accuracy: float
    std_accuracy: float
    input_length: int
    accuracies: list = field(default_factory=list)


@dataclass
class SweepResult:
    arch: str
    rows: list
    curves: dict = field(default_factory=dict)

    @property
    def best_L(self) -> int:
        return max(self.rows, key=lambda r: (r.mean_accuracy, -r.L)).L

    def row(self, L) -> SweepRow:
        for r in self.rows:
            if r.L == L:
                return r
        raise KeyError(L)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["L", "mean_accuracy", "std_accuracy", "input_length", "trials"])
            for r in self.rows:
                w.writerow([r.L, repr(r.mean_accuracy), repr(r.std_accuracy), r.input_length, len(r.accuracies)])


def sweep_L(arch, ds: Dataset, L_values, trials: int = 5, cfg: TrainConfig | None = None,
            seed: int = 0) -> SweepResult:
    """Train ``trials`` networks per encoding level and score them on the test split.

    ``arch`` is a preset name or a callable ``input_dim -> NetworkSpec``.
    Trial ``t`` uses training seed ``seed + t`` at every level.
    """
    L_values = [int(L) for L in L_values]
    if not L_values:
        raise ValueError("L_values must be non-empty")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    cfg = cfg or TrainConfig()
    make = (lambda n: preset_spec(arch, n)) if isinstance(arch, str) else arch
    rows, curves = [], {}
    for L in L_values:
        Xtr, ytr = ds.part("train", L)
        Xte, yte = ds.part("test", L)
        Xva, yva = ds.part("val", L)
        spec = make(Xtr.shape[1])
        accs, cs = [], []
        for t in range(trials):
            run = TrainConfig(**{**cfg.__dict__, "seed": seed + t})
            params, curve = train(spec, Xtr, ytr, run, Xva, yva)
            accs.append(evaluate(params, Xte, yte).accuracy)
            cs.append(curve)
        rows.append(SweepRow(L, float(np.mean(accs)), float(np.std(accs)), encoded_length(ds.d, L), accs))
        curves[L] = cs
    return SweepResult(arch if isinstance(arch, str) else getattr(arch, "__name__", "custom"), rows, curves)


def export_loss_curves(curves, path) -> None:
    """CSV of epoch, mean and population std of training loss across curves."""
    curves = list(curves)
    if not curves:
        raise ValueError("need at least one loss curve")
    losses = np.stack([np.asarray(c.train_loss) for c in curves])
    mean, std = losses.mean(axis=0), losses.std(axis=0)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "mean_loss", "std_loss"])
        for e in range(losses.shape[1]):
            w.writerow([e + 1, repr(float(mean[e])), repr(float(std[e]))])


# --------------------------------------------------------------------------
# joint-space slice
# --------------------------------------------------------------------------

@dataclass
class SliceRaster:
    """Category grid; ``grid[r, c]`` has joint ``joints[0]`` at ``angles[c]``
    and joint ``joints[1]`` at ``angles[r]``."""

    joints: tuple
    angles: np.ndarray
    configs: np.ndarray
    truth: np.ndarray
    predicted: np.ndarray
    grid: np.ndarray

    def counts(self) -> dict:
        return {name: int(np.sum(self.grid == k)) for k, name in enumerate(CATEGORY_NAMES)}

    def write_ppm(self, path) -> None:
        """Binary P6 image, highest angle of the second joint on the top row."""
        img = CATEGORY_COLOURS[self.grid[::-1]]
        h, w = self.grid.shape
        with open(path, "wb") as fh:
            fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
            fh.write(img.tobytes())

    def to_csv(self, path) -> None:
        a, b = self.joints
        res = len(self.angles)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"theta{a}", f"theta{b}", "truth", "predicted", "category"])
            for r in range(res):
                for c in range(res):
                    i = r * res + c
                    w.writerow([repr(float(self.angles[c])), repr(float(self.angles[r])),
                                int(self.truth[i]), int(self.predicted[i]), CATEGORY_NAMES[self.grid[r, c]]])


def slice_raster(predictor, robot: RobotModel, joints=(1, 2), fixed=None, resolution: int = 256) -> SliceRaster:
    """Compare ``predictor`` with the geometric checker on a 2-D joint slice.

    Cells are sampled at their centres over [-pi, pi]^2; every other joint
    takes its value from ``fixed`` (zeros by default). ``predictor`` receives
    raw (m, dof) configurations.
    """
    a, b = (int(j) for j in joints)
    dof = robot.dof
    if a == b or not (0 <= a < dof and 0 <= b < dof):
        raise DimensionMismatch(f"joints {joints} are not two distinct joints of a {dof}-joint robot")
    if resolution < 16:
        raise ValueError("resolution must be >= 16")
    base = np.zeros(dof) if fixed is None else np.asarray(fixed, dtype=np.float64)
    if base.shape != (dof,):
        raise DimensionMismatch(f"fixed values must have {dof} entries")
    angles = -np.pi + (np.arange(resolution) + 0.5) * (2 * np.pi / resolution)
    configs = np.tile(base, (resolution * resolution, 1))
    configs[:, a] = np.tile(angles, resolution)
    configs[:, b] = np.repeat(angles, resolution)
    truth = self_collision_batch(robot, configs).astype(np.int64)
    pred = predict_labels(predictor, configs)
    cat = np.where(truth == 1, np.where(pred == 1, TP, FN), np.where(pred == 1, FP, TN))
    return SliceRaster((a, b), angles, configs, truth, pred, cat.reshape(resolution, resolution))


# --------------------------------------------------------------------------
# latency
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class TimingRow:
    method: str
    subset: str
    batch_size: int
    mean_ns: float
    std_ns: float
    median_ns: float
    samples: int

    @property
    def cov(self) -> float:
        return self.std_ns / self.mean_ns


@dataclass
class TimingReport:
    rows: list

    def get(self, method, batch_size=1, subset="all") -> TimingRow:
        for r in self.rows:
            if (r.method, r.batch_size, r.subset) == (method, batch_size, subset):
                return r
        raise KeyError((method, batch_size, subset))

    @property
    def methods(self) -> list:
        return list(dict.fromkeys(r.method for r in self.rows))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["method", "subset", "batch_size", "mean_ns", "std_ns", "median_ns", "samples"])
            for r in self.rows:
                w.writerow([r.method, r.subset, r.batch_size, repr(r.mean_ns), repr(r.std_ns),
                            repr(r.median_ns), r.samples])


def oracle_checker(robot: RobotModel):
    """Geometric checker with the same call shape as a learned predictor."""
    def check(Q):
        Q = np.asarray(Q)
        if len(Q) == 1:
            return np.array([float(self_collision(robot, Q[0]))])
        return self_collision_batch(robot, Q).astype(np.float64)
    return check


def _row(method, subset, b, per_query, samples=None):
    return TimingRow(method, subset, b, float(per_query.mean()), float(per_query.std()),
                     float(np.median(per_query)), int(samples if samples is not None else per_query.size))


def bench_latency(methods: dict, queries, repetitions: int = 5, batch_sizes=(100,), labels=None,
                  warmup: int = 100) -> TimingReport:
    """Wall-clock latency of each checker on the same queries.

    Single-query latency of a query is the median of its ``repetitions``
    timings (single BLAS thread); mean/std/median are then taken across
    queries. With ``labels`` the single-query statistics are also reported
    for the colliding and collision-free subsets. For batch size ``b`` the
    per-query figure is each batch's time divided by ``b``.
    """
    Q = np.asarray(queries, dtype=np.float64)
    if Q.ndim != 2 or len(Q) < 1000:
        raise ValueError("need at least 1000 queries")
    if repetitions < 5:
        raise ValueError("repetitions must be >= 5")
    lab = None if labels is None else np.asarray(labels).reshape(-1)
    if lab is not None and len(lab) != len(Q):
        raise DimensionMismatch("labels and queries differ in length")
    clock = time.perf_counter_ns
    rows = []
    with threadpool_limits(1):
        for name, raw in methods.items():
            fn = as_predictor(raw)
            for i in range(min(warmup, len(Q))):
                fn(Q[i:i + 1])
            times = np.empty((repetitions, len(Q)))
            for r in range(repetitions):
                for i in range(len(Q)):
                    q = Q[i:i + 1]
                    t0 = clock()
                    fn(q)
                    times[r, i] = clock() - t0
            per_query = np.median(times, axis=0)
            rows.append(_row(name, "all", 1, per_query))
            if lab is not None:
                for subset, sel in (("collision", lab == 1), ("free", lab == 0)):
                    if sel.any():
                        rows.append(_row(name, subset, 1, per_query[sel]))
            for b in batch_sizes:
                b = int(b)
                if b <= 1:
                    continue
                starts = range(0, len(Q) - b + 1, b)
                bt = np.empty((repetitions, len(starts)))
                for r in range(repetitions):
                    for j, s in enumerate(starts):
                        chunk = Q[s:s + b]
                        t0 = clock()
                        fn(chunk)
                        bt[r, j] = clock() - t0
                per_query = np.median(bt, axis=0) / b
                rows.append(_row(name, "all", b, per_query, samples=len(starts) * b))
    return TimingReport(rows)
