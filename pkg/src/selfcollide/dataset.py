"""Balanced, split, persisted classification datasets.

Robot datasets are uniform joint configurations labelled by the geometric
checker; the 2-D dataset labels points of the unit square by membership in a
fixed union of discs. Both are balanced by discarding surplus samples of the
majority class and split 70:20:10 with equal class counts in every split.
"""

from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .encoding import encode_batch
from .errors import ClassStarvation, DimensionMismatch, EmptyDataset, FormatError
from .robot import RobotModel, self_collision_batch

SPLITS = ("train", "test", "val")
SPLIT_FRACTIONS = (0.7, 0.2, 0.1)

DISC_CENTRES = np.array([
    [0.25, 0.25], [0.75, 0.25], [0.5, 0.5], [0.2, 0.8], [0.8, 0.75], [0.6, 0.15],
])
DISC_RADII = np.array([0.12, 0.08, 0.15, 0.1, 0.07, 0.05])

STARVATION_DRAWS = 10 ** 6
STARVATION_FREQ = 0.01


@dataclass
class Dataset:
    """Raw features ``X`` (n, d), labels ``y`` in {0, 1}, per-row split tag."""

    X: np.ndarray
    y: np.ndarray
    split: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        self.split = np.asarray(self.split, dtype="<U5")
        if self.X.ndim != 2:
            raise DimensionMismatch("features must be a 2-D array")
        if not len(self.X) == len(self.y) == len(self.split):
            raise DimensionMismatch("features, labels and split tags differ in length")
        if not np.all((self.y == 0) | (self.y == 1)):
            raise ValueError("labels must be 0 or 1")
        if not np.all(np.isin(self.split, SPLITS)):
            raise ValueError(f"split tags must be one of {SPLITS}")

    def __len__(self):
        return len(self.y)

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def part(self, name: str, level: int = 0):
        """``(X, y)`` of one split, optionally positionally encoded."""
        if name not in SPLITS:
            raise ValueError(f"unknown split {name!r}")
        mask = self.split == name
        return encode_batch(self.X[mask], level), self.y[mask]

    def counts(self) -> dict:
        return {
            s: {str(c): int(np.sum((self.split == s) & (self.y == c))) for c in (0, 1)}
            for s in SPLITS
        }

    def __eq__(self, other):
        return (
            isinstance(other, Dataset)
            and np.array_equal(self.X, other.X)
            and np.array_equal(self.y, other.y)
            and np.array_equal(self.split, other.split)
            and self.meta == other.meta
        )


# --------------------------------------------------------------------------
# splitting and balancing
# --------------------------------------------------------------------------

def split_sizes(n_per_class: int) -> tuple:
    """Per-class counts ``(train, test, val)`` summing to ``n_per_class``.

    Every split then holds twice its per-class count, so it is exactly
    balanced. Among such allocations the one closest to 70:20:10 (smallest
    worst-case deviation in samples) is chosen.
    """
    c = int(n_per_class)
    targets = [2 * c * f for f in SPLIT_FRACTIONS]
    best, best_key = None, None
    a0 = round(SPLIT_FRACTIONS[0] * c)
    for tr in range(max(0, a0 - 2), min(c, a0 + 2) + 1):
        for te in range(0, c - tr + 1):
            va = c - tr - te
            devs = [abs(2 * a - t) for a, t in zip((tr, te, va), targets)]
            key = (max(devs), sum(devs), -tr, -te)
            if best_key is None or key < best_key:
                best, best_key = (tr, te, va), key
    return best


def _assign_splits(y: np.ndarray, rng) -> np.ndarray:
    c = int(np.sum(y == 0))
    sizes = split_sizes(c)
    tags = np.repeat(np.array(SPLITS), sizes)
    split = np.empty(len(y), dtype="<U5")
    for cls in (0, 1):
        idx = np.nonzero(y == cls)[0]
        split[idx] = tags[rng.permutation(c)]
    return split


def _balanced_draw(draw, label, n_per_class, rng, batch, starvation_draws=None, pool=None):
    """Draw in batches until both classes have ``n_per_class`` samples.

    Keeps the first ``n_per_class`` of each class in draw order.
    """
    kept = {0: [], 1: []}
    have = np.zeros(2, dtype=np.int64)
    seen = np.zeros(2, dtype=np.int64)
    while have.min() < n_per_class:
        X = draw(rng, batch)
        y = label(X, pool)
        for cls in (0, 1):
            rows = X[y == cls]
            seen[cls] += len(rows)
            take = rows[: n_per_class - have[cls]]
            kept[cls].append(take)
            have[cls] += len(take)
        total = seen.sum()
        if starvation_draws and total >= starvation_draws and seen.min() < STARVATION_FREQ * total:
            raise ClassStarvation(
                f"class frequencies {seen[0] / total:.4%} / {seen[1] / total:.4%} after {total} draws"
            )
    X0, X1 = np.concatenate(kept[0]), np.concatenate(kept[1])
    # interleave the two classes by a seeded shuffle so rows are not grouped by label
    X = np.concatenate([X0, X1])
    y = np.repeat(np.array([0, 1]), n_per_class)
    order = rng.permutation(len(y))
    return X[order], y[order]


# --------------------------------------------------------------------------
# robot data
# --------------------------------------------------------------------------

def _robot_labeler(model: RobotModel, threads: int):
    def label(X, pool):
        if pool is None or threads <= 1:
            return self_collision_batch(model, X).astype(np.int64)
        parts = np.array_split(X, threads)
        return np.concatenate(list(pool.map(lambda p: self_collision_batch(model, p), parts))).astype(np.int64)

    return label


def sample_robot_dataset(model: RobotModel, n_per_class: int, seed: int = 0, *, threads: int = 1,
                         batch: int = 4096, starvation_draws: int = STARVATION_DRAWS) -> Dataset:
    """Uniform configurations in [-pi, pi]^dof, labelled by self-collision.

    The result depends only on ``seed``; ``threads`` changes speed, never output.
    """
    if n_per_class < 10:
        raise ValueError("n_per_class must be >= 10")
    rng = np.random.default_rng(seed)
    dof = model.dof

    def draw(r, m):
        return r.uniform(-np.pi, np.pi, size=(m, dof))

    label = _robot_labeler(model, threads)
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            X, y = _balanced_draw(draw, label, n_per_class, rng, batch, starvation_draws, pool)
    else:
        X, y = _balanced_draw(draw, label, n_per_class, rng, batch, starvation_draws)
    meta = {"d": dof, "source": "robot", "seed": int(seed), "robot_hash": model.content_hash()}
    return Dataset(X, y, _assign_splits(y, rng), meta)


# --------------------------------------------------------------------------
# 2-D data
# --------------------------------------------------------------------------

def disc_region_contains(points) -> np.ndarray:
    """1 where a point lies in (or on) any of the fixed discs, else 0."""
    p = np.asarray(points, dtype=np.float64)
    if p.ndim == 1:
        p = p[None]
    if p.shape[1] != 2:
        raise DimensionMismatch("points must be 2-D")
    d2 = np.sum((p[:, None, :] - DISC_CENTRES[None]) ** 2, axis=2)
    return np.any(d2 <= DISC_RADII ** 2, axis=1).astype(np.int64)


def sample_2d_dataset(n: int, seed: int = 0, *, batch: int = 65536) -> Dataset:
    """``n // 2`` points per class, uniform in the unit square."""
    if n < 100:
        raise ValueError("n must be >= 100")
    rng = np.random.default_rng(seed)
    X, y = _balanced_draw(
        lambda r, m: r.uniform(0.0, 1.0, size=(m, 2)),
        lambda X, pool: disc_region_contains(X),
        n // 2, rng, batch,
    )
    meta = {"d": 2, "source": "synthetic2d", "seed": int(seed), "robot_hash": None}
    return Dataset(X, y, _assign_splits(y, rng), meta)


# --------------------------------------------------------------------------
# persistence
# --------------------------------------------------------------------------

def meta_path(path) -> Path:
    return Path(str(path) + ".meta.json")


def save_dataset(path, ds: Dataset) -> None:
    """CSV ``f1..fd,label,split`` plus a ``<path>.meta.json`` sidecar."""
    path = Path(path)
    d = ds.d
    row = ",".join(["%.17g"] * d) + ",%d,%s"
    lines = [",".join([f"f{i + 1}" for i in range(d)] + ["label", "split"])]
    lines += [row % (*x, lab, s) for x, lab, s in zip(ds.X.tolist(), ds.y.tolist(), ds.split.tolist())]
    path.write_text("\n".join(lines) + "\n")
    meta = {"d": d, "source": ds.meta.get("source"), "seed": ds.meta.get("seed"),
            "robot_hash": ds.meta.get("robot_hash"), "counts": ds.counts()}
    meta_path(path).write_text(json.dumps(meta, indent=2) + "\n")


def load_dataset(path) -> Dataset:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise FileNotFoundError(f"cannot read dataset {path}: {exc}") from exc
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or not rows[0]:
        raise FormatError(f"{path}: empty file")
    header = rows[0]
    d = len(header) - 2
    expected = [f"f{i + 1}" for i in range(d)] + ["label", "split"]
    if d < 1 or header != expected:
        raise FormatError(f"{path}: header must be f1..fd,label,split, got {','.join(header)}")
    body = [r for r in rows[1:] if r]
    if not body:
        raise FormatError(f"{path}: no data rows")
    try:
        for i, r in enumerate(body, start=2):
            if len(r) != d + 2:
                raise FormatError(f"{path}:{i}: expected {d + 2} columns, got {len(r)}")
        X = np.array([[float(v) for v in r[:d]] for r in body])
        y = np.array([int(r[d]) for r in body])
    except ValueError as exc:
        if isinstance(exc, FormatError):
            raise
        raise FormatError(f"{path}: {exc}") from None
    split = np.array([r[d + 1] for r in body])
    try:
        ds = Dataset(X, y, split)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None
    if not np.all(np.isfinite(ds.X)):
        raise FormatError(f"{path}: non-finite feature values")
    mp = meta_path(path)
    if mp.exists():
        try:
            meta = json.loads(mp.read_text())
        except json.JSONDecodeError:
            raise FormatError(f"{mp}: corrupt metadata") from None
        if meta.get("d") != d:
            raise FormatError(f"{mp}: metadata d={meta.get('d')} but file has {d} features")
        if "counts" in meta and meta["counts"] != ds.counts():
            raise FormatError(f"{mp}: split counts disagree with {path}")
        ds.meta = {k: meta.get(k) for k in ("d", "source", "seed", "robot_hash")}
    else:
        ds.meta = {"d": d, "source": None, "seed": None, "robot_hash": None}
    return ds


# --------------------------------------------------------------------------
# train/test gap versus training-set size
# --------------------------------------------------------------------------

@dataclass
class GapRow:
    size: int
    train_accuracy: float
    test_accuracy: float
    gap: float
    gap_std: float


def _balanced_subsample(y, n, rng):
    per = n // 2
    idx = []
    for cls in (0, 1):
        pool = np.nonzero(y == cls)[0]
        if per > len(pool):
            raise ValueError(f"requested {per} samples of class {cls}, only {len(pool)} available")
        idx.append(rng.choice(pool, per, replace=False))
    return np.sort(np.concatenate(idx))


def train_gap_study(spec_fn, ds: Dataset, sizes, trials: int = 3, level: int = 0, cfg=None, seed: int = 0):
    """Train/test accuracy gap for growing dataset sizes.

    For a total size ``s`` the network trains on a balanced subsample of
    ``0.7 s`` training rows; test accuracy is taken on the whole test split.
    ``spec_fn(input_dim)`` builds the architecture. Returns a list of GapRow.
    """
    from .neuralnet import TrainConfig, accuracy, train

    sizes = [int(s) for s in sizes]
    if not sizes:
        raise ValueError("sizes must be non-empty")
    if sizes != sorted(sizes):
        raise ValueError("sizes must be ascending")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    cfg = cfg or TrainConfig()
    Xtr, ytr = ds.part("train", level)
    Xte, yte = ds.part("test", level)
    if len(Xtr) == 0 or len(Xte) == 0:
        raise EmptyDataset("dataset needs train and test rows")
    spec = spec_fn(Xtr.shape[1])
    out = []
    for s in sizes:
        gaps, tr_acc, te_acc = [], [], []
        for t in range(trials):
            rng = np.random.default_rng([seed, s, t])
            idx = _balanced_subsample(ytr, round(SPLIT_FRACTIONS[0] * s), rng)
            run_cfg = TrainConfig(**{**cfg.__dict__, "seed": seed * 1000 + t})
            params, _ = train(spec, Xtr[idx], ytr[idx], run_cfg)
            a_tr = accuracy(params, Xtr[idx], ytr[idx])
            a_te = accuracy(params, Xte, yte)
            tr_acc.append(a_tr)
            te_acc.append(a_te)
            gaps.append(a_tr - a_te)
        out.append(GapRow(s, float(np.mean(tr_acc)), float(np.mean(te_acc)),
                          float(np.mean(gaps)), float(np.std(gaps))))
    return out
