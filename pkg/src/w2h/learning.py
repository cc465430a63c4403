"""Features, labels, datasets and per-bit classifiers for ACI-IVP.

The feature vector covers the whole lookahead window: wind power per step, then
per-bus ``p_l, q_l, p_ts, q_ts`` per step (bus order of the case), per-node water
demand per step, hydrogen offtake per step, initial tank states and the
time-of-day fraction.  Labels are the binary block (problem binary order) followed
by the active block (inequality/cone rows in registry order).
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .classifiers import LEARNERS
from .conic import (SolverConfig, Solution, enumerate_binaries_oracle,
                    extract_active_set, solve_micp_bnb)
from .domain import CaseError, ScenarioTrace, W2HCase, wind_speed_to_power
from .model import InitialState, build_micp
from .problem import ConstraintId, MicpProblem
from .scenarios import STEPS_PER_DAY

log = logging.getLogger(__name__)

MODEL_FORMAT = "w2h-model"
MODEL_VERSION = 1
DATASET_FORMAT = "w2h-dataset"
DATASET_VERSION = 1

REFERENCE_ACCURACY = {"DT": 86.8, "KNN": 63.2, "SVM": 68.4, "NB": 35.4}
METHODS = ("DT", "KNN", "SVM", "NB")


class LayoutError(ValueError):
    """Feature or label layout does not match the model or problem."""


class DatasetError(RuntimeError):
    """The sampler could not supply enough feasible samples."""


# --- features -----------------------------------------------------------------------


def feature_names(case: W2HCase, horizon: int) -> tuple[str, ...]:
    names = [f"wind_power@{t}" for t in range(horizon)]
    for b in case.power.buses:
        for key in ("p_l", "q_l", "p_ts", "q_ts"):
            names += [f"{key}.{b.id}@{t}" for t in range(horizon)]
    for n in case.water.nodes:
        names += [f"d.{n.id}@{t}" for t in range(horizon)]
    if case.hydrogen is not None:
        names += [f"h_ts@{t}" for t in range(horizon)]
        names.append(f"V_ht0.{case.hydrogen.id}")
    names += [f"V_wt0.{tk.id}" for tk in case.water.tanks]
    names.append("time_of_day")
    return tuple(names)


@dataclass(frozen=True)
class Normalizer:
    """Min-max scaling fitted on training data; constant features are shifted only."""

    lo: np.ndarray
    span: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray) -> "Normalizer":
        X = np.atleast_2d(X)
        lo, hi = X.min(axis=0), X.max(axis=0)
        span = hi - lo
        return cls(lo, np.where(span > 0, span, 1.0))

    def normalize(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != len(self.lo):
            raise LayoutError(f"feature length {X.shape[-1]} != normalizer length {len(self.lo)}")
        return (X - self.lo) / self.span

    def denormalize(self, Z: np.ndarray) -> np.ndarray:
        return np.asarray(Z) * self.span + self.lo

    def to_dict(self) -> dict:
        return {"lo": self.lo.tolist(), "span": self.span.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Normalizer":
        return cls(np.array(d["lo"], dtype=float), np.array(d["span"], dtype=float))


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    names: tuple[str, ...]
    normalized: bool = False


def extract_features(case: W2HCase, scenario: ScenarioTrace, init: InitialState, horizon: int,
                     norm: Normalizer | None = None, start: int = 0) -> FeatureVector:
    """Whole-window feature vector; ``start`` is the step index of the window in its day."""
    if len(scenario) < horizon:
        raise CaseError(f"horizon {horizon} exceeds scenario length {len(scenario)}")
    vals: list[float] = []
    w = case.power.wind
    vals += [wind_speed_to_power(scenario.wind_speed[t], w) if w else 0.0 for t in range(horizon)]
    for b in case.power.buses:
        for key in ("p_l", "q_l", "p_ts", "q_ts"):
            vals += list(scenario.column(f"{key}.{b.id}")[:horizon])
    for n in case.water.nodes:
        vals += list(scenario.column(f"d.{n.id}")[:horizon])
    if case.hydrogen is not None:
        vals += list(scenario.column("h_ts")[:horizon])
        vals.append(float(init.v_ht))
    vals += [float(init.v_wt[tk.id]) for tk in case.water.tanks]
    vals.append((start % STEPS_PER_DAY) / STEPS_PER_DAY)
    x = np.array(vals, dtype=float)
    names = feature_names(case, horizon)
    if norm is not None:
        return FeatureVector(norm.normalize(x), names, True)
    return FeatureVector(x, names, False)


# --- labels -------------------------------------------------------------------------


@dataclass(frozen=True)
class LabelLayout:
    binaries: tuple[str, ...]
    active: tuple[str, ...]

    @classmethod
    def of(cls, problem: MicpProblem) -> "LabelLayout":
        return cls(tuple(str(problem.variables[i]) for i in problem.binaries),
                   tuple(str(c) for c in problem.inequality_ids()))

    @property
    def size(self) -> int:
        return len(self.binaries) + len(self.active)

    def digest(self) -> str:
        blob = "\n".join(self.binaries + ("|",) + self.active).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True)
class LabelVector:
    binary: np.ndarray
    active: np.ndarray
    layout: LabelLayout

    @property
    def bits(self) -> np.ndarray:
        return np.concatenate([self.binary, self.active]).astype(np.int8)

    @classmethod
    def from_bits(cls, bits, layout: LabelLayout) -> "LabelVector":
        bits = np.asarray(bits, dtype=np.int8)
        if len(bits) != layout.size:
            raise LayoutError(f"label length {len(bits)} != layout size {layout.size}")
        nb = len(layout.binaries)
        return cls(bits[:nb].copy(), bits[nb:].copy(), layout)

    def active_ids(self) -> set[ConstraintId]:
        return {ConstraintId.parse(c) for c, on in zip(self.layout.active, self.active) if on}

    def check(self, problem: MicpProblem) -> None:
        if LabelLayout.of(problem) != self.layout:
            raise LayoutError("label layout does not match the problem registry")


def extract_labels(problem: MicpProblem, solution: Solution,
                   act_tol: float | None = None) -> LabelVector:
    if not solution.optimal:
        raise ValueError(f"labels need an optimal solution, got {solution.status}")
    xb = solution.x[problem.binaries]
    if np.any(np.abs(xb - np.round(xb)) > 1e-6):
        raise ValueError("fractional binary in solution")
    active = extract_active_set(problem, solution, act_tol)
    layout = LabelLayout.of(problem)
    act = np.array([ConstraintId.parse(c) in active for c in layout.active], dtype=np.int8)
    return LabelVector(np.round(xb).astype(np.int8), act, layout)


# --- dataset ------------------------------------------------------------------------


def config_digest(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


@dataclass
class Dataset:
    X: np.ndarray
    Y: np.ndarray
    feature_names: tuple[str, ...]
    labels: LabelLayout
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self.Y = np.atleast_2d(np.asarray(self.Y, dtype=np.int8))
        if len(self.X) != len(self.Y):
            raise LayoutError("feature and label row counts differ")
        if self.X.shape[1] != len(self.feature_names):
            raise LayoutError("feature width does not match its layout")
        if self.Y.shape[1] != self.labels.size:
            raise LayoutError("label width does not match its layout")

    def __len__(self) -> int:
        return len(self.X)

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows, dtype=np.int64)
        prov = dict(self.provenance)
        if "scenario_ids" in prov:
            prov["scenario_ids"] = [prov["scenario_ids"][i] for i in rows]
        return Dataset(self.X[rows], self.Y[rows], self.feature_names, self.labels, prov)

    def split(self, test_fraction: float = 0.2, seed: int = 0) -> tuple["Dataset", "Dataset"]:
        if not 0 < test_fraction < 1:
            raise ValueError("test_fraction must be in (0, 1)")
        perm = np.random.default_rng(seed).permutation(len(self))
        n_test = max(1, int(round(test_fraction * len(self))))
        test, train = np.sort(perm[:n_test]), np.sort(perm[n_test:])
        tr, te = self.subset(train), self.subset(test)
        tr.provenance["split"] = te.provenance["split"] = {"seed": seed,
                                                          "test_fraction": test_fraction}
        return tr, te

    def save(self, path: str | Path) -> tuple[Path, Path]:
        """Write ``<path>.json`` (layout and provenance) and ``<path>.csv`` (matrix)."""
        base = Path(path)
        meta_path, csv_path = base.with_suffix(".json"), base.with_suffix(".csv")
        meta = {"format": DATASET_FORMAT, "version": DATASET_VERSION,
                "features": list(self.feature_names),
                "binaries": list(self.labels.binaries), "active": list(self.labels.active),
                "provenance": self.provenance}
        meta_path.write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x{j}" for j in range(self.X.shape[1])]
                       + [f"y{j}" for j in range(self.Y.shape[1])])
            for x, y in zip(self.X, self.Y):
                w.writerow([repr(float(v)) for v in x] + [str(int(v)) for v in y])
        return meta_path, csv_path

    @classmethod
    def load(cls, path: str | Path) -> "Dataset":
        base = Path(path)
        meta = json.loads(base.with_suffix(".json").read_text())
        if meta.get("format") != DATASET_FORMAT:
            raise LayoutError(f"{base}: not a dataset descriptor")
        if meta.get("version") != DATASET_VERSION:
            raise LayoutError(f"{base}: unsupported dataset version {meta.get('version')}")
        nf = len(meta["features"])
        with open(base.with_suffix(".csv"), newline="") as fh:
            rows = list(csv.reader(fh))[1:]
        data = np.array([[float(v) for v in r] for r in rows]) if rows else np.zeros((0, nf))
        labels = LabelLayout(tuple(meta["binaries"]), tuple(meta["active"]))
        return cls(data[:, :nf], data[:, nf:].astype(np.int8), tuple(meta["features"]), labels,
                   meta.get("provenance", {}))


def _solve_sample(args):
    case, sampler, seed, index, horizon, config, oracle_cap = args
    rng = np.random.default_rng([seed, index])
    scenario, init, start = sampler.draw(rng)
    problem = build_micp(case, scenario, init, horizon)
    if len(problem.binaries) <= oracle_cap:
        sol = enumerate_binaries_oracle(problem, config)
    else:
        sol = solve_micp_bnb(problem, config)
    if not sol.optimal:
        return index, None, sol.status
    phi = extract_features(case, scenario, init, horizon, start=start)
    theta = extract_labels(problem, sol, config.act_tol)
    return index, (phi.values, theta.bits, theta.layout), sol.status


def generate_dataset(case: W2HCase, sampler, count: int, config: SolverConfig | None = None,
                     seed: int = 0, max_attempts: int | None = None, oracle_cap: int = 0,
                     workers: int = 1) -> Dataset:
    """Solve ``count`` sampled problems offline and record (features, labels).

    Sample ``i`` draws from ``default_rng([seed, i])`` so results do not depend on the
    worker count; non-optimal samples are skipped and logged.  ``oracle_cap`` selects
    enumeration instead of branch-and-bound when the binary count is at most the cap.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    config = config or SolverConfig()
    horizon = sampler.horizon
    max_attempts = max_attempts or 3 * count
    rows: dict[int, tuple] = {}
    skipped: list[tuple[int, str]] = []
    next_index = 0
    pool = ProcessPoolExecutor(workers) if workers > 1 else None
    try:
        while len(rows) < count and next_index < max_attempts:
            batch = range(next_index, min(next_index + count - len(rows), max_attempts))
            next_index = batch.stop
            jobs = [(case, sampler, seed, i, horizon, config, oracle_cap) for i in batch]
            results = pool.map(_solve_sample, jobs) if pool else map(_solve_sample, jobs)
            for index, row, status in results:
                if row is None:
                    log.warning("sample %d skipped: %s", index, status)
                    skipped.append((index, status))
                else:
                    rows[index] = row
    finally:
        if pool:
            pool.shutdown()
    if len(rows) < count:
        raise DatasetError(f"sampler exhausted after {next_index} attempts: {len(rows)} "
                           f"feasible of {count} requested; skipped {skipped}")
    keep = sorted(rows)[:count]
    X = np.array([rows[i][0] for i in keep])
    Y = np.array([rows[i][1] for i in keep], dtype=np.int8)
    layout = rows[keep[0]][2]
    prov = {"case": case.name, "case_digest": case.digest(), "horizon": horizon,
            "seed": seed, "config_digest": config_digest(config.__dict__),
            "scenario_ids": [f"{seed}:{i}" for i in keep],
            "skipped": [f"{seed}:{i}:{s}" for i, s in skipped]}
    return Dataset(X, Y, feature_names(case, horizon), layout, prov)


# --- models -------------------------------------------------------------------------

DEFAULT_HYPER = {
    "DT": {"max_depth": 12, "min_leaf": 2},
    "KNN": {"k": 5},
    "NB": {"var_floor": 1e-9},
    "SVM": {"lam": 1e-2, "epochs": 200, "batch": 32, "seed": 0},
}


@dataclass
class TrainedModel:
    method: str
    hyper: dict
    feature_names: tuple[str, ...]
    labels: LabelLayout
    norm: Normalizer
    columns: np.ndarray  # label bit -> distinct training column
    learner: object
    meta: dict = field(default_factory=dict)

    def predict_bits(self, X: np.ndarray) -> np.ndarray:
        Z = self.norm.normalize(np.atleast_2d(X))
        return self.learner.predict(Z)[:, self.columns]

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        doc = {"format": MODEL_FORMAT, "version": MODEL_VERSION, "method": self.method,
               "hyper": self.hyper, "features": list(self.feature_names),
               "binaries": list(self.labels.binaries), "active": list(self.labels.active),
               "norm": self.norm.to_dict(), "columns": self.columns.tolist(),
               "learner": self.learner.to_dict(), "meta": self.meta}
        path.write_text(json.dumps(doc, sort_keys=True) + "\n")
        return path

    @classmethod
    def load(cls, path: str | Path) -> "TrainedModel":
        doc = json.loads(Path(path).read_text())
        if doc.get("format") != MODEL_FORMAT:
            raise LayoutError(f"{path}: not a model snapshot")
        if doc.get("version") != MODEL_VERSION:
            raise LayoutError(f"{path}: unsupported model version {doc.get('version')}")
        learner = LEARNERS[doc["method"]].from_dict(doc["learner"])
        return cls(doc["method"], doc["hyper"], tuple(doc["features"]),
                   LabelLayout(tuple(doc["binaries"]), tuple(doc["active"])),
                   Normalizer.from_dict(doc["norm"]), np.array(doc["columns"], dtype=np.int64),
                   learner, doc.get("meta", {}))


def train(method: str, data: Dataset, **hyper) -> TrainedModel:
    """Fit one classifier per distinct label column on min-max normalized features."""
    method = method.upper()
    if method not in LEARNERS:
        raise ValueError(f"unknown method {method!r}; expected one of {sorted(LEARNERS)}")
    if len(data) < (1 if method == "KNN" else 2):
        raise ValueError(f"{method} needs more training samples than {len(data)}")
    params = {**DEFAULT_HYPER[method], **hyper}
    norm = Normalizer.fit(data.X)
    uniq, columns = np.unique(data.Y, axis=1, return_inverse=True)
    learner = LEARNERS[method](**params).fit(norm.normalize(data.X), uniq)
    meta = {"n_train": len(data), "distinct_columns": int(uniq.shape[1]),
            "provenance": data.provenance}
    return TrainedModel(method, params, data.feature_names, data.labels, norm,
                        np.asarray(columns).reshape(-1), learner, meta)


def predict(model: TrainedModel, phi: FeatureVector | np.ndarray) -> LabelVector:
    if isinstance(phi, FeatureVector):
        if phi.normalized:
            raise LayoutError("predict expects raw features; the model normalizes")
        if phi.names != model.feature_names:
            raise LayoutError("feature layout does not match the model")
        x = phi.values
    else:
        x = np.asarray(phi, dtype=float)
        if x.shape[-1] != len(model.feature_names):
            raise LayoutError("feature length does not match the model")
    return LabelVector.from_bits(model.predict_bits(x)[0], model.labels)


# --- accuracy -----------------------------------------------------------------------


@dataclass
class AccuracyReport:
    method: str
    n_test: int
    per_bit: np.ndarray
    n_binary: int
    constant_bits: np.ndarray  # bits constant in training

    @property
    def mean_bit(self) -> float:
        return float(self.per_bit.mean())

    @property
    def mean_bit_binary(self) -> float:
        b = self.per_bit[: self.n_binary]
        return float(b.mean()) if len(b) else 1.0

    @property
    def mean_bit_active(self) -> float:
        a = self.per_bit[self.n_binary:]
        return float(a.mean()) if len(a) else 1.0

    exact_match: float = 0.0
    exact_match_binary: float = 0.0
    exact_match_active: float = 0.0

    def summary(self) -> dict:
        return {"method": self.method, "n_test": self.n_test, "mean_bit": self.mean_bit,
                "mean_bit_binary": self.mean_bit_binary,
                "mean_bit_active": self.mean_bit_active, "exact_match": self.exact_match,
                "exact_match_binary": self.exact_match_binary,
                "exact_match_active": self.exact_match_active,
                "constant_bits": int(self.constant_bits.sum())}


def accuracy_from_predictions(method: str, Y_true: np.ndarray, Y_pred: np.ndarray,
                              n_binary: int, constant_bits: np.ndarray | None = None
                              ) -> AccuracyReport:
    Y_true = np.atleast_2d(Y_true)
    Y_pred = np.atleast_2d(Y_pred)
    if len(Y_true) == 0:
        raise ValueError("empty test set")
    hit = Y_true == Y_pred
    rep = AccuracyReport(method, len(Y_true), hit.mean(axis=0), n_binary,
                         np.zeros(Y_true.shape[1], bool) if constant_bits is None
                         else constant_bits)
    rep.exact_match = float(hit.all(axis=1).mean())
    rep.exact_match_binary = float(hit[:, :n_binary].all(axis=1).mean())
    rep.exact_match_active = float(hit[:, n_binary:].all(axis=1).mean())
    return rep


def evaluate_accuracy(model: TrainedModel, test: Dataset) -> AccuracyReport:
    if len(test) == 0:
        raise ValueError("empty test set")
    if test.labels != model.labels or test.feature_names != model.feature_names:
        raise LayoutError("test set layout does not match the model")
    pred = model.predict_bits(test.X)
    const = getattr(model.learner, "constant", None)
    if const is None:  # KNN keeps the training labels themselves
        Yt = model.learner.Y
        const = np.where(Yt.min(axis=0) == Yt.max(axis=0), Yt[0], -1)
    constant_bits = np.asarray(const)[model.columns] >= 0
    return accuracy_from_predictions(model.method, test.Y, pred, len(model.labels.binaries),
                                     constant_bits)


def format_accuracy_table(reports: Iterable[AccuracyReport]) -> str:
    """Accuracy table: one row per metric, one column per method, and a final row
    of published reference accuracies."""
    reports = {r.method: r for r in reports}
    methods = [m for m in METHODS if m in reports] + sorted(set(reports) - set(METHODS))
    head = f"{'metric':<26}" + "".join(f"{m:>10}" for m in methods)
    lines = [head, "-" * len(head)]
    for key, label in (("mean_bit", "mean per-bit (%)"),
                       ("mean_bit_binary", "  binary block (%)"),
                       ("mean_bit_active", "  active block (%)"),
                       ("exact_match", "exact match (%)"),
                       ("exact_match_binary", "  binary block (%)"),
                       ("exact_match_active", "  active block (%)")):
        lines.append(f"{label:<26}" + "".join(
            f"{100 * reports[m].summary()[key]:>10.1f}" for m in methods))
    lines.append(f"{'constant bits':<26}" + "".join(
        f"{int(reports[m].constant_bits.sum()):>10d}" for m in methods))
    lines.append(f"{'reference (%)':<26}" + "".join(
        f"{REFERENCE_ACCURACY[m]:>10.1f}" if m in REFERENCE_ACCURACY else f"{'-':>10}" for m in methods))
    return "\n".join(lines) + "\n"
