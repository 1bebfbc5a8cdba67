"""Cleaning prioritization over incomplete training data via certain predictions.

A training set with missing feature cells and a finite candidate-repair set
per cell implicitly defines a product space of possible worlds, one world per
joint choice of candidates. Queries over that space:

* counting query — per label, how many worlds predict it for a point;
* checking query — whether every world agrees (a certain prediction);
* prediction entropy — mean per-point Shannon entropy of the counting tallies;
* conditional entropy — expected entropy after fixing one cell, averaged
  uniformly over its candidates.

The greedy loop repeatedly repairs the cell with the smallest conditional
entropy, which targets the human effort at the cells that actually move
validation predictions.

Enumeration is the reference semantics. The engine below vectorizes it over
world chunks but is plain enumeration: every world is materialized, fitted,
and classified with the exact float operations of :mod:`dqops.knn`, so tallies
are bit-identical to a naive loop. A cap (default 10^6 worlds) guards cost.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Mapping

import numpy as np

from dqops.core import (
    DataError,
    LabeledDataset,
    LabelSpace,
    Seed,
    _as_label_vector,
    _expect_header,
    _format_float,
    _parse_feature_cell,
    subseed_rng,
)
from dqops.knn import KnnConfig, scale_features, vote_on_distances

Cell = tuple[int, int]

DEFAULT_WORLD_CAP = 10**6
DEFAULT_GENERATORS = ("mean", "median", "per_class_mean", "observed_topk")

# enumeration chunking: bound the materialized (worlds, n, d) block
_CHUNK_ELEMS = 1_000_000


class WorldCapError(DataError):
    """Raised when an instance has more possible worlds than the configured cap."""

    def __init__(self, world_count: int, cap: int):
        super().__init__(f"{world_count} possible worlds exceed the cap of {cap}")
        self.world_count = world_count
        self.cap = cap


@dataclass(frozen=True, eq=False)
class IncompleteDataset:
    """Training records with missing cells and per-cell candidate repairs.

    ``features`` holds NaN at every missing cell; ``candidates`` maps each
    missing (record, feature) cell to its finite, nonempty repair list. A
    repaired cell keeps a singleton candidate list. Labels are never missing.
    """

    features: np.ndarray
    labels: np.ndarray
    classes: LabelSpace
    candidates: Mapping[Cell, tuple[float, ...]]

    def __post_init__(self) -> None:
        arr = np.array(self.features, dtype=np.float64, copy=True)
        if arr.ndim != 2 or arr.shape[1] == 0:
            raise DataError(f"features must be a 2-D matrix, got shape {arr.shape}")
        if np.any(np.isinf(arr)):
            raise DataError("features contain infinities")
        arr.flags.writeable = False
        object.__setattr__(self, "features", arr)
        object.__setattr__(
            self, "labels", _as_label_vector(self.labels, self.classes.class_count)
        )
        if arr.shape[0] != self.labels.shape[0]:
            raise DataError(f"{arr.shape[0]} feature rows vs {self.labels.shape[0]} labels")

        missing = {(int(r), int(c)) for r, c in zip(*np.nonzero(np.isnan(arr)))}
        cands: dict[Cell, tuple[float, ...]] = {}
        for cell, values in dict(self.candidates).items():
            r, c = int(cell[0]), int(cell[1])
            values = tuple(float(v) for v in values)
            if not values:
                raise DataError(f"cell {(r, c)} has an empty candidate set")
            if not all(math.isfinite(v) for v in values):
                raise DataError(f"cell {(r, c)} has non-finite candidates")
            if (r, c) not in missing:
                raise DataError(f"candidates given for non-missing cell {(r, c)}")
            cands[(r, c)] = values
        uncovered = missing - set(cands)
        if uncovered:
            raise DataError(f"missing cells without candidates: {sorted(uncovered)}")
        object.__setattr__(self, "candidates", cands)

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def dimension(self) -> int:
        return self.features.shape[1]

    @property
    def class_count(self) -> int:
        return self.classes.class_count

    def cells(self) -> list[Cell]:
        """All originally-missing cells in canonical (record, feature) order."""
        return sorted(self.candidates)

    def dirty_cells(self) -> list[Cell]:
        """Cells whose value is still uncertain (two or more candidates)."""
        return [cell for cell in self.cells() if len(self.candidates[cell]) >= 2]

    def with_repair(self, cell: Cell, value: float) -> "IncompleteDataset":
        cell = (int(cell[0]), int(cell[1]))
        if cell not in self.candidates:
            raise DataError(f"unknown cell {cell}")
        value = float(value)
        if not math.isfinite(value):
            raise DataError(f"repair value for {cell} must be finite")
        new_candidates = dict(self.candidates)
        new_candidates[cell] = (value,)
        return IncompleteDataset(self.features, self.labels, self.classes, new_candidates)


def world_count(data: IncompleteDataset) -> int:
    """Number of possible worlds: the product of candidate-set sizes."""
    total = 1
    for values in data.candidates.values():
        total *= len(values)
    return total


@dataclass(frozen=True)
class LabelTally:
    """Counting-query result: per-label world counts for one query point."""

    counts: tuple[int, ...]
    world_total: int

    def __post_init__(self) -> None:
        if self.world_total <= 0:
            raise DataError("world_total must be positive")
        if sum(self.counts) != self.world_total:
            raise DataError(f"tally counts sum to {sum(self.counts)}, expected {self.world_total}")

    def distribution(self) -> list[float]:
        return [c / self.world_total for c in self.counts]

    def entropy_bits(self) -> float:
        return sum(-p * math.log2(p) for p in self.distribution() if p > 0.0)

    def certain_label(self) -> int | None:
        for label, count in enumerate(self.counts):
            if count == self.world_total:
                return label
        return None


def _world_chunks(
    data: IncompleteDataset, queries: np.ndarray, cfg: KnnConfig, cap: int
) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Enumerate all worlds in canonical order, yielding (digits, predictions).

    ``digits`` is (w, n_cells) with the candidate index chosen per cell;
    ``preds`` is (w, n_queries) with the kNN prediction per world and query.
    Canonical order: cells sorted by (record, feature), last cell fastest.
    """
    total = world_count(data)
    if total > cap:
        raise WorldCapError(total, cap)
    if cfg.k > data.n_samples:
        raise DataError(f"k={cfg.k} exceeds training size {data.n_samples}")
    queries = np.asarray(queries, dtype=np.float64)
    if queries.ndim != 2 or queries.shape[1] != data.dimension:
        raise DataError(f"queries must be (q, {data.dimension}), got {queries.shape}")
    if not np.all(np.isfinite(queries)):
        raise DataError("queries contain non-finite values")

    cells = data.cells()
    cand_arrays = [np.asarray(data.candidates[cell], dtype=np.float64) for cell in cells]
    bases = np.array([len(a) for a in cand_arrays], dtype=np.int64)
    strides = np.ones(len(cells), dtype=np.int64)
    for j in range(len(cells) - 2, -1, -1):
        strides[j] = strides[j + 1] * bases[j + 1]

    n, d = data.features.shape
    q = queries.shape[0]
    chunk = max(1, _CHUNK_ELEMS // max(1, n * d))
    for lo in range(0, total, chunk):
        hi = min(lo + chunk, total)
        idx = np.arange(lo, hi, dtype=np.int64)
        digits = (idx[:, None] // strides[None, :]) % bases[None, :] if cells else np.zeros((hi - lo, 0), dtype=np.int64)

        X = np.repeat(data.features[None, :, :], hi - lo, axis=0)
        for j, (r, c) in enumerate(cells):
            X[:, r, c] = cand_arrays[j][digits[:, j]]

        if cfg.normalization == "minmax":
            mins = X.min(axis=1)
            spans = X.max(axis=1) - mins
            Xs = scale_features(X, mins[:, None, :], spans[:, None, :], clip=False)
            Qs = scale_features(
                np.broadcast_to(queries[None, :, :], (hi - lo, q, d)),
                mins[:, None, :],
                spans[:, None, :],
                clip=True,
            )
        else:
            Xs = X
            Qs = np.broadcast_to(queries[None, :, :], (hi - lo, q, d))

        preds = np.empty((hi - lo, q), dtype=np.int64)
        for p in range(q):
            diffs = Xs - Qs[:, p, None, :]
            d2 = (diffs * diffs).sum(axis=-1)
            preds[:, p] = vote_on_distances(d2, data.labels, cfg.k, data.class_count)
        yield digits, preds


def tallies_for(
    data: IncompleteDataset,
    queries,
    cfg: KnnConfig = KnnConfig(),
    cap: int = DEFAULT_WORLD_CAP,
) -> list[LabelTally]:
    """Counting query for each query row, all from one enumeration pass."""
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    C = data.class_count
    counts = np.zeros((queries.shape[0], C), dtype=np.int64)
    for _, preds in _world_chunks(data, queries, cfg, cap):
        for p in range(queries.shape[0]):
            counts[p] += np.bincount(preds[:, p], minlength=C)
    total = world_count(data)
    return [LabelTally(tuple(int(c) for c in row), total) for row in counts]


def counting_query(
    data: IncompleteDataset, query, cfg: KnnConfig = KnnConfig(), cap: int = DEFAULT_WORLD_CAP
) -> LabelTally:
    """Per-label count of possible worlds predicting that label for the query."""
    return tallies_for(data, query, cfg, cap)[0]


def checking_query(
    data: IncompleteDataset, query, cfg: KnnConfig = KnnConfig(), cap: int = DEFAULT_WORLD_CAP
) -> int | None:
    """The certain label if every world agrees on the query, else None."""
    return counting_query(data, query, cfg, cap).certain_label()


def _mean_entropy(count_rows: np.ndarray, total: int) -> float:
    per_point = []
    for row in count_rows:
        per_point.append(sum(-(c / total) * math.log2(c / total) for c in row if c))
    return sum(per_point) / len(per_point)


class CleaningSession:
    """Single-writer cleaning loop state: data, validation points, and history.

    Read-only queries may run between repairs; repairs are serialized by the
    caller. The entropy trace is recomputed exactly after every repair.
    """

    def __init__(
        self,
        data: IncompleteDataset,
        validation,
        cfg: KnnConfig = KnnConfig(),
        world_cap: int = DEFAULT_WORLD_CAP,
    ):
        validation = np.array(validation, dtype=np.float64, copy=True)
        if validation.ndim != 2 or validation.shape[1] != data.dimension:
            raise DataError(
                f"validation must be (q, {data.dimension}), got {validation.shape}"
            )
        if validation.shape[0] == 0:
            raise DataError("validation set is empty")
        if not np.all(np.isfinite(validation)):
            raise DataError("validation contains non-finite values")
        validation.flags.writeable = False
        count = world_count(data)
        if count > world_cap:
            raise WorldCapError(count, world_cap)
        self.data = data
        self.validation = validation
        self.cfg = cfg
        self.world_cap = world_cap
        self.cleaned_log: list[tuple[Cell, float]] = []
        self._tally_cache: tuple[int, list[LabelTally]] | None = None
        self.entropy_trace: list[float] = [self.prediction_entropy()]

    @property
    def n_validation(self) -> int:
        return self.validation.shape[0]

    def world_count(self) -> int:
        return world_count(self.data)

    def dirty_cells(self) -> list[Cell]:
        return self.data.dirty_cells()

    def tallies(self) -> list[LabelTally]:
        key = len(self.cleaned_log)
        if self._tally_cache is None or self._tally_cache[0] != key:
            self._tally_cache = (key, tallies_for(self.data, self.validation, self.cfg, self.world_cap))
        return self._tally_cache[1]

    def prediction_entropy(self) -> float:
        """Mean per-validation-point entropy of the counting tallies, in bits."""
        tallies = self.tallies()
        return sum(t.entropy_bits() for t in tallies) / len(tallies)

    def certain_count(self) -> int:
        return sum(1 for t in self.tallies() if t.certain_label() is not None)

    def is_all_certain(self) -> bool:
        return self.certain_count() == self.n_validation

    def is_all_clean(self) -> bool:
        return not self.dirty_cells()

    def conditional_entropies(self) -> dict[Cell, float]:
        """Conditional entropy for every dirty cell from one enumeration pass."""
        dirty = self.dirty_cells()
        if not dirty:
            return {}
        cells = self.data.cells()
        dirty_pos = {cell: cells.index(cell) for cell in dirty}
        bases = {cell: len(self.data.candidates[cell]) for cell in dirty}
        q = self.n_validation
        C = self.data.class_count
        counts = {cell: np.zeros((bases[cell], q, C), dtype=np.int64) for cell in dirty}
        for digits, preds in _world_chunks(self.data, self.validation, self.cfg, self.world_cap):
            for cell in dirty:
                col = digits[:, dirty_pos[cell]]
                for t in range(bases[cell]):
                    sub = preds[col == t]
                    for p in range(q):
                        counts[cell][t, p] += np.bincount(sub[:, p], minlength=C)
        total = self.world_count()
        result = {}
        for cell in dirty:
            sub_total = total // bases[cell]
            per_choice = [_mean_entropy(counts[cell][t], sub_total) for t in range(bases[cell])]
            result[cell] = sum(per_choice) / bases[cell]
        return result

    def conditional_entropy(self, cell: Cell) -> float:
        """Expected prediction entropy after fixing one cell, uniform over candidates."""
        cell = (int(cell[0]), int(cell[1]))
        if cell not in self.data.candidates:
            raise DataError(f"unknown cell {cell}")
        if len(self.data.candidates[cell]) < 2:
            raise DataError(f"cell {cell} is already clean")
        cells = self.data.cells()
        pos = cells.index(cell)
        base = len(self.data.candidates[cell])
        q, C = self.n_validation, self.data.class_count
        counts = np.zeros((base, q, C), dtype=np.int64)
        for digits, preds in _world_chunks(self.data, self.validation, self.cfg, self.world_cap):
            col = digits[:, pos]
            for t in range(base):
                sub = preds[col == t]
                for p in range(q):
                    counts[t, p] += np.bincount(sub[:, p], minlength=C)
        sub_total = self.world_count() // base
        return sum(_mean_entropy(counts[t], sub_total) for t in range(base)) / base

    def suggest_next(self) -> Cell:
        """The dirty cell minimizing conditional entropy; (record, feature) breaks ties."""
        scores = self.conditional_entropies()
        if not scores:
            raise DataError("no dirty cells to clean")
        best_cell, best_score = None, None
        for cell in sorted(scores):
            if best_score is None or scores[cell] < best_score:
                best_cell, best_score = cell, scores[cell]
        return best_cell

    def apply_repair(self, cell: Cell, value: float) -> None:
        """Fix a cell to a value (any finite value, not only listed candidates)."""
        self.data = self.data.with_repair(cell, value)
        self._tally_cache = None
        self.cleaned_log.append(((int(cell[0]), int(cell[1])), float(value)))
        self.entropy_trace.append(self.prediction_entropy())


@dataclass(frozen=True)
class CleaningStep:
    """One repair in a simulated cleaning run."""

    step: int
    cell: Cell
    value: float
    entropy_bits: float
    certain: int

    def to_json_dict(self) -> dict:
        return {
            "step": self.step,
            "cell": [self.cell[0], self.cell[1]],
            "value": self.value,
            "entropy_bits": self.entropy_bits,
            "certain": self.certain,
        }


def simulate_cleaning(
    session: CleaningSession,
    ground_truth: Mapping[Cell, float],
    policy: str = "cpclean",
    seed: Seed = 0,
    stop: str = "all_certain",
) -> list[CleaningStep]:
    """Run a cleaning policy against known ground-truth values.

    ``cpclean`` repairs the suggested (conditional-entropy-minimizing) cell
    each round; ``random`` repairs a uniformly drawn dirty cell. Stops when
    all validation predictions are certain or when every cell is clean.
    """
    if policy not in ("cpclean", "random"):
        raise DataError(f"unknown policy {policy!r}")
    if stop not in ("all_certain", "all_clean"):
        raise DataError(f"unknown stop condition {stop!r}")
    truth = {(int(r), int(c)): float(v) for (r, c), v in ground_truth.items()}
    uncovered = [cell for cell in session.dirty_cells() if cell not in truth]
    if uncovered:
        raise DataError(f"ground truth missing for dirty cells: {uncovered}")

    trace: list[CleaningStep] = []
    step = 0
    while True:
        if stop == "all_certain" and session.is_all_certain():
            break
        dirty = session.dirty_cells()
        if not dirty:
            break
        step += 1
        if policy == "cpclean":
            cell = session.suggest_next()
        else:
            cell = dirty[int(subseed_rng(seed, step).integers(len(dirty)))]
        session.apply_repair(cell, truth[cell])
        trace.append(
            CleaningStep(
                step=step,
                cell=cell,
                value=truth[cell],
                entropy_bits=session.entropy_trace[-1],
                certain=session.certain_count(),
            )
        )
    return trace


def completed_dataset(data: IncompleteDataset) -> LabeledDataset:
    """Materialize the single world of a fully repaired dataset."""
    if data.dirty_cells():
        raise DataError(f"dataset still has dirty cells: {data.dirty_cells()}")
    features = np.array(data.features, copy=True)
    for (r, c), values in data.candidates.items():
        features[r, c] = values[0]
    return LabeledDataset(features, data.labels, data.classes)


# ---------------------------------------------------------------------------
# candidate generation and file formats


def generate_candidates(
    features: np.ndarray,
    labels: np.ndarray,
    methods: tuple[str, ...] = DEFAULT_GENERATORS,
    top_k: int = 3,
) -> dict[Cell, tuple[float, ...]]:
    """Candidate repairs for every missing cell from standard imputation rules.

    Built-in generators: per-feature mean, median, per-class mean (of the
    record's own label), and the top-k most frequent observed values. The
    union is deduplicated and sorted per cell.
    """
    unknown = set(methods) - set(DEFAULT_GENERATORS)
    if unknown:
        raise DataError(f"unknown candidate generators: {sorted(unknown)}")
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    out: dict[Cell, tuple[float, ...]] = {}
    for r, c in zip(*np.nonzero(np.isnan(features))):
        r, c = int(r), int(c)
        column = features[:, c]
        observed = column[~np.isnan(column)]
        if observed.size == 0:
            raise DataError(f"feature column {c} has no observed values to impute from")
        values: list[float] = []
        if "mean" in methods:
            values.append(float(np.mean(observed)))
        if "median" in methods:
            values.append(float(np.median(observed)))
        if "per_class_mean" in methods:
            same = column[(labels == labels[r]) & ~np.isnan(column)]
            values.append(float(np.mean(same)) if same.size else float(np.mean(observed)))
        if "observed_topk" in methods:
            uniq, freq = np.unique(observed, return_counts=True)
            order = np.lexsort((uniq, -freq))
            values.extend(float(v) for v in uniq[order[:top_k]])
        if not values:
            raise DataError("no candidate generators selected")
        out[(r, c)] = tuple(sorted(set(values)))
    return out


def load_incomplete_dataset(
    path,
    candidates_path=None,
    classes: list[str] | None = None,
    methods: tuple[str, ...] = DEFAULT_GENERATORS,
    top_k: int = 3,
) -> IncompleteDataset:
    """Load an incomplete CSV (missing cells marked ``?``) plus optional sidecar.

    The sidecar is JSON ``{"candidates": {"<row>,<col>": [v1, v2, ...]}}``;
    cells it does not cover fall back to the built-in generators.
    """
    import csv as _csv

    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    with open(path, newline="") as fh:
        rows = list(_csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty file")
    header = rows[0]
    if len(header) < 2 or header[-1].strip() != "label":
        raise DataError(f"{path}: line 1: header must end with a 'label' column")
    d = _expect_header(header[:-1], "f")
    features: list[list[float]] = []
    label_names: list[str] = []
    for i, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != d + 1:
            raise DataError(f"{path}: line {i}: expected {d + 1} cells, got {len(row)}")
        if row[-1].strip() == "?":
            raise DataError(f"{path}: line {i}: labels are never missing")
        parsed = [
            math.nan if cell.strip() == "?" else _parse_feature_cell(cell, i)
            for cell in row[:-1]
        ]
        features.append(parsed)
        label_names.append(row[-1].strip())
    if not features:
        raise DataError(f"{path}: no data rows")
    space = LabelSpace(tuple(classes) if classes else tuple(sorted(set(label_names))))
    labels = np.array([space.index_of(name) for name in label_names], dtype=np.int64)
    matrix = np.array(features, dtype=np.float64)

    sidecar: dict[Cell, tuple[float, ...]] = {}
    if candidates_path is not None:
        sidecar = _load_candidates_sidecar(candidates_path)
    missing = {(int(r), int(c)) for r, c in zip(*np.nonzero(np.isnan(matrix)))}
    extra = set(sidecar) - missing
    if extra:
        raise DataError(f"candidates for cells that are not missing: {sorted(extra)}")
    uncovered = missing - set(sidecar)
    generated = (
        {cell: v for cell, v in generate_candidates(matrix, labels, methods, top_k).items() if cell in uncovered}
        if uncovered
        else {}
    )
    return IncompleteDataset(matrix, labels, space, {**generated, **sidecar})


def _load_candidates_sidecar(path) -> dict[Cell, tuple[float, ...]]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    if not isinstance(doc, dict) or not isinstance(doc.get("candidates"), dict):
        raise DataError(f"{path}: expected an object with a 'candidates' mapping")
    out: dict[Cell, tuple[float, ...]] = {}
    for key, values in doc["candidates"].items():
        try:
            r_text, c_text = key.split(",")
            cell = (int(r_text), int(c_text))
        except ValueError:
            raise DataError(f"{path}: bad cell key {key!r}, expected '<row>,<col>'") from None
        if not isinstance(values, list) or not values:
            raise DataError(f"{path}: cell {key!r} needs a nonempty candidate list")
        out[cell] = tuple(float(v) for v in values)
    return out


def incomplete_dataset_to_csv(data: IncompleteDataset) -> str:
    import csv as _csv

    buf = io.StringIO()
    writer = _csv.writer(buf, lineterminator="\n")
    writer.writerow([f"f{i}" for i in range(data.dimension)] + ["label"])
    for r in range(data.n_samples):
        cells = [
            "?" if math.isnan(data.features[r, c]) else _format_float(data.features[r, c])
            for c in range(data.dimension)
        ]
        writer.writerow(cells + [data.classes.names[data.labels[r]]])
    return buf.getvalue()


def candidates_to_json(data: IncompleteDataset) -> str:
    return json.dumps(
        {"candidates": {f"{r},{c}": list(v) for (r, c), v in sorted(data.candidates.items())}}
    )


def trace_to_json_lines(trace: list[CleaningStep]) -> str:
    return "".join(json.dumps(step.to_json_dict()) + "\n" for step in trace)
