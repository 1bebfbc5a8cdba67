"""Label-efficient online selection among pre-trained models.

A stream of unlabeled items arrives with one prediction per candidate model.
Weights over the models summarize past evidence; each round the picker asks
for a human label with probability proportional to the weighted disagreement
of the current item (items every model answers identically carry no
information and are never queried). Labels trigger an importance-weighted
multiplicative update, so the procedure stays unbiased and keeps regret
against the best fixed model sublinear on the streams it is tuned for.

Everything is a pure function of (inputs, seed): the query coin for round t
is drawn from a (seed, t) substream, which also makes state snapshots
trivially resumable.

A small exploration floor (default 0.05) keeps the importance weights
bounded by 1/floor on disagreeing rounds; without it the query probability
collapses as weights concentrate and single labels can swing the ranking
arbitrarily. Setting the floor to 0 restores pure disagreement gating.
Consensus rounds are never queried regardless of the floor.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from dqops.core import DataError, Seed, subseed_rng

DEFAULT_QUERY_FLOOR = 0.05


@dataclass(frozen=True)
class StreamItem:
    """One stream element: an id plus one predicted label per model."""

    item_id: str
    predictions: tuple[int, ...]


@dataclass
class QueryRecord:
    round: int
    queried: bool
    label: int | None = None


def default_eta(model_count: int, expected_queries: int) -> float:
    """Standard exponential-weights tuning for the anticipated label count."""
    return math.sqrt(8.0 * math.log(model_count) / max(1, expected_queries))


class ModelPicker:
    """Single-writer online selection state: weights, budget, and query log.

    The protocol is a strict observe -> (feed_label when queried) alternation
    per item; simulations over different seeds may run concurrently.
    """

    def __init__(
        self,
        model_count: int,
        budget: int,
        eta: float,
        seed: Seed = 0,
        query_floor: float = DEFAULT_QUERY_FLOOR,
    ):
        if model_count < 2:
            raise DataError(f"need at least 2 models to select among, got {model_count}")
        if budget < 0:
            raise DataError(f"budget must be nonnegative, got {budget}")
        if not eta > 0.0:
            raise DataError(f"eta must be positive, got {eta}")
        if not 0.0 <= query_floor <= 1.0:
            raise DataError(f"query floor must be in [0, 1], got {query_floor}")
        self.model_count = model_count
        self.budget_remaining = int(budget)
        self.eta = float(eta)
        self.seed = int(seed)
        self.query_floor = float(query_floor)
        # log-space is the authoritative state: repeated exp/log round-trips
        # would break exact ties between models with equal cumulative loss
        self._log_weights = np.zeros(model_count)
        self.round = 0
        self.query_log: list[QueryRecord] = []
        self._pending: tuple[str, tuple[int, ...], float] | None = None

    @property
    def weights(self) -> np.ndarray:
        shifted = np.exp(self._log_weights - self._log_weights.max())
        return shifted / shifted.sum()

    def _check_item(self, item: StreamItem) -> None:
        if len(item.predictions) != self.model_count:
            raise DataError(
                f"item {item.item_id!r} has {len(item.predictions)} predictions, "
                f"expected {self.model_count}"
            )

    def disagreement(self, predictions: tuple[int, ...]) -> float:
        """1 minus the weight mass on the most-voted label; exactly 0 on consensus."""
        if len(set(predictions)) == 1:
            return 0.0
        mass: dict[int, float] = {}
        for weight, label in zip(self.weights, predictions):
            mass[label] = mass.get(label, 0.0) + float(weight)
        return 1.0 - max(mass.values())

    def observe(self, item: StreamItem, force: bool = False) -> str:
        """Decide ``query`` or ``skip`` for the next stream item.

        ``force`` is the full-label harness: query with probability 1 while
        budget remains, regardless of disagreement.
        """
        if self._pending is not None:
            raise DataError("previous query still awaits its label")
        self._check_item(item)
        s = self.disagreement(item.predictions)
        decision = "skip"
        q = 0.0
        if force:
            if self.budget_remaining > 0:
                decision, q = "query", 1.0
        elif self.budget_remaining > 0 and s > 0.0:
            s_max = 1.0 - 1.0 / self.model_count
            q = min(1.0, max(self.query_floor, s / s_max))
            if subseed_rng(self.seed, self.round).random() < q:
                decision = "query"
        if decision == "query":
            self.budget_remaining -= 1
            self._pending = (item.item_id, tuple(item.predictions), q)
        self.query_log.append(QueryRecord(self.round, decision == "query"))
        self.round += 1
        return decision

    def feed_label(self, item: StreamItem, truth: int) -> None:
        """Importance-weighted multiplicative update for a queried item."""
        if self._pending is None or self._pending[0] != item.item_id:
            raise DataError(f"no pending query for item {item.item_id!r}")
        _, predictions, q = self._pending
        losses = np.array([0.0 if p == truth else 1.0 for p in predictions])
        self._log_weights = self._log_weights - self.eta * losses / q
        self._log_weights = self._log_weights - self._log_weights.max()
        self.query_log[-1].label = int(truth)
        self._pending = None

    def current_pick(self) -> int:
        """Highest-weight model; ties go to the lower index."""
        return int(np.argmax(self._log_weights))

    def has_pending(self) -> bool:
        return self._pending is not None

    def pending_item_id(self) -> str | None:
        return self._pending[0] if self._pending else None

    def to_json_dict(self) -> dict:
        return {
            "model_count": self.model_count,
            "budget_remaining": self.budget_remaining,
            "eta": self.eta,
            "seed": self.seed,
            "query_floor": self.query_floor,
            "round": self.round,
            "weights": [float(w) for w in self.weights],
            "log_weights": [float(w) for w in self._log_weights],
            "pending": (
                None
                if self._pending is None
                else {
                    "item_id": self._pending[0],
                    "predictions": list(self._pending[1]),
                    "q": self._pending[2],
                }
            ),
            "query_log": [
                {"round": r.round, "queried": r.queried, "label": r.label}
                for r in self.query_log
            ],
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "ModelPicker":
        picker = cls(
            model_count=int(doc["model_count"]),
            budget=max(0, int(doc["budget_remaining"])),
            eta=float(doc["eta"]),
            seed=int(doc["seed"]),
            query_floor=float(doc.get("query_floor", DEFAULT_QUERY_FLOOR)),
        )
        picker.budget_remaining = int(doc["budget_remaining"])
        picker.round = int(doc["round"])
        if "log_weights" in doc:
            picker._log_weights = np.array([float(w) for w in doc["log_weights"]])
        else:
            picker._log_weights = np.log(np.array([float(w) for w in doc["weights"]]))
        pending = doc.get("pending")
        picker._pending = (
            None
            if pending is None
            else (str(pending["item_id"]), tuple(int(p) for p in pending["predictions"]), float(pending["q"]))
        )
        picker.query_log = [
            QueryRecord(int(r["round"]), bool(r["queried"]), r["label"])
            for r in doc.get("query_log", [])
        ]
        return picker


@dataclass(frozen=True)
class PickRound:
    """One row of a simulation trace."""

    round: int
    queried: bool
    pick: int
    regret: int

    def to_json_dict(self) -> dict:
        return {"round": self.round, "queried": self.queried, "pick": self.pick, "regret": self.regret}


@dataclass(frozen=True)
class PickerRun:
    final_pick: int
    n_queries: int
    eta: float
    trace: tuple[PickRound, ...]


def simulate(
    predictions,
    truths,
    budget: int,
    eta: float | None = None,
    seed: Seed = 0,
    force_query: bool = False,
    query_floor: float = DEFAULT_QUERY_FLOOR,
) -> PickerRun:
    """Stream a prediction matrix through the picker against known truths.

    Regret at round t compares the cumulative errors of the model picked at t
    with those of the best model in hindsight over rounds 1..t.
    """
    matrix = np.asarray(predictions if not hasattr(predictions, "entries") else predictions.entries)
    matrix = np.atleast_2d(matrix).astype(np.int64)
    truths = np.asarray(truths, dtype=np.int64)
    if matrix.shape[0] != truths.shape[0]:
        raise DataError(f"{matrix.shape[0]} stream rows vs {truths.shape[0]} truths")
    n_rounds, m = matrix.shape
    if eta is None:
        eta = default_eta(m, n_rounds if force_query else min(budget, n_rounds))
    picker = ModelPicker(m, budget, eta, seed, query_floor)
    cum_errors = np.zeros(m, dtype=np.int64)
    trace: list[PickRound] = []
    for t in range(n_rounds):
        item = StreamItem(str(t), tuple(int(p) for p in matrix[t]))
        decision = picker.observe(item, force=force_query)
        if decision == "query":
            picker.feed_label(item, int(truths[t]))
        cum_errors += matrix[t] != truths[t]
        pick = picker.current_pick()
        regret = int(cum_errors[pick] - cum_errors.min())
        trace.append(PickRound(t + 1, decision == "query", pick, regret))
    return PickerRun(
        final_pick=picker.current_pick(),
        n_queries=len([r for r in picker.query_log if r.queried]),
        eta=float(eta),
        trace=tuple(trace),
    )


def load_stream(path) -> list[StreamItem]:
    """Load a stream CSV with header ``item_id,pred_model_0,...,pred_model_{m-1}``."""
    import csv

    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty file")
    header = rows[0]
    if len(header) < 2 or header[0].strip() != "item_id":
        raise DataError(f"{path}: line 1: header must start with 'item_id'")
    m = len(header) - 1
    expected = [f"pred_model_{j}" for j in range(m)]
    if [h.strip() for h in header[1:]] != expected:
        raise DataError(f"{path}: line 1: prediction columns must be pred_model_0..pred_model_{m-1}")
    items = []
    for i, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != m + 1:
            raise DataError(f"{path}: line {i}: expected {m + 1} cells, got {len(row)}")
        try:
            preds = tuple(int(cell) for cell in row[1:])
        except ValueError:
            raise DataError(f"{path}: line {i}: predictions must be integer label indices") from None
        if any(p < 0 for p in preds):
            raise DataError(f"{path}: line {i}: predictions must be nonnegative")
        items.append(StreamItem(row[0].strip(), preds))
    if not items:
        raise DataError(f"{path}: no data rows")
    return items


def stream_to_csv(items: list[StreamItem]) -> str:
    import csv
    import io

    if not items:
        raise DataError("cannot serialize an empty stream")
    m = len(items[0].predictions)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["item_id"] + [f"pred_model_{j}" for j in range(m)])
    for item in items:
        writer.writerow([item.item_id] + [str(p) for p in item.predictions])
    return buf.getvalue()


def load_truths(path) -> np.ndarray:
    """Load a truths file: a JSON array of label indices, index-aligned."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    if not isinstance(doc, list):
        raise DataError(f"{path}: expected a JSON array of label indices")
    return np.asarray([int(v) for v in doc], dtype=np.int64)


def trace_to_json_lines(trace) -> str:
    return "".join(json.dumps(row.to_json_dict()) + "\n" for row in trace)
