"""Statistically sound continuous integration for model scores.

Test conditions are linear expressions over three score variables computed on
a shared test set — ``n`` (new-model accuracy), ``o`` (old-model accuracy),
and ``d`` (fraction of differing predictions) — compared against a threshold
with a ``+/-`` tolerance, e.g. ``n - o > 0.02 +/- 0.01``.

The tolerance epsilon is the half-width of the confidence interval: estimates
at least epsilon beyond the threshold decide immediately; estimates inside
the interval are ill-defined and resolve by the ledger's fixed policy
(force_accept tolerates false positives, force_reject false negatives).

Sample sizes come from the two-sided Hoeffding bound on the per-sample
expression value, whose range is the coefficient-scaled span of the
variables. Reusing one test set H times costs delta/H when nothing is
revealed between runs and delta/2^H when each run leaks a pass/fail bit;
a ledger enforces the resulting budget and binds itself to one test-set
fingerprint.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from dqops.core import DataError, DqopsError, LabeledDataset, Seed, subseed_rng

VARIABLES = ("n", "o", "d")
COMPARISONS = (">", "<", ">=", "<=")
MODES = ("non_adaptive", "adaptive_binary")
ILL_DEFINED = ("force_accept", "force_reject")


class ConditionError(DataError):
    """Condition text rejected; carries the 1-based column of the problem."""

    def __init__(self, message: str, column: int):
        super().__init__(f"{message} at column {column}")
        self.column = column


class RefreshRequiredError(DqopsError):
    """The ledger's reuse budget is spent; the test set must be refreshed."""


class StaleLedgerError(DataError):
    """The supplied test set does not match the ledger's fingerprint."""


@dataclass(frozen=True)
class Term:
    coefficient: float
    variable: str


@dataclass(frozen=True)
class TestCondition:
    """Parsed condition: linear expression, comparison, threshold, tolerance."""

    terms: tuple[Term, ...]
    op: str
    threshold: float
    epsilon: float

    def __post_init__(self) -> None:
        if not self.terms:
            raise DataError("a condition needs at least one variable term")
        if self.op not in COMPARISONS:
            raise DataError(f"unknown comparison {self.op!r}")
        if self.epsilon < 0:
            raise DataError("epsilon must be nonnegative")
        for term in self.terms:
            if term.variable not in VARIABLES:
                raise DataError(f"unknown variable {term.variable!r}")

    def combined_coefficients(self) -> dict[str, float]:
        out: dict[str, float] = {}
        for term in self.terms:
            out[term.variable] = out.get(term.variable, 0.0) + term.coefficient
        return out

    def value_bounds(self) -> tuple[float, float]:
        """Extreme per-sample expression values over variable values in {0, 1}."""
        coefs = self.combined_coefficients().values()
        lo = sum(min(0.0, c) for c in coefs)
        hi = sum(max(0.0, c) for c in coefs)
        return lo, hi

    def value_range(self) -> float:
        lo, hi = self.value_bounds()
        return hi - lo

    def score(self, values: dict[str, float]) -> float:
        return sum(c * values[v] for v, c in self.combined_coefficients().items())

    def pretty(self) -> str:
        parts: list[str] = []
        for i, term in enumerate(self.terms):
            magnitude = abs(term.coefficient)
            body = term.variable if magnitude == 1.0 else f"{magnitude!r}*{term.variable}"
            if i == 0:
                parts.append(body if term.coefficient >= 0 else f"-{body}")
            else:
                parts.append(f"{'+' if term.coefficient >= 0 else '-'} {body}")
        text = f"{' '.join(parts)} {self.op} {self.threshold!r}"
        if self.epsilon != 0.0:
            text += f" +/- {self.epsilon!r}"
        return text


_NUMBER_RE = re.compile(r"(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?")
_WORD_RE = re.compile(r"[A-Za-z_]\w*")


@dataclass(frozen=True)
class _Token:
    kind: str  # NUMBER | VAR | PLUS | MINUS | STAR | CMP | PM | EOF
    column: int  # 1-based
    value: float | str | None = None


def _tokenize(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    i = 0
    while i < len(text):
        ch = text[i]
        col = i + 1
        if ch.isspace():
            i += 1
            continue
        if text.startswith("+/-", i):
            tokens.append(_Token("PM", col))
            i += 3
        elif ch == "+":
            tokens.append(_Token("PLUS", col))
            i += 1
        elif ch == "-":
            tokens.append(_Token("MINUS", col))
            i += 1
        elif ch == "*":
            tokens.append(_Token("STAR", col))
            i += 1
        elif ch in "<>":
            if i + 1 < len(text) and text[i + 1] == "=":
                tokens.append(_Token("CMP", col, ch + "="))
                i += 2
            else:
                tokens.append(_Token("CMP", col, ch))
                i += 1
        elif ch.isdigit() or ch == ".":
            match = _NUMBER_RE.match(text, i)
            end = match.end() if match else i + 1
            if not match or (end < len(text) and (text[end].isdigit() or text[end] == ".")):
                while end < len(text) and (text[end].isdigit() or text[end] == "."):
                    end += 1
                raise ConditionError(f"malformed number {text[i:end]!r}", col)
            tokens.append(_Token("NUMBER", col, float(match.group())))
            i = end
        elif ch.isalpha() or ch == "_":
            word = _WORD_RE.match(text, i).group()
            if word not in VARIABLES:
                raise ConditionError(f"unknown variable {word!r}", col)
            tokens.append(_Token("VAR", col, word))
            i += len(word)
        else:
            raise ConditionError(f"unexpected character {ch!r}", col)
    tokens.append(_Token("EOF", len(text) + 1))
    return tokens


class _Parser:
    def __init__(self, tokens: list[_Token]):
        self.tokens = tokens
        self.pos = 0

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def take(self) -> _Token:
        token = self.tokens[self.pos]
        self.pos += 1
        return token

    def expect(self, kind: str, what: str) -> _Token:
        token = self.peek()
        if token.kind != kind:
            raise ConditionError(f"expected {what}", token.column)
        return self.take()

    def parse(self) -> TestCondition:
        terms = self.parse_terms()
        op = self.expect("CMP", "a comparison operator (>, <, >=, <=)").value
        threshold = self.parse_signed_number("the threshold")
        epsilon = 0.0
        if self.peek().kind == "PM":
            self.take()
            token = self.expect("NUMBER", "the tolerance value")
            epsilon = float(token.value)
        trailing = self.peek()
        if trailing.kind != "EOF":
            raise ConditionError("unexpected trailing input", trailing.column)
        return TestCondition(tuple(terms), str(op), threshold, epsilon)

    def parse_terms(self) -> list[Term]:
        first = self.peek()
        if first.kind in ("CMP", "EOF", "PM"):
            raise ConditionError("empty expression", first.column)
        terms = [self.parse_term(lead=True)]
        while self.peek().kind in ("PLUS", "MINUS"):
            terms.append(self.parse_term(lead=False))
        return terms

    def parse_term(self, lead: bool) -> Term:
        sign = 1.0
        if self.peek().kind in ("PLUS", "MINUS"):
            sign = -1.0 if self.take().kind == "MINUS" else 1.0
        elif not lead:  # unreachable by construction of the caller loop
            raise ConditionError("expected '+' or '-'", self.peek().column)
        token = self.peek()
        if token.kind == "NUMBER":
            self.take()
            self.expect("STAR", "'*' between coefficient and variable")
            var = self.expect("VAR", "a variable (n, o, d)")
            return Term(sign * float(token.value), str(var.value))
        if token.kind == "VAR":
            self.take()
            return Term(sign, str(token.value))
        raise ConditionError("expected a variable term", token.column)

    def parse_signed_number(self, what: str) -> float:
        sign = 1.0
        if self.peek().kind in ("PLUS", "MINUS"):
            sign = -1.0 if self.take().kind == "MINUS" else 1.0
        token = self.expect("NUMBER", what)
        return sign * float(token.value)


def parse_condition(text: str) -> TestCondition:
    """Parse ``expr cmp const [+/- const]``; whitespace-insensitive."""
    return _Parser(_tokenize(text)).parse()


# ---------------------------------------------------------------------------
# sample sizing and reuse budgets


def _min_n_satisfying(epsilon: float, value_range: float, ln_delta: float) -> int:
    """Smallest N with ln 2 - 2 N eps^2 / range^2 <= ln delta."""
    rate = 2.0 * epsilon * epsilon / (value_range * value_range)
    n = max(1, math.ceil((math.log(2.0) - ln_delta) / rate))
    while n > 1 and math.log(2.0) - rate * (n - 1) <= ln_delta:
        n -= 1
    while math.log(2.0) - rate * n > ln_delta:
        n += 1
    return n


def required_sample_size(condition: TestCondition, delta_single: float) -> int:
    """Smallest N with 2 exp(-2 N eps^2 / range^2) <= delta_single.

    Minimality is pinned by direct substitution: N satisfies the bound and
    N-1 does not.
    """
    if not 0.0 < delta_single < 1.0:
        raise DataError(f"delta must be in (0, 1), got {delta_single}")
    if condition.epsilon <= 0.0:
        raise DataError("a condition without a tolerance admits no finite sample size")
    r = condition.value_range()
    if r == 0.0:
        raise DataError("expression has zero range; its coefficients cancel")
    eps = condition.epsilon

    def satisfies(n: int) -> bool:
        return 2.0 * math.exp(-2.0 * n * eps * eps / (r * r)) <= delta_single

    n = max(1, math.ceil(r * r * math.log(2.0 / delta_single) / (2.0 * eps * eps)))
    while n > 1 and satisfies(n - 1):
        n -= 1
    while not satisfies(n):
        n += 1
    return n


@dataclass(frozen=True)
class ReusePolicy:
    """Reuse budget H, global error probability delta, feedback mode, and
    the fixed resolution for estimates inside the confidence interval."""

    reuses: int
    delta: float
    mode: str = "non_adaptive"
    ill_defined: str = "force_reject"

    def __post_init__(self) -> None:
        if self.reuses < 1:
            raise DataError(f"reuse budget must be >= 1, got {self.reuses}")
        if not 0.0 < self.delta < 1.0:
            raise DataError(f"delta must be in (0, 1), got {self.delta}")
        if self.mode not in MODES:
            raise DataError(f"unknown mode {self.mode!r}")
        if self.ill_defined not in ILL_DEFINED:
            raise DataError(f"unknown ill-defined policy {self.ill_defined!r}")

    def to_json_dict(self) -> dict:
        return {
            "reuses": self.reuses,
            "delta": self.delta,
            "mode": self.mode,
            "ill_defined": self.ill_defined,
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "ReusePolicy":
        return cls(
            reuses=int(doc["reuses"]),
            delta=float(doc["delta"]),
            mode=str(doc["mode"]),
            ill_defined=str(doc["ill_defined"]),
        )


def per_test_delta(policy: ReusePolicy) -> float:
    """delta/H without feedback; delta/2^H when each run reveals pass/fail.

    The adaptive value underflows to 0.0 for budgets past ~1000; planning
    paths use log_per_test_delta instead.
    """
    if policy.mode == "non_adaptive":
        return policy.delta / policy.reuses
    return math.ldexp(policy.delta, -policy.reuses)


def log_per_test_delta(policy: ReusePolicy) -> float:
    """ln of per_test_delta, safe for budgets where 2^H overflows."""
    if policy.mode == "non_adaptive":
        return math.log(policy.delta) - math.log(policy.reuses)
    return math.log(policy.delta) - policy.reuses * math.log(2.0)


def max_reuses(test_size: int, condition: TestCondition, delta: float, mode: str) -> int:
    """Largest H whose per-test sample requirement fits the given test set."""
    if condition.epsilon <= 0.0:
        raise DataError("a condition without a tolerance admits no finite sample size")
    r = condition.value_range()
    if r == 0.0:
        raise DataError("expression has zero range; its coefficients cancel")

    def fits(h: int) -> bool:
        policy = ReusePolicy(reuses=h, delta=delta, mode=mode)
        return _min_n_satisfying(condition.epsilon, r, log_per_test_delta(policy)) <= test_size

    if test_size < 1 or not fits(1):
        return 0
    lo, hi = 1, 2
    while fits(hi):
        lo, hi = hi, hi * 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if fits(mid):
            lo = mid
        else:
            hi = mid
    return lo


# ---------------------------------------------------------------------------
# ledger and commit evaluation


def dataset_fingerprint(test: LabeledDataset) -> str:
    """Content hash binding a ledger to one version of the test set."""
    doc = {
        "classes": list(test.classes.names),
        "features": [[float(v) for v in row] for row in test.features],
        "labels": test.label_names(),
    }
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


@dataclass
class CiLedger:
    """Mutable record of consumed evaluations against one test set."""

    policy: ReusePolicy
    fingerprint: str
    used: int = 0
    history: list[bool] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.used != len(self.history):
            raise DataError("ledger used count must equal history length")
        if self.used > self.policy.reuses:
            raise DataError("ledger used count exceeds the reuse budget")

    @classmethod
    def for_test_set(cls, policy: ReusePolicy, test: LabeledDataset) -> "CiLedger":
        return cls(policy=policy, fingerprint=dataset_fingerprint(test))

    def to_json_dict(self) -> dict:
        return {
            "policy": self.policy.to_json_dict(),
            "used": self.used,
            "history": list(self.history),
            "fingerprint": self.fingerprint,
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "CiLedger":
        return cls(
            policy=ReusePolicy.from_json_dict(doc["policy"]),
            fingerprint=str(doc["fingerprint"]),
            used=int(doc["used"]),
            history=[bool(b) for b in doc["history"]],
        )


def save_ledger(ledger: CiLedger, path) -> None:
    Path(path).write_text(json.dumps(ledger.to_json_dict(), indent=2, sort_keys=True) + "\n")


def load_ledger(path) -> CiLedger:
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    try:
        return CiLedger.from_json_dict(json.loads(path.read_text()))
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{path}: not a valid ledger file ({exc})") from None


def score_variables(old_preds, new_preds, truths) -> dict[str, float]:
    """Point estimates of n, o, d on one test set in a single pass."""
    old_preds = np.asarray(old_preds, dtype=np.int64)
    new_preds = np.asarray(new_preds, dtype=np.int64)
    truths = np.asarray(truths, dtype=np.int64)
    if not (old_preds.shape == new_preds.shape == truths.shape) or old_preds.ndim != 1:
        raise DataError(
            f"prediction and truth columns must share one shape, got "
            f"{old_preds.shape}, {new_preds.shape}, {truths.shape}"
        )
    if truths.size == 0:
        raise DataError("cannot evaluate on an empty test set")
    return {
        "n": float(np.mean(new_preds == truths)),
        "o": float(np.mean(old_preds == truths)),
        "d": float(np.mean(new_preds != old_preds)),
    }


def decide(score: float, condition: TestCondition, ill_defined: str) -> str:
    """pass/fail for a point estimate; inside the interval the policy decides."""
    thr, eps = condition.threshold, condition.epsilon
    if condition.op in (">", ">="):
        if score >= thr + eps:
            return "pass"
        if score <= thr - eps:
            return "fail"
    else:
        if score <= thr - eps:
            return "pass"
        if score >= thr + eps:
            return "fail"
    return "pass" if ill_defined == "force_accept" else "fail"


def evaluate_commit(
    ledger: CiLedger,
    old_preds,
    new_preds,
    test: LabeledDataset,
    condition: TestCondition,
) -> str:
    """Score one commit against the condition and consume one ledger slot."""
    if ledger.used >= ledger.policy.reuses:
        raise RefreshRequiredError("test set refresh required")
    if dataset_fingerprint(test) != ledger.fingerprint:
        raise StaleLedgerError("ledger was created for a different test set")
    values = score_variables(old_preds, new_preds, test.labels)
    decision = decide(condition.score(values), condition, ledger.policy.ill_defined)
    ledger.history.append(decision == "pass")
    ledger.used += 1
    return decision


def commit_result_dict(
    status: str,
    ledger: CiLedger,
    condition: TestCondition | None = None,
    values: dict[str, float] | None = None,
) -> dict:
    """Shared CLI/service result document for one commit attempt."""
    return {
        "status": status,
        "condition": condition.pretty() if condition else None,
        "score": condition.score(values) if condition and values else None,
        "variables": values,
        "ledger": ledger.to_json_dict(),
    }


def plan_result_dict(test_size: int, condition: TestCondition, delta: float, mode: str) -> dict:
    return {
        "condition": condition.pretty(),
        "delta": delta,
        "mode": mode,
        "test_size": test_size,
        "max_reuses": max_reuses(test_size, condition, delta, mode),
    }


def simulate_type1(
    condition: TestCondition,
    policy: ReusePolicy,
    true_score: float,
    trials: int,
    seed: Seed = 0,
) -> float:
    """Monte-Carlo rate of decisions against the true side of the condition.

    Per-sample expression values are drawn from the two-point distribution on
    the expression's extreme values with mean ``true_score`` (the worst case
    the Hoeffding sizing assumes), at N = required_sample_size. Returns 0.0
    when the truth lies inside the tolerance interval, where no hard truth
    exists.
    """
    if trials < 1:
        raise DataError("trials must be >= 1")
    lo, hi = condition.value_bounds()
    if not lo <= true_score <= hi:
        raise DataError(f"true score {true_score} outside achievable [{lo}, {hi}]")
    truth_side = decide(true_score, condition, ill_defined="force_accept")
    other_side = decide(true_score, condition, ill_defined="force_reject")
    if truth_side != other_side:
        return 0.0  # truth inside the interval: neither decision is wrong

    n = required_sample_size(condition, per_test_delta(policy))
    rng = subseed_rng(seed)
    p_hi = (true_score - lo) / (hi - lo)
    counts = rng.binomial(n, p_hi, size=trials)
    wrong = 0
    for count in counts:
        estimate = lo + (hi - lo) * (int(count) / n)
        if decide(estimate, condition, policy.ill_defined) != truth_side:
            wrong += 1
    return wrong / trials
