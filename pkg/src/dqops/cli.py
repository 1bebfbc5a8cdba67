"""Batch command-line entry points mirroring the HTTP service.

Exit codes are stable: 0 success/pass, 1 CI fail, 2 reuse budget exhausted,
3 usage error, 4 data error. Traces go to stdout as JSON lines; human
summaries go to stderr so output stays pipeable.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from dqops import __version__
from dqops.ci import (
    CiLedger,
    ConditionError,
    RefreshRequiredError,
    ReusePolicy,
    commit_result_dict,
    evaluate_commit,
    load_ledger,
    parse_condition,
    plan_result_dict,
    save_ledger,
    score_variables,
)
from dqops.cleaning import (
    CleaningSession,
    load_incomplete_dataset,
    simulate_cleaning,
    trace_to_json_lines,
)
from dqops.core import DataError, DqopsError, load_dataset, load_feature_table
from dqops.feasibility import EmbeddingSpec, full_report_dict
from dqops.knn import KnnConfig
from dqops.picker import load_stream, load_truths, simulate
from dqops.picker import trace_to_json_lines as picker_trace_lines

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_REFRESH = 2
EXIT_USAGE = 3
EXIT_DATA = 4


@click.group()
@click.version_option(version=__version__, prog_name="dqops")
def cli() -> None:
    """Data-quality-driven MLOps toolkit."""


@cli.group()
def clean() -> None:
    """Possible-worlds cleaning of incomplete training data."""


@clean.command("simulate")
@click.option("--data", "data_path", required=True, type=click.Path(), help="Incomplete CSV ('?' marks missing cells).")
@click.option("--candidates", "candidates_path", type=click.Path(), default=None, help="Sidecar JSON with candidate repairs.")
@click.option("--validation", "validation_path", required=True, type=click.Path(), help="Unlabeled validation features (CSV/JSON).")
@click.option("--policy", type=click.Choice(["cpclean", "random"]), default="cpclean", show_default=True)
@click.option("--truth", "truth_path", required=True, type=click.Path(), help="JSON map {'row,col': value} of true cell values.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--stop", type=click.Choice(["all_certain", "all_clean"]), default="all_certain", show_default=True)
@click.option("--k", type=int, default=1, show_default=True)
@click.option("--normalization", type=click.Choice(["minmax", "none"]), default="minmax", show_default=True)
@click.option("--world-cap", type=int, default=10**6, show_default=True)
def clean_simulate(
    data_path, candidates_path, validation_path, policy, truth_path, seed, stop, k, normalization, world_cap
) -> None:
    """Replay a cleaning policy against known ground truth and emit the trace."""
    data = load_incomplete_dataset(data_path, candidates_path)
    validation = load_feature_table(validation_path)
    truth_doc = _load_json(truth_path)
    if not isinstance(truth_doc, dict):
        raise DataError(f"{truth_path}: expected a JSON object mapping 'row,col' to values")
    ground_truth = {}
    for key, value in truth_doc.items():
        r_text, _, c_text = key.partition(",")
        try:
            ground_truth[(int(r_text), int(c_text))] = float(value)
        except ValueError:
            raise DataError(f"{truth_path}: bad cell key {key!r}") from None
    session = CleaningSession(data, validation, KnnConfig(k=k, normalization=normalization), world_cap)
    trace = simulate_cleaning(session, ground_truth, policy=policy, seed=seed, stop=stop)
    click.echo(trace_to_json_lines(trace), nl=False)
    click.echo(
        f"policy={policy} steps={len(trace)} entropy_bits={session.entropy_trace[-1]:.6g} "
        f"certain={session.certain_count()}/{session.n_validation}",
        err=True,
    )


@cli.command("feasibility")
@click.option("--train", "train_path", required=True, type=click.Path())
@click.option("--validation", "validation_path", required=True, type=click.Path())
@click.option(
    "--embeddings",
    "embedding_specs",
    multiple=True,
    default=("identity",),
    show_default=True,
    help="'identity' or NAME=TRAIN_CSV:VALIDATION_CSV; repeatable.",
)
@click.option("--noise-sweep", "noise_sweep_text", default=None, help="Comma-separated flip probabilities, e.g. 0,0.1,0.2.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--normalization", type=click.Choice(["minmax", "none"]), default="minmax", show_default=True)
def feasibility_command(train_path, validation_path, embedding_specs, noise_sweep_text, seed, normalization) -> None:
    """Estimate the best achievable accuracy from nearest-neighbor error bounds."""
    train = load_dataset(train_path)
    validation = load_dataset(validation_path, classes=list(train.classes.names))
    specs = [EmbeddingSpec.parse_cli_spec(text) for text in embedding_specs]
    rhos = None
    if noise_sweep_text is not None:
        try:
            rhos = [float(part) for part in noise_sweep_text.split(",") if part.strip()]
        except ValueError:
            raise click.UsageError(f"bad --noise-sweep value {noise_sweep_text!r}") from None
    doc = full_report_dict(train, validation, specs, KnnConfig(normalization=normalization), rhos, seed)
    click.echo(json.dumps(doc, indent=2, sort_keys=True))


@cli.group()
def ci() -> None:
    """Statistically budgeted continuous integration for model scores."""


@ci.command("plan")
@click.option("--condition", "condition_text", required=True)
@click.option("--delta", type=float, required=True, help="Global error probability in (0, 1).")
@click.option("--mode", type=click.Choice(["non_adaptive", "adaptive_binary"]), default="non_adaptive", show_default=True)
@click.option("--test-size", type=int, required=True)
@click.option("--json", "json_path", type=click.Path(), default=None, help="Also write the full plan document ('-' for stdout).")
def ci_plan(condition_text, delta, mode, test_size, json_path) -> None:
    """Print the largest reuse budget H the test set supports."""
    condition = parse_condition(condition_text)
    doc = plan_result_dict(test_size, condition, delta, mode)
    _maybe_write_json(json_path, doc)
    click.echo(str(doc["max_reuses"]))


@ci.command("init")
@click.option("--ledger", "ledger_path", required=True, type=click.Path())
@click.option("--test", "test_path", required=True, type=click.Path(), help="Test dataset the ledger is bound to.")
@click.option("--delta", type=float, required=True)
@click.option("--reuses", type=int, required=True, help="Reuse budget H.")
@click.option("--mode", type=click.Choice(["non_adaptive", "adaptive_binary"]), default="non_adaptive", show_default=True)
@click.option("--ill-defined", type=click.Choice(["force_accept", "force_reject"]), default="force_reject", show_default=True)
def ci_init(ledger_path, test_path, delta, reuses, mode, ill_defined) -> None:
    """Create a fresh ledger bound to one test-set fingerprint."""
    test = load_dataset(test_path)
    policy = ReusePolicy(reuses=reuses, delta=delta, mode=mode, ill_defined=ill_defined)
    ledger = CiLedger.for_test_set(policy, test)
    save_ledger(ledger, ledger_path)
    click.echo(f"ledger written to {ledger_path} (budget {reuses})", err=True)


@ci.command("commit")
@click.option("--ledger", "ledger_path", required=True, type=click.Path())
@click.option("--old", "old_path", required=True, type=click.Path(), help="JSON array of the old model's predicted label indices.")
@click.option("--new", "new_path", required=True, type=click.Path(), help="JSON array of the new model's predicted label indices.")
@click.option("--truth", "truth_path", required=True, type=click.Path(), help="Test dataset (CSV/JSON) with true labels.")
@click.option("--condition", "condition_text", required=True)
@click.option("--json", "json_path", type=click.Path(), default=None, help="Also write the full result document ('-' for stdout).")
@click.pass_context
def ci_commit(ctx, ledger_path, old_path, new_path, truth_path, condition_text, json_path) -> None:
    """Evaluate one commit; prints pass/fail and consumes one ledger slot."""
    ledger = load_ledger(ledger_path)
    condition = parse_condition(condition_text)
    test = load_dataset(truth_path)
    old_preds = _load_prediction_column(old_path)
    new_preds = _load_prediction_column(new_path)
    try:
        decision = evaluate_commit(ledger, old_preds, new_preds, test, condition)
    except RefreshRequiredError:
        _maybe_write_json(json_path, commit_result_dict("refresh_required", ledger))
        raise
    values = score_variables(old_preds, new_preds, test.labels)
    save_ledger(ledger, ledger_path)
    _maybe_write_json(json_path, commit_result_dict(decision, ledger, condition, values))
    click.echo(decision)
    if decision == "fail":
        ctx.exit(EXIT_FAIL)


@cli.group()
def pick() -> None:
    """Online selection among pre-trained models under a label budget."""


@pick.command("simulate")
@click.option("--stream", "stream_path", required=True, type=click.Path(), help="CSV: item_id,pred_model_0,...")
@click.option("--truth", "truth_path", required=True, type=click.Path(), help="JSON array of true label indices.")
@click.option("--budget", type=int, required=True)
@click.option("--eta", type=float, default=None, help="Learning rate; default sqrt(8 ln m / expected queries).")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--force-query", is_flag=True, default=False, help="Query every round while budget remains.")
@click.option("--query-floor", type=float, default=0.05, show_default=True)
def pick_simulate(stream_path, truth_path, budget, eta, seed, force_query, query_floor) -> None:
    """Stream recorded predictions through the picker against known truths."""
    items = load_stream(stream_path)
    truths = load_truths(truth_path)
    if len(items) != truths.shape[0]:
        raise DataError(f"{len(items)} stream items vs {truths.shape[0]} truths")
    matrix = [list(item.predictions) for item in items]
    run = simulate(matrix, truths, budget, eta=eta, seed=seed, force_query=force_query, query_floor=query_floor)
    click.echo(picker_trace_lines(run.trace), nl=False)
    click.echo(f"final_pick={run.final_pick} queries={run.n_queries} eta={run.eta:.6g}", err=True)


@cli.command("serve")
@click.option("--port", type=int, default=8000, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--data-dir", type=click.Path(), default=None, help="Persistence root; defaults to $DQOPS_DATA_DIR.")
def serve(port, host, data_dir) -> None:
    """Run the HTTP service for the interactive annotation loops."""
    import uvicorn

    from dqops.service import create_app

    uvicorn.run(create_app(data_dir), host=host, port=port)


def _load_json(path):
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None


def _load_prediction_column(path):
    doc = _load_json(path)
    if not isinstance(doc, list):
        raise DataError(f"{path}: expected a JSON array of label indices")
    try:
        return [int(v) for v in doc]
    except (TypeError, ValueError):
        raise DataError(f"{path}: predictions must be integers") from None


def _maybe_write_json(json_path, doc) -> None:
    if json_path is None:
        return
    text = json.dumps(doc, indent=2, sort_keys=True)
    if json_path == "-":
        click.echo(text)
    else:
        Path(json_path).write_text(text + "\n")


def main(argv=None) -> int:
    """Entry point mapping toolkit errors onto the stable exit codes."""
    try:
        result = cli.main(args=argv, standalone_mode=False)
        if isinstance(result, int):
            return result
    except click.exceptions.Exit as exc:
        return int(exc.exit_code)
    except click.UsageError as exc:
        click.echo(f"usage error: {exc.format_message()}", err=True)
        return EXIT_USAGE
    except click.Abort:
        click.echo("aborted", err=True)
        return EXIT_USAGE
    except ConditionError as exc:
        click.echo(f"condition error: {exc}", err=True)
        return EXIT_USAGE
    except RefreshRequiredError as exc:
        click.echo(str(exc), err=True)
        return EXIT_REFRESH
    except DataError as exc:
        click.echo(f"data error: {exc}", err=True)
        return EXIT_DATA
    except DqopsError as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_DATA
    return EXIT_PASS


if __name__ == "__main__":
    sys.exit(main())
