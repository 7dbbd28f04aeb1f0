"""Command line interface: one subcommand per experiment plus config-driven runs.

Exit codes: 0 on success, 2 when any verdict is ``bound-violated``, 1 on
errors.  An ``inconclusive`` verdict never changes the exit code.

CSV columns are the experiment's echoed inputs (in declaration order)
followed by its outputs; floats use 17 significant digits, rationals are
written as ``p/q``, booleans as ``true``/``false``, and missing values as
empty fields.  Relative output paths are resolved against
``$EIGENMSA_OUT_DIR`` when it is set.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import sys
from fractions import Fraction
from pathlib import Path

import click
import numpy as np

from . import __version__
from .errors import EigenMSAError, InvalidArgument, ScaleParamError
from .experiments import EXPERIMENTS, AUTO, Option, resolve, run_experiment

__all__ = ["main", "cli", "format_value", "to_csv", "to_json", "load_config", "CONFIG_SCHEMA"]

CONFIG_SCHEMA = "eigenmsa.run/1"
OUT_DIR_ENV = "EIGENMSA_OUT_DIR"


def format_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, Fraction):
        return str(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return format(v, ".17g")
    if isinstance(v, (tuple, list)):
        return ";".join(format_value(x) for x in v)
    return str(v)


def _jsonable(v):
    if v is None or isinstance(v, (str, bool)):
        return v
    if isinstance(v, np.bool_):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, Fraction):
        return str(v) if v.denominator != 1 else int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else format_value(v)
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (tuple, list)):
        return [_jsonable(x) for x in v]
    return str(v)


def to_csv(rows: list) -> str:
    buf = io.StringIO()
    if not rows:
        return ""
    cols = list(rows[0])
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([format_value(r.get(c)) for c in cols])
    return buf.getvalue()


def to_json(name: str, options: dict, rows: list, summary: dict) -> str:
    doc = {
        "experiment": name,
        "version": __version__,
        "options": _jsonable(options),
        "summary": _jsonable(summary),
        "rows": _jsonable(rows),
    }
    return json.dumps(doc, indent=2) + "\n"


def _resolve_path(path: str) -> Path:
    p = Path(path)
    base = os.environ.get(OUT_DIR_ENV)
    if base and not p.is_absolute():
        p = Path(base) / p
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def _emit(text: str, out: str | None) -> None:
    if out is None or out == "-":
        click.echo(text, nl=False)
    else:
        _resolve_path(out).write_text(text)


def _finish(name, rows, summary, violated, options, out, fmt) -> None:
    text = to_csv(rows) if fmt == "csv" else to_json(name, options, rows, summary)
    _emit(text, out)
    if out not in (None, "-"):
        click.echo(json.dumps(_jsonable(summary)))
    if violated:
        raise SystemExit(2)


def _click_type(opt: Option):
    if opt.choices:
        return click.Choice(opt.choices)
    if opt.kind == "int":
        return int
    return str if opt.kind in ("auto", "rational", "str") else float


def _make_command(name: str):
    exp = EXPERIMENTS[name]

    def callback(out, fmt, workers, **values):
        given = {k: v for k, v in values.items() if v is not None}
        try:
            rows, summary, violated, options = run_experiment(name, given, workers)
        except EigenMSAError as exc:
            click.echo(f"error: {exc}", err=True)
            raise SystemExit(1) from None
        _finish(name, rows, summary, violated, options, out, fmt)

    params = [
        click.Option(["--out"], default=None, help="output path; '-' or omitted for stdout"),
        click.Option(["--format", "fmt"], type=click.Choice(["csv", "json"]), default="csv", show_default=True),
        click.Option(["--workers"], type=int, default=1, show_default=True, help="worker processes; never changes results"),
    ]
    for opt in exp.all_options():
        flag = "--" + opt.key.replace("_", "-")
        default = opt.default
        shown = repr(default) if isinstance(default, float) else format_value(default) if default not in (None, AUTO) else default
        params.append(
            click.Option([flag, opt.key], type=_click_type(opt), default=None, help=f"{opt.help} [default: {shown}]".strip())
        )
    return click.Command(name, callback=callback, params=params, help=exp.doc)


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.version_option(__version__, prog_name="eigenmsa")
def cli():
    """Desk-scale experiments for multiscale analysis of the Anderson model."""


for _name in EXPERIMENTS:
    cli.add_command(_make_command(_name))


# ------------------------------------------------------------------ configs

_MODEL_KEYS = {"d", "eps", "distribution", "seed"}
_DIST_KEYS = {"kind", "low", "high", "atoms"}
_SCALE_KEYS = ("xi", "zeta", "beta", "tau", "gamma")
_OUTPUT_KEYS = {"csv", "json"}
_TOP_KEYS = {"schema", "model", "scale", "experiment", "output"}


class ConfigError(InvalidArgument):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


def _check_keys(block, allowed, where, problems):
    if not isinstance(block, dict):
        problems.append(f"{where}: expected an object")
        return {}
    for k in sorted(set(block) - set(allowed)):
        problems.append(f"{where}.{k}: unknown key")
    return block


def load_config(doc: dict) -> tuple:
    """Validate a run config; returns ``(operation, options, output_block)``.

    Every problem found is reported with its dotted field path.
    """
    problems = []
    doc = _check_keys(doc, _TOP_KEYS, "config", problems)
    if doc.get("schema") != CONFIG_SCHEMA:
        problems.append(f"config.schema: expected {CONFIG_SCHEMA!r}")
    values = {}
    model = _check_keys(doc.get("model", {}), _MODEL_KEYS, "model", problems)
    for k in ("d", "eps", "seed"):
        if k in model:
            values[k] = model[k]
    dist = _check_keys(model.get("distribution", {}), _DIST_KEYS, "model.distribution", problems)
    if "kind" in dist:
        values["dist"] = dist["kind"]
    for k in ("low", "high"):
        if k in dist:
            values[k] = dist[k]
    if "atoms" in dist:
        atoms = dist["atoms"]
        values["atoms"] = ",".join(str(a) for a in atoms) if isinstance(atoms, list) else atoms
    scale = _check_keys(doc.get("scale", {}), _SCALE_KEYS, "scale", problems)
    values.update(scale)
    experiment = doc.get("experiment", {})
    if not isinstance(experiment, dict):
        problems.append("experiment: expected an object")
        experiment = {}
    op = experiment.get("operation")
    if op not in EXPERIMENTS:
        problems.append(f"experiment.operation: expected one of {', '.join(EXPERIMENTS)}")
    output = _check_keys(doc.get("output", {}), _OUTPUT_KEYS, "output", problems)
    for k, v in output.items():
        if not isinstance(v, str):
            problems.append(f"output.{k}: expected a path string")
    if op in EXPERIMENTS:
        exp = EXPERIMENTS[op]
        known = {o.key for o in exp.all_options()}
        for k, v in experiment.items():
            if k == "operation":
                continue
            if k not in known:
                problems.append(f"experiment.{k}: unknown key for {op}")
            else:
                values[k] = v
        for k in list(values):
            if k not in known and k not in experiment:
                where = "scale" if k in _SCALE_KEYS else "model"
                problems.append(f"{where}.{k}: not used by {op}")
        typed = len(problems)
        for opt in exp.all_options():
            if opt.key in values:
                try:
                    resolve(exp, {opt.key: values[opt.key]})
                except InvalidArgument as exc:
                    problems.append(f"{_where(opt.key, experiment)}: {exc}")
        if len(problems) == typed and set(_SCALE_KEYS) <= known:
            from .certify import validate_scale_params

            full = resolve(exp, values)
            try:
                validate_scale_params(*(full[k] for k in _SCALE_KEYS))
            except ScaleParamError as exc:
                problems.extend(f"scale: {v}" for v in exc.violations)
    if problems:
        raise ConfigError(problems)
    return op, values, output


def _where(key, experiment):
    if key in experiment:
        return f"experiment.{key}"
    if key in _SCALE_KEYS:
        return f"scale.{key}"
    return f"model.{key}"


@cli.command("run")
@click.argument("config", type=click.Path(exists=True, dir_okay=False))
@click.option("--workers", type=int, default=1, show_default=True, help="worker processes; never changes results")
def run_cmd(config, workers):
    """Run the experiment described by a JSON CONFIG file."""
    try:
        with open(config) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        click.echo(f"error: config: {exc}", err=True)
        raise SystemExit(1) from None
    try:
        op, values, output = load_config(doc)
        rows, summary, violated, options = run_experiment(op, values, workers)
    except ConfigError as exc:
        for p in exc.problems:
            click.echo(f"error: {p}", err=True)
        raise SystemExit(1) from None
    except EigenMSAError as exc:
        click.echo(f"error: {exc}", err=True)
        raise SystemExit(1) from None
    csv_text = to_csv(rows)
    _emit(csv_text, output.get("csv"))
    if "json" in output:
        _emit(to_json(op, options, rows, summary), output["json"])
    if violated:
        raise SystemExit(2)


def main(argv=None) -> int:
    try:
        cli.main(args=argv, prog_name="eigenmsa", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.ClickException as exc:
        exc.show()
        return 1
    except click.Abort:
        return 1
    except SystemExit as exc:
        return int(exc.code or 0)
    return 0


if __name__ == "__main__":
    sys.exit(main())
