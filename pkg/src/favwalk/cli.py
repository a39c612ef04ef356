"""Command-line front end: ``favwalk oracle | simulate | experiment``.

Exit codes: 0 success, 2 invalid arguments, 3 I/O failure, 4 detector
identity failure. Every run that writes files also writes ``manifest.json``
with SHA-256 digests of the other outputs.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import sys
from pathlib import Path

from . import __version__
from . import oracles
from .events import DetectorError, StoppingLog
from .experiments import EXPERIMENTS, ExperimentConfig, run_experiment
from .localtime import LocalTimeLedger
from .walk import ParameterError, ReplayStream, StepStream, WalkParams

log = logging.getLogger("favwalk")

EXIT_OK, EXIT_ARGS, EXIT_IO, EXIT_DETECTOR = 0, 2, 3, 4
ORACLE_QUERIES = ("pmf-position", "total-local-time", "never-visit", "no-return", "bounds")
# keys a config file may set, with their parsers
CONFIG_KEYS = {
    "p": str,
    "steps": int,
    "seed": int,
    "replicas": int,
    "horizon": int,
    "m": int,
    "k": int,
    "z": int,
    "n": int,
    "a": float,
    "epsilon": float,
    "n_grid": str,
    "m_max": int,
    "stride": int,
    "stream": int,
    "tolerance": float,
    "targets": str,
    "burn_in": int,
    "out_dir": str,
    "format": str,
    "jobs": int,
    "replay": str,
    "exact": lambda v: v.strip().lower() in ("1", "true", "yes"),
    "allow_inadmissible": lambda v: v.strip().lower() in ("1", "true", "yes"),
}


class UsageError(Exception):
    pass


# -- serialization -------------------------------------------------------------


def _fmt_float(x: float) -> str:
    if math.isnan(x) or math.isinf(x):
        return "null"  # JSON has no NaN/Infinity
    text = format(x, ".17g")
    if not any(c in text for c in ".e"):
        text += ".0"
    return text


def to_json(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON text with every float written to 17 significant digits."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if obj is None:
        return "null"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return _fmt_float(obj)
    if hasattr(obj, "item") and not isinstance(obj, (list, tuple, dict)):
        return to_json(obj.item(), indent, _level)  # numpy scalar
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{to_json(str(k))}: {to_json(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = [f"{pad}{to_json(v, indent, _level + 1)}" for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _csv_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return "" if _fmt_float(v) == "null" else _fmt_float(v)
    if isinstance(v, (list, tuple)):
        return ";".join(_csv_cell(x) for x in v)
    return str(v)


def to_csv(rows: list[dict], columns: list[str] | None = None) -> str:
    if not rows:
        return ""
    columns = columns or list(rows[0])
    lines = [",".join(columns)]
    lines += [",".join(_csv_cell(r.get(c)) for c in columns) for r in rows]
    return "\n".join(lines) + "\n"


class OutputSet:
    """Files written by one run, plus the manifest that lists their digests."""

    def __init__(self, out_dir: str | None):
        self.dir = Path(out_dir) if out_dir else None
        self.written: list[tuple[str, str]] = []
        if self.dir is not None:
            try:
                self.dir.mkdir(parents=True, exist_ok=True)
            except OSError as exc:
                raise OSError(f"cannot create output directory {self.dir}: {exc}") from exc

    def write(self, name: str, text: str):
        data = text.encode("utf-8")
        with open(self.dir / name, "wb") as fh:
            fh.write(data)
        self.written.append((name, hashlib.sha256(data).hexdigest()))

    def manifest(self, subcommand: str, config: dict, seed):
        body = {
            "subcommand": subcommand,
            "version": __version__,
            "seed": seed,
            "config": config,
            "outputs": [{"path": n, "sha256": d} for n, d in self.written],
        }
        data = (to_json(body) + "\n").encode("utf-8")
        with open(self.dir / "manifest.json", "wb") as fh:
            fh.write(data)


# -- argument handling -----------------------------------------------------------


def read_config_file(path: str) -> dict:
    """``key=value`` lines; ``#`` starts a comment; keys may use ``-`` or ``_``."""
    out = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    for number, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{number}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in CONFIG_KEYS:
            raise UsageError(f"{path}:{number}: unknown key {key!r}")
        try:
            out[key] = CONFIG_KEYS[key](value)
        except ValueError as exc:
            raise UsageError(f"{path}:{number}: bad value for {key}: {value!r}") from exc
    return out


def _common(parser: argparse.ArgumentParser):
    # defaults are None so that config-file values can fill the gaps
    parser.add_argument("--config", help="key=value configuration file (flags override it)")
    parser.add_argument("--p", help="probability of a +1 step, 1/2 < p < 1 (decimal or a/b)")
    parser.add_argument("--out-dir")
    parser.add_argument("--format", choices=("csv", "json"))
    parser.add_argument("--timing", action="store_true", help="include wall time in reports")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="favwalk", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    o = sub.add_parser("oracle", help="exact reference values as JSON")
    o.add_argument("query", choices=ORACLE_QUERIES)
    _common(o)
    o.add_argument("--n", type=int)
    o.add_argument("--z", type=int)
    o.add_argument("--k", type=int)
    o.add_argument("--m", type=int)
    o.add_argument("--a", type=float, help="amplitude A for the joint-tail rate")
    o.add_argument("--exact", action="store_true", default=None, help="rational arithmetic")

    s = sub.add_parser("simulate", help="one trajectory with its stopping-time trace")
    _common(s)
    s.add_argument("--steps", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--stream", type=int, help="stream id (default 0)")
    s.add_argument("--stride", type=int, help="write every stride-th row (default 1)")
    s.add_argument("--replay", help="file of +1/-1 steps replacing the random stream")

    e = sub.add_parser("experiment", help="Monte Carlo experiments and self-checks")
    e.add_argument("name", choices=EXPERIMENTS)
    _common(e)
    e.add_argument("--seed", type=int)
    e.add_argument("--replicas", type=int)
    e.add_argument("--horizon", type=int)
    e.add_argument("--m", type=int)
    e.add_argument("--k", type=int)
    e.add_argument("--z", type=int)
    e.add_argument("--n", type=int, help="enumeration length for enumerate-check")
    e.add_argument("--a", type=float, help="amplitude A of the joint-tail threshold")
    e.add_argument("--epsilon", type=float)
    e.add_argument("--n-grid", help="comma-separated increasing times")
    e.add_argument("--m-max", type=int)
    e.add_argument("--targets", help="comma-separated target sites for 'hit'")
    e.add_argument("--tolerance", type=float)
    e.add_argument("--burn-in", type=int)
    e.add_argument("--allow-inadmissible", action="store_true", default=None)
    e.add_argument("--jobs", type=int)
    return parser


def _merge(args: argparse.Namespace) -> dict:
    values = read_config_file(args.config) if getattr(args, "config", None) else {}
    for key, value in vars(args).items():
        if value is not None and key not in ("config", "command"):
            values[key] = value
    return values


def _int_list(text: str | None) -> tuple:
    if not text:
        return ()
    try:
        return tuple(int(float(x)) for x in str(text).replace(" ", "").split(",") if x)
    except ValueError as exc:
        raise UsageError(f"expected comma-separated integers, got {text!r}") from exc


def _params(values: dict) -> WalkParams:
    if "p" not in values:
        raise UsageError("--p is required")
    try:
        return WalkParams(values["p"])
    except (ValueError, ZeroDivisionError) as exc:
        raise UsageError(str(exc)) from exc


def _need(values: dict, *keys):
    missing = [k for k in keys if values.get(k) is None]
    if missing:
        raise UsageError("missing " + ", ".join("--" + k.replace("_", "-") for k in missing))


# -- subcommands -------------------------------------------------------------------


def cmd_oracle(values: dict) -> dict:
    params = _params(values)
    query = values["query"]
    exact = bool(values.get("exact"))
    if query == "pmf-position":
        _need(values, "n", "z")
        result = oracles.pmf_position(params, values["n"], values["z"], exact=exact)
    elif query == "total-local-time":
        _need(values, "z", "k")
        result = oracles.pmf_total_local_time(params, values["z"], values["k"], exact=exact)
    elif query == "never-visit":
        _need(values, "z")
        result = oracles.atom_never_visit(params, values["z"], exact=exact)
    elif query == "no-return":
        _need(values, "n")
        if values["n"] < 1:
            raise UsageError("--n must be at least 1")
        result = oracles.no_return_probability(params, values["n"], exact=exact)
    else:
        if values.get("m") is not None:
            value = oracles.bound_return_tail(params, values["m"])
            kind = "return-tail"
        else:
            _need(values, "a", "n")
            value = oracles.bound_joint_tail_rate(params, values["a"], values["n"])
            kind = "joint-tail-rate"
        return {"query": query, "kind": kind, "value": value, "method": "closed-form",
                "arithmetic": "binary-float", "p": params.p}
    out = {
        "query": query,
        "value": float(result.value),
        "method": result.method,
        "arithmetic": result.arithmetic,
        "p": params.p,
    }
    if exact:
        out["rational"] = str(result.value)
    for key in ("n", "z", "k"):
        if values.get(key) is not None:
            out[key] = values[key]
    return out


def read_replay(path: str) -> list[int]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read replay file {path}: {exc}") from exc
    try:
        steps = [int(tok) for tok in text.replace(",", " ").split()]
    except ValueError as exc:
        raise UsageError(f"replay file {path} must hold +1/-1 integers") from exc
    if any(s not in (-1, 1) for s in steps):
        raise UsageError(f"replay file {path} must hold only +1 and -1")
    return steps


def simulate(params: WalkParams, steps: int, stream, stride: int = 1):
    """Stream one walk through a ledger and stopping log.

    Returns ``(rows, log)`` where rows hold the trajectory columns every
    ``stride`` steps (and at time 0).
    """
    ledger = LocalTimeLedger()
    slog = StoppingLog()
    position = stream.position
    rows = [(0, position, 0, 0, "", "")]
    for t in range(1, steps + 1):
        stream.next_step()
        position = stream.position
        c = ledger.record_visit(position, t)
        slog.update(position, c, t)
        if t % stride == 0:
            rows.append(
                (t, position, ledger.max_count, len(ledger.favorites), ledger.fav_min, ledger.fav_max)
            )
    slog.horizon = steps
    return rows, slog


def event_trace(slog: StoppingLog) -> dict:
    records = [
        {"m": m, "k": k, "T": t, "L": site}
        for (m, k), (t, site) in sorted(slog.records.items(), key=lambda kv: kv[1][0])
    ]
    gaps = [{"m": m, "G": g, "censored": False} for m, g in sorted(slog.gaps.items())]
    gaps += [
        {"m": m, "G": None, "censored": True}
        for m in sorted(slog.frontier)
        if m not in slog.gaps
    ]
    return {"horizon": slog.horizon, "records": records, "gaps": gaps}


def cmd_simulate(values: dict, outputs: OutputSet) -> dict:
    params = _params(values)
    seed = values.get("seed", 0) if values.get("replay") else values.get("seed")
    if values.get("replay"):
        steps_list = read_replay(values["replay"])
        steps = values.get("steps", len(steps_list))
        if steps > len(steps_list):
            raise UsageError(f"--steps {steps} exceeds the {len(steps_list)} replay steps")
        stream = ReplayStream(steps_list, params.start)
    else:
        _need(values, "steps", "seed")
        steps = values["steps"]
        stream = StepStream(params, values["seed"], values.get("stream", 0))
    stride = values.get("stride", 1)
    if steps < 0 or stride < 1:
        raise UsageError("--steps must be >= 0 and --stride >= 1")
    rows, slog = simulate(params, steps, stream, stride)
    header = "n,S_n,xi_n,fav_count,fav_min_site,fav_max_site\n"
    body = "".join(",".join(str(v) for v in r) + "\n" for r in rows)
    trace = event_trace(slog)
    config = {
        "p": params.p,
        "start": params.start,
        "steps": steps,
        "seed": seed,
        "stream": values.get("stream", 0),
        "stride": stride,
        "replay": bool(values.get("replay")),
    }
    if outputs.dir is None:
        raise UsageError("simulate needs --out-dir")
    outputs.write("trajectory.csv", header + body)
    outputs.write("events.json", to_json({"config": config, **trace}) + "\n")
    return config


def cmd_experiment(values: dict) -> tuple[dict, ExperimentConfig]:
    name = values["name"]
    if name == "enumerate-check" and "p" not in values:
        values = {**values, "p": "0.75"}  # the check sweeps its own fixed p values
    params = _params(values)
    kwargs = {
        "params": params,
        "name": name,
        "replicas": values.get("replicas", 1000),
        "seed": values.get("seed", 0),
        "horizon": values.get("horizon", 100_000),
        "m": values.get("m"),
        "k": values.get("k"),
        "z": values.get("z"),
        "epsilon": values.get("epsilon"),
        "n_grid": _int_list(values.get("n_grid")),
        "m_max": values.get("m_max"),
        "amplitude": values.get("a", 1.0),
        "tolerance": values.get("tolerance", 1e-6),
        "burn_in": values.get("burn_in", 1000),
        "n_enum": values.get("n", 12),
        "allow_inadmissible": bool(values.get("allow_inadmissible")),
        "jobs": values.get("jobs", 1),
    }
    if values.get("targets"):
        kwargs["targets"] = _int_list(values["targets"])
    try:
        config = ExperimentConfig(**kwargs)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    try:
        report = run_experiment(config)
    except ParameterError as exc:
        raise UsageError(str(exc)) from exc
    return report, config


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with status 2 on malformed flags
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        values = _merge(args)
        timing = values.pop("timing", False)
        fmt = values.get("format") or "json"
        if args.command == "oracle":
            result = cmd_oracle(values)
            text = to_json(result) + "\n"
            if values.get("out_dir"):
                outputs = OutputSet(values["out_dir"])
                outputs.write("oracle.json", text)
                outputs.manifest("oracle", {k: result[k] for k in result if k != "value"}, None)
            sys.stdout.write(text)
        elif args.command == "simulate":
            outputs = OutputSet(values.get("out_dir"))
            config = cmd_simulate(values, outputs)
            outputs.manifest("simulate", config, config["seed"])
        else:
            report, config = cmd_experiment(values)
            wall = report.pop("wall_time", None)
            if timing:
                report["wall_time"] = wall
            if report.get("valid") is False or any(
                r.get("valid") is False for r in report.get("rows", [])
            ):
                log.warning("censoring above %.0f%%: report marked invalid", 20)
            text = to_json(report) + "\n"
            if values.get("out_dir"):
                outputs = OutputSet(values["out_dir"])
                outputs.write("report.json", text)
                if fmt == "csv" and report.get("rows"):
                    outputs.write("table.csv", to_csv(report["rows"]))
                outputs.manifest("experiment", config.echo(), config.seed)
            else:
                sys.stdout.write(text)
    except UsageError as exc:
        print(f"favwalk: error: {exc}", file=sys.stderr)
        return EXIT_ARGS
    except DetectorError as exc:
        print(f"favwalk: detector failure: {exc}", file=sys.stderr)
        return EXIT_DETECTOR
    except OSError as exc:
        print(f"favwalk: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ParameterError, ValueError) as exc:
        print(f"favwalk: error: {exc}", file=sys.stderr)
        return EXIT_ARGS
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
