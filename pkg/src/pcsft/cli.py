"""Command-line front end.

Exit codes: 0 success, 1 invalid input (the message names the field or
path), 2 runtime failure such as a run without clicks.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile

import numpy as np

from . import experiment as ex
from . import oracle
from .errors import SimulationError, ValidationError
from .modes import ModeSystem, evolve, relative_energies
from .rng import U64_MAX

SEED_ENV = "PCSFT_SEED"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ValidationError(message, field="arguments")


def _add_common(p, experiment=True):
    p.add_argument("--config", required=True, metavar="PATH", help="JSON config file")
    p.add_argument("--out", metavar="PATH", help="output file (default: stdout)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    if experiment:
        p.add_argument("--seed", metavar="U64", help=f"master seed (fallback: ${SEED_ENV}, then config)")
        p.add_argument("--threads", type=int, default=1, metavar="N")
        p.add_argument("--dt", type=float, metavar="FLOAT")
        p.add_argument("--thresholds", metavar="CSV-LIST",
                       help="threshold list for sweep; a single value overrides the threshold elsewhere")


def build_parser():
    parser = _Parser(prog="pcsft", description="Threshold-detection Monte Carlo for classical random fields.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    p = sub.add_parser("simulate", help="singles, or coincidences with --pair")
    _add_common(p)
    p.add_argument("--pair", metavar="I,J", help="two channel indices for a coincidence run")
    p = sub.add_parser("sweep", help="coincidence runs over ascending thresholds")
    _add_common(p)
    p.add_argument("--pair", metavar="I,J", default=None)
    _add_common(sub.add_parser("born", help="click shares against Born probabilities"))
    _add_common(sub.add_parser("tau", help="mean hitting time per channel"))
    _add_common(sub.add_parser("modes", help="eigen-mode evolution of an initial field"), experiment=False)
    p = sub.add_parser("oracle", help="evaluate a closed-form reference")
    p.add_argument("formula", choices=oracle.FORMULAS)
    p.add_argument("--threshold", type=float)
    p.add_argument("--power", type=float)
    p.add_argument("--T", type=float, dest="T")
    p.add_argument("--t", type=float, dest="t")
    p.add_argument("--terms", type=int)
    p.add_argument("--channel", type=int)
    p.add_argument("--config", metavar="PATH", help="JSON config with B (for the born formula)")
    p.add_argument("--out", metavar="PATH")
    return parser


# ------------------------------------------------------------------ input

def _load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise ValidationError(f"config file not found: {path}", field=path) from exc
    except OSError as exc:
        raise ValidationError(f"cannot read config file {path}: {exc.strerror}", field=path) from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})", field=path) from exc


def _parse_seed(text, source):
    try:
        v = int(str(text).strip(), 0)
    except ValueError as exc:
        raise ValidationError(f"{source} must be an unsigned 64-bit integer, got {text!r}", field=source) from exc
    if not 0 <= v <= U64_MAX:
        raise ValidationError(f"{source} out of range: {v}", field=source)
    return v


def _parse_floats(text, name):
    try:
        vals = [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise ValidationError(f"{name} must be a comma-separated list of numbers", field=name) from exc
    if not vals:
        raise ValidationError(f"{name} is empty", field=name)
    return vals


def _pair(text):
    if text is None:
        return None
    try:
        a, b = (int(x) for x in text.split(","))
    except ValueError as exc:
        raise ValidationError("--pair must look like I,J", field="pair") from exc
    return (a, b)


def resolve_config(args):
    """Config file with command-line overrides applied; returns (config, raw dict)."""
    raw = _load_json(args.config)
    if not isinstance(raw, dict):
        raise ValidationError(f"{args.config}: config must be a JSON object", field=args.config)
    raw = dict(raw)
    if args.seed is not None:
        raw["master_seed"] = _parse_seed(args.seed, "--seed")
    elif os.environ.get(SEED_ENV):
        raw["master_seed"] = _parse_seed(os.environ[SEED_ENV], SEED_ENV)
    if args.dt is not None:
        raw["dt"] = args.dt
    if args.thresholds is not None:
        raw["thresholds"] = _parse_floats(args.thresholds, "thresholds")
    if args.threads < 1:
        raise ValidationError("--threads must be >= 1", field="threads")
    thresholds = raw.get("thresholds")
    if thresholds is not None and args.command != "sweep":
        if len(thresholds) != 1:
            raise ValidationError("a single threshold is expected outside sweep", field="thresholds")
        raw["detector"] = dict(raw.get("detector") or {}, threshold=float(thresholds[0]))
    return ex.ExperimentConfig.from_json(raw), raw


# ------------------------------------------------------------------ output

def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "pass" if v else "fail"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _csv_text(cfg, columns, rows, extra=None):
    buf = io.StringIO()
    buf.write("# config: " + json.dumps(cfg.to_json(), sort_keys=True) + "\n")
    buf.write(f"# master_seed: {cfg.master_seed}\n")
    for k, v in (extra or {}).items():
        buf.write(f"# {k}: {json.dumps(v, sort_keys=True)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(x) for x in r])
    return buf.getvalue()


def _json_text(cfg, results):
    doc = {"master_seed": cfg.master_seed if cfg is not None else None,
           "config": cfg.to_json() if cfg is not None else None, "results": results}
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def write_atomic(path, text):
    """Write via a temporary file in the target directory, then rename."""
    path = os.path.abspath(path)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path), prefix=".pcsft-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(args, text):
    if args.out:
        write_atomic(args.out, text)
    else:
        sys.stdout.write(text)


SINGLES_COLUMNS = ["channel", "count", "probability", "ci_low", "ci_high"]
PAIR_COLUMNS = ["threshold", "channel_a", "channel_b", "p_a", "p_b", "p_ab", "g2", "g2_ci_low", "g2_ci_high",
                "coincidences", "count_a", "count_b", "n_trials"]
BORN_COLUMNS = ["channel", "empirical", "reference", "abs_diff", "ci_low", "ci_high", "pass"]
TAU_COLUMNS = ["channel", "clicks", "mean_tau", "stderr", "expected", "rel_error", "pass"]
MODES_COLUMNS = ["t", "mode", "omega", "coef_re", "coef_im", "amplitude", "energy_share"]


def _pair_row(threshold, st):
    a, b = st.channels
    lo, hi = st.g2_ci if st.g2_ci is not None else (None, None)
    return [threshold, a, b, st.p1, st.p2, st.p12, st.g2, lo, hi, st.coincidences, st.counts[a], st.counts[b],
            st.n_trials]


def _singles_rows(st):
    return [[j, c, p, lo, hi] for j, (c, p, lo, hi) in
            enumerate(zip(st.counts, st.probabilities, st.ci_low, st.ci_high))]


def _channels(args, raw):
    pair = _pair(args.pair) if getattr(args, "pair", None) else None
    if pair is None and raw.get("coincidence_channels") is not None:
        pair = tuple(int(c) for c in raw["coincidence_channels"])
    return pair


def cmd_simulate(args):
    cfg, raw = resolve_config(args)
    pair = _channels(args, raw)
    if pair is None:
        st = ex.run_singles(cfg, threads=args.threads)
        if args.format == "json":
            return _json_text(cfg, st.to_json())
        return _csv_text(cfg, SINGLES_COLUMNS, _singles_rows(st), {"metadata": st.metadata})
    st = ex.run_coincidence(cfg, pair, threads=args.threads, strict=True)
    if args.format == "json":
        return _json_text(cfg, st.to_json())
    return _csv_text(cfg, PAIR_COLUMNS, [_pair_row(cfg.detector.threshold, st)], {"metadata": st.metadata})


def cmd_sweep(args):
    cfg, raw = resolve_config(args)
    if raw.get("thresholds") is None:
        raise ValidationError("sweep needs --thresholds or a 'thresholds' config entry", field="thresholds")
    pair = _channels(args, raw) or (0, 1)
    table = ex.sweep_threshold(cfg, raw["thresholds"], pair, threads=args.threads)
    if args.format == "json":
        return _json_text(cfg, table.to_json())
    rows = [_pair_row(e, r) for e, r in zip(table.thresholds, table.rows)]
    extra = {"kendall_tau": table.kendall_tau, "kendall_p_decreasing": table.kendall_p}
    if table.rows:
        extra["metadata"] = table.rows[0].metadata
    return _csv_text(cfg, PAIR_COLUMNS, rows, extra)


def cmd_born(args):
    cfg, _ = resolve_config(args)
    rows, st = ex.born_report(cfg, threads=args.threads)
    if args.format == "json":
        return _json_text(cfg, {"rows": [r.__dict__ for r in rows], "stats": st.to_json(),
                                "passed": all(r.passed for r in rows)})
    return _csv_text(cfg, BORN_COLUMNS, [[r.channel, r.empirical, r.reference, r.abs_diff, r.ci_low, r.ci_high,
                                          r.passed] for r in rows])


def cmd_tau(args):
    cfg, _ = resolve_config(args)
    rows = ex.mean_tau_report(cfg, threads=args.threads)
    if args.format == "json":
        return _json_text(cfg, {"rows": [r.__dict__ for r in rows]})
    return _csv_text(cfg, TAU_COLUMNS, [[r.channel, r.clicks, r.mean_tau, r.stderr, r.expected, r.rel_error,
                                         r.passed] for r in rows])


class _ModesEcho:
    """Stand-in for an experiment config when echoing a modes config."""

    def __init__(self, raw):
        self.raw = raw
        self.master_seed = None

    def to_json(self):
        return self.raw


def cmd_modes(args):
    raw = _load_json(args.config)
    if not isinstance(raw, dict):
        raise ValidationError(f"{args.config}: config must be a JSON object", field=args.config)
    for key in ("generator", "phi0"):
        if key not in raw:
            raise ValidationError(f"missing modes config field {key!r}", field=key)
    system = ModeSystem(raw["generator"], raw.get("mode", "plain"))
    times = raw.get("times", [0.0])
    if not isinstance(times, list) or not times:
        raise ValidationError("times must be a non-empty list", field="times")
    results = []
    rows = []
    for t in times:
        f = evolve(system, raw["phi0"], t)
        c = f.coefficients if f.coefficients.ndim == 2 else np.stack([f.coefficients, np.zeros_like(f.coefficients)], 1)
        amp = f.amplitudes
        share = amp ** 2 / np.sum(amp ** 2) if np.sum(amp ** 2) > 0 else np.zeros_like(amp)
        for k in range(system.dim):
            rows.append([float(t), k, system.frequencies[k], c[k, 0], c[k, 1], amp[k], share[k]])
        entry = {"t": float(t), "coefficients": c.tolist(), "field": f.field.tolist(),
                 "norm": float(np.linalg.norm(f.field))}
        if raw.get("basis") is not None and f.field.size == system.dim and np.any(f.field):
            entry["relative_energies"] = relative_energies(f.field, raw["basis"]).tolist()
        results.append(entry)
    echo = _ModesEcho(raw)
    if args.format == "json":
        return _json_text(echo, {"frequencies": system.frequencies.tolist(), "states": results})
    buf = io.StringIO()
    buf.write("# config: " + json.dumps(raw, sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(MODES_COLUMNS)
    for r in rows:
        w.writerow([_fmt(x) for x in r])
    return buf.getvalue()


def cmd_oracle(args):
    inputs = {k: getattr(args, k) for k in ("threshold", "power", "T", "t", "terms", "channel")
              if getattr(args, k) is not None}
    needed = {"mean_tau": ("threshold", "power"), "click_rate": ("threshold", "power"),
              "expected_count": ("threshold", "power", "T"), "survival_1d": ("t", "threshold", "power"),
              "born": ("channel",)}[args.formula]
    for k in needed:
        if k not in inputs:
            raise ValidationError(f"oracle {args.formula} needs --{k}", field=k)
    if args.formula == "born":
        if not args.config:
            raise ValidationError("oracle born needs --config with B", field="config")
        raw = _load_json(args.config)
        if not isinstance(raw, dict) or "B" not in raw:
            raise ValidationError("missing config field 'B'", field="B")
        from .linalg import CovarianceOperator
        B = CovarianceOperator.from_json(raw["B"])
        if not 0 <= inputs["channel"] < B.dim:
            raise ValidationError(f"channel must be in 0..{B.dim - 1}", field="channel")
        res = oracle.evaluate("born", B=B, channel=inputs["channel"])
        out = {"formula_id": res.formula_id, "value": res.value, "inputs": {"B": B.to_json(), **inputs}}
    else:
        out = oracle.evaluate(args.formula, **inputs).to_json()
    return json.dumps(out, indent=2, sort_keys=True) + "\n"


COMMANDS = {"simulate": cmd_simulate, "sweep": cmd_sweep, "born": cmd_born, "tau": cmd_tau, "modes": cmd_modes,
            "oracle": cmd_oracle}


def run(argv=None):
    """Parse ``argv``, execute and return the exit code."""
    try:
        args = build_parser().parse_args(argv)
        text = COMMANDS[args.command](args)
        _emit(args, text)
        return 0
    except ValidationError as exc:
        field = getattr(exc, "field", None)
        prefix = f"invalid input ({field})" if field else "invalid input"
        print(f"pcsft: {prefix}: {exc}", file=sys.stderr)
        return 1
    except SimulationError as exc:
        print(f"pcsft: run failed: {exc}", file=sys.stderr)
        return 2


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
