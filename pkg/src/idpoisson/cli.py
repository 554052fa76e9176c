"""Command line front end: simulate, bounds, verify, analyze.

Exit codes: 0 success, 1 runtime failure, 2 validation failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ._validation import (
    ValidationError,
    check_kappa,
    check_l,
    check_nonnegative,
    check_positive,
    check_positive_int,
)
from .affinity import (
    EXHAUSTIVE_LIMIT,
    AffinityMatrix,
    condition_metrics,
    gen_identity,
    gen_random_sparse,
    gen_toeplitz,
    load_matrix,
    svd_reduction,
    zonotope_volume,
)
from .bounds import fmt, type1_bound, write_bounds_csv, BOUNDS_CSV_FIELDS, bounds_grid
from .channel import ChannelParams, derive_seed
from .codebook import achieved_rate, construct_greedy, min_distance_reduced, packing_radius
from .idcodec import CSV_FIELDS, DecoderParams, csv_row, estimate_errors
from .oracle import FAULTS, run_battery

EXIT_OK, EXIT_RUNTIME, EXIT_INVALID = 0, 1, 2

RESULT_FIELDS = CSV_FIELDS + (
    "achieved_rate", "min_distance", "saturation_count", "saturated", "r0", "c_avg",
    "messages_evaluated", "pairs_evaluated", "type1_bound", "codebook_seed", "error_seed",
)

CHANNEL_KINDS = ("identity", "toeplitz", "random_sparse", "file")


def _gain_spec(doc, name):
    """Normalise a v / lambda spec to ``{"values": ..., "min": ..., "max": ...}``."""
    if isinstance(doc, (int, float)) and not isinstance(doc, bool):
        val = check_positive(doc, name)
        return {"values": val, "min": val, "max": val}
    if not isinstance(doc, dict) or "values" not in doc:
        raise ValidationError(f"{name} must be a positive number or an object with 'values'")
    vals = np.atleast_1d(np.asarray(doc["values"], dtype=float))
    if vals.size == 0 or np.any(vals <= 0) or not np.all(np.isfinite(vals)):
        raise ValidationError(f"{name} values must be positive and finite")
    lo = float(doc.get("min", vals.min()))
    hi = float(doc.get("max", vals.max()))
    if not 0 < lo <= hi:
        raise ValidationError(f"{name} needs 0 < min <= max")
    if vals.min() < lo or vals.max() > hi:
        raise ValidationError(f"{name} values outside declared [{lo}, {hi}]")
    values = doc["values"] if isinstance(doc["values"], list) else float(doc["values"])
    return {"values": values, "min": lo, "max": hi}


@dataclass
class ExperimentConfig:
    channel: dict
    c_avg: float
    c_max: float
    a: float
    b: float
    t_sweep: list
    v: dict = field(default_factory=lambda: {"values": 1.0, "min": 1.0, "max": 1.0})
    lam: dict = field(default_factory=lambda: {"values": 1.0, "min": 1.0, "max": 1.0})
    kappa: float | None = None
    l: float | None = None
    trials: int = 2000
    pair_cap: int = 200
    candidate_budget: int = 2000
    root_seed: int = 0
    output_dir: str | None = None

    @classmethod
    def from_json(cls, doc: dict) -> "ExperimentConfig":
        if "config" in doc and isinstance(doc["config"], dict):
            doc = doc["config"]          # a manifest replays as its own config
        known = {"channel", "c_avg", "c_max", "a", "b", "t_sweep", "v", "lambda", "kappa", "l",
                 "trials", "pair_cap", "candidate_budget", "root_seed", "output_dir"}
        extra = set(doc) - known
        if extra:
            raise ValidationError(f"unknown config keys: {sorted(extra)}")
        missing = {"channel", "c_avg", "c_max", "a", "b", "t_sweep"} - set(doc)
        if missing:
            raise ValidationError(f"config missing keys: {sorted(missing)}")
        kw = {k: doc[k] for k in doc if k not in ("lambda",)}
        if "lambda" in doc:
            kw["lam"] = doc["lambda"]
        cfg = cls(**kw)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        self.c_avg = check_positive(self.c_avg, "c_avg")
        self.c_max = check_positive(self.c_max, "c_max")
        if self.c_avg > self.c_max:
            raise ValidationError(f"c_avg ({self.c_avg}) must not exceed c_max ({self.c_max})")
        self.a = check_positive(self.a, "a")
        self.b = check_nonnegative(self.b, "b")
        if self.kappa is not None:
            self.kappa = check_kappa(self.kappa)
        if self.l is not None:
            self.l = check_l(self.l)
        if not isinstance(self.t_sweep, list) or not self.t_sweep:
            raise ValidationError("t_sweep must be a non-empty list")
        self.t_sweep = [check_positive_int(t, "t_sweep value", minimum=2) for t in self.t_sweep]
        self.trials = check_positive_int(self.trials, "trials")
        self.pair_cap = check_positive_int(self.pair_cap, "pair_cap")
        self.candidate_budget = check_positive_int(self.candidate_budget, "candidate_budget")
        if isinstance(self.root_seed, bool) or not isinstance(self.root_seed, int):
            raise ValidationError("root_seed must be an integer")
        self.v = _gain_spec(self.v, "v")
        self.lam = _gain_spec(self.lam, "lambda")
        kind = self.channel.get("kind") if isinstance(self.channel, dict) else None
        if kind not in CHANNEL_KINDS:
            raise ValidationError(f"channel.kind must be one of {CHANNEL_KINDS}")
        if kind == "toeplitz" and not self.channel.get("taps"):
            raise ValidationError("toeplitz channel needs non-empty 'taps'")
        if kind == "random_sparse":
            for key in ("l", "a_min", "a_max"):
                if key not in self.channel:
                    raise ValidationError(f"random_sparse channel needs '{key}'")
        if kind == "file" and "path" not in self.channel:
            raise ValidationError("file channel needs 'path'")

    def to_json(self) -> dict:
        doc = asdict(self)
        doc["lambda"] = doc.pop("lam")
        doc.pop("output_dir")            # where results land is not part of the experiment
        return doc


def build_affinity(cfg: ExperimentConfig, t: int, seed: int) -> AffinityMatrix:
    spec = cfg.channel
    kind = spec["kind"]
    if kind == "identity":
        return gen_identity(t)
    if kind == "toeplitz":
        return gen_toeplitz(spec["taps"], t)
    if kind == "random_sparse":
        if "n" in spec:
            n = check_positive_int(spec["n"], "channel.n")
        else:
            kappa = check_kappa(spec.get("kappa", cfg.kappa if cfg.kappa is not None else 1.0))
            n = int(round(t ** (1.0 / kappa)))
        a, _ = gen_random_sparse(t, n, spec["l"], spec["a_min"], spec["a_max"], seed)
        return a
    return load_matrix(spec["path"])


def _gain_vector(spec: dict, size: int, name: str) -> np.ndarray:
    vals = np.asarray(spec["values"], dtype=float)
    if vals.ndim == 0:
        return np.full(size, float(vals))
    if vals.size != size:
        raise ValidationError(f"{name} has {vals.size} values, channel needs {size}")
    return vals


def run_point(cfg: ExperimentConfig, t: int) -> tuple[dict, dict]:
    """One sweep point. Seeds are derived from the root seed and ``t``."""
    seeds = {name: derive_seed(cfg.root_seed, t, i)
             for i, name in enumerate(("matrix", "codebook", "errors"))}
    aff = build_affinity(cfg, t, seeds["matrix"] % 2**63)
    ch = ChannelParams(aff, _gain_vector(cfg.v, aff.n, "v"), _gain_vector(cfg.lam, aff.k, "lambda"),
                       cfg.v["min"], cfg.v["max"], cfg.lam["min"], cfg.lam["max"])
    red = svd_reduction(ch.abar)
    if cfg.channel["kind"] == "file" and red.t != t:
        raise ValidationError(f"matrix file has rank {red.t}, sweep asks for T={t}")
    report = condition_metrics(aff, red.t)
    try:
        kappa = cfg.kappa if cfg.kappa is not None else check_kappa(min(report.kappa_hat, 1.0))
        l = cfg.l if cfg.l is not None else check_l(report.l_hat)
    except ValidationError as exc:
        raise ValidationError(f"cannot default kappa/l from the matrix ({exc}); set them explicitly") from exc

    dp = DecoderParams.from_constants(cfg.a, cfg.b, kappa, l, red)
    _, r0 = packing_radius(cfg.a, cfg.b, kappa, l, red.t)
    cb = construct_greedy(ch, red, cfg.c_avg, cfg.c_max, r0, cfg.candidate_budget, seeds["codebook"])
    est = estimate_errors(cb, ch, dp, cfg.trials, seeds["errors"], cfg.pair_cap)

    row = csv_row(est, dp, cb.m)
    bound = type1_bound(int(max(aff.f_counts)), aff.a_max, ch.v_max, cfg.c_avg, ch.lambda_max,
                        red.t, dp.psi_t)
    row.update({
        "achieved_rate": achieved_rate(cb.m, red.t),
        "min_distance": min_distance_reduced(cb) if cb.m >= 2 else None,
        "saturation_count": cb.saturation_count,
        "saturated": cb.saturated,
        "r0": r0,
        "c_avg": cfg.c_avg,
        "messages_evaluated": est.messages_evaluated,
        "pairs_evaluated": est.pairs_evaluated,
        "type1_bound": bound,
        "codebook_seed": seeds["codebook"],
        "error_seed": seeds["errors"],
    })
    point = {"T_target": t, "rank": red.t, "kappa": kappa, "l": l, "m": cb.m, "seeds": seeds,
             "ci_method": est.ci_method, "conditions": report.to_json()}
    return row, point


def _run_point_args(args):
    return run_point(*args)


def _csv_text(fields, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(fields)
    for r in rows:
        w.writerow([fmt(r[f]) for f in fields])
    return buf.getvalue()


def _json_text(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _prepare_dir(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise OSError(f"output directory {out} is not writable: {exc}") from exc
    return out


def run_simulate(cfg: ExperimentConfig, out_dir, jobs: int = 1) -> Path:
    """Run every sweep point and write ``results.csv`` and ``manifest.json``."""
    out = _prepare_dir(out_dir)
    work = [(cfg, t) for t in cfg.t_sweep]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_point_args, work))   # map keeps sweep order
    else:
        results = [run_point(c, t) for c, t in work]
    csv_text = _csv_text(RESULT_FIELDS, [r for r, _ in results])
    (out / "results.csv").write_text(csv_text)
    from . import __version__
    manifest = {
        "config": cfg.to_json(),
        "points": [p for _, p in results],
        "outputs": {"results.csv": hashlib.sha256(csv_text.encode()).hexdigest()},
        "package_version": __version__,
    }
    (out / "manifest.json").write_text(_json_text(manifest))
    return out


def run_analyze(matrix_file, t_override=None) -> dict:
    aff = load_matrix(matrix_file)
    red = svd_reduction(aff.entries)
    t = red.t
    if t_override is not None:
        t_override = check_positive_int(t_override, "t")
        if t_override > red.t:
            raise ValidationError(f"requested T={t_override} exceeds the matrix rank {red.t}")
        t = t_override
    report = condition_metrics(aff, t)
    volume, vmode = None, None
    if t == red.t:
        vmode = "exhaustive" if math.comb(aff.n, t) <= EXHAUSTIVE_LIMIT else "monte_carlo_subsets"
        volume = zonotope_volume(aff.entries, t, 1.0, vmode)
    doc = report.to_json()
    doc.update({
        "K": aff.k, "N": aff.n, "rank": red.t, "T": t,
        "zonotope_volume_unit_cube": volume, "volume_mode": vmode,
        "c4_ok": report.c4_metric < 1,
    })
    return doc


def _print_table(rows, cols, stream=None):
    stream = stream or sys.stdout
    cells = [[str(r[c]) for c in cols] for r in rows]
    widths = [max([len(c)] + [len(x[i]) for x in cells]) for i, c in enumerate(cols)]
    print("  ".join(c.ljust(w) for c, w in zip(cols, widths)), file=stream)
    for x in cells:
        print("  ".join(v.ljust(w) for v, w in zip(x, widths)), file=stream)


def _floats(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="idpoisson", description="Identification over affine Poisson channels.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run a T sweep and write results.csv + manifest.json")
    s.add_argument("--config", required=True, help="experiment JSON (or a manifest to replay)")
    s.add_argument("--out", help="output directory (overrides output_dir)")
    s.add_argument("--seed", type=int, help="override root_seed")
    s.add_argument("--jobs", type=int, default=1, help="sweep points run concurrently")

    b = sub.add_parser("bounds", help="evaluate capacity bounds over a kappa x l grid")
    b.add_argument("--kappa", type=_floats, default=[1.0], help="comma-separated kappa values")
    b.add_argument("--l", type=_floats, default=[0.0], help="comma-separated l values")
    b.add_argument("--out", help="directory for bounds.csv (stdout if omitted)")

    v = sub.add_parser("verify", help="run the oracle battery")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--out", help="directory for oracle_reports.json")
    v.add_argument("--inject-fault", choices=FAULTS, help=argparse.SUPPRESS)

    a = sub.add_parser("analyze", help="report structural conditions of a matrix file")
    a.add_argument("matrix", help="matrix JSON file")
    a.add_argument("--t", type=int, dest="t_override", help="override T (must not exceed rank)")
    a.add_argument("--out", help="directory for analysis.json")
    return p


def _cmd_simulate(args) -> int:
    try:
        doc = json.loads(Path(args.config).read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config is not valid JSON: {exc}") from exc
    cfg = ExperimentConfig.from_json(doc)
    if args.seed is not None:
        cfg.root_seed = args.seed
    out = args.out or cfg.output_dir
    if not out:
        raise ValidationError("no output directory: pass --out or set output_dir")
    jobs = check_positive_int(args.jobs, "jobs")
    out = run_simulate(cfg, out, jobs)
    print(f"wrote {out / 'results.csv'} and {out / 'manifest.json'}")
    return EXIT_OK


def _cmd_bounds(args) -> int:
    if args.out:
        out = _prepare_dir(args.out)
        path = write_bounds_csv(args.kappa, args.l, out / "bounds.csv")
        print(f"wrote {path}")
    else:
        rows = [cb.to_row() for cb in bounds_grid(args.kappa, args.l)]
        sys.stdout.write(_csv_text(BOUNDS_CSV_FIELDS, rows))
    return EXIT_OK


def _cmd_verify(args) -> int:
    reports = run_battery(args.seed, args.inject_fault)
    docs = [r.to_json() for r in reports]
    if args.out:
        (_prepare_dir(args.out) / "oracle_reports.json").write_text(_json_text(docs))
    table = [{"name": d["name"], "closed_form": fmt(d["closed_form_value"]),
              "oracle": fmt(d["oracle_value"]), "tol": fmt(d["tolerance"]),
              "result": "PASS" if d["pass"] else "FAIL"} for d in docs]
    _print_table(table, ["name", "closed_form", "oracle", "tol", "result"])
    return EXIT_OK if all(d["pass"] for d in docs) else EXIT_RUNTIME


def _cmd_analyze(args) -> int:
    doc = run_analyze(args.matrix, args.t_override)
    text = _json_text(doc)
    if args.out:
        (_prepare_dir(args.out) / "analysis.json").write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


COMMANDS = {"simulate": _cmd_simulate, "bounds": _cmd_bounds, "verify": _cmd_verify,
            "analyze": _cmd_analyze}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ValidationError, TypeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except FileNotFoundError as exc:
        # a missing input file is a bad argument, not a runtime fault
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (OSError, ArithmeticError, RuntimeError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
