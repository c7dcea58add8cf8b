"""``specdmd`` batch front-end.

Each subcommand reads a JSON config (flat keys) and/or flags, with flags
taking precedence, and writes its artifacts into ``--output``::

    specdmd synth      --config synth.json --output out/
    specdmd preprocess --input out/synth --output pre/
    specdmd fit        --input pre/shifted --rank 25 --train-days 40 --output fit/
    specdmd forecast   --input pre/shifted --model fit/model.json --forecast-days 20 --output fc/
    specdmd rank-scan  --input pre/shifted --max-rank 50 --train-days 40 --output scan/
    specdmd bopdmd     --input pre/shifted --rank 25 --K 100 --p 216 --seed 1 --output bop/

Failures print one JSON record to stderr and exit non-zero.  A solver that
does not converge is not a failure: the outputs record ``converged: false``.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, field, fields

import numpy as np

from . import bopdmd, gridstore, metrics, optdmd, preprocess, synth
from .errors import ValidationError
from .exactdmd import fit_exact
from .gridstore import GridMeta, SnapshotSet, TimeGrid
from .model import DmdModel, evaluate, relative_error
from .varpro import EigConstraint, VarProOptions

log = logging.getLogger("specdmd")

COMMANDS = ("preprocess", "fit", "rank-scan", "forecast", "bopdmd", "synth")
DEFAULT_RANK = {"CONC": 25, "TEND": 50}
VARPRO_KEYS = tuple(f.name for f in fields(VarProOptions))


@dataclass
class RunConfig:
    command: str
    input: str | None = None
    output: str | None = None
    rank: int | None = None
    constraint: str = "lhp"
    train_days: int | None = None
    forecast_days: int | None = None
    samples_per_day: int | None = None
    K: int = 100
    p: int = 216
    seed: int = 0
    varpro: dict = field(default_factory=dict)
    model: str | None = None
    method: str = "optdmd"
    lat_index: int | None = None
    lev_index: int | None = None
    ranks: list | None = None
    max_rank: int | None = None
    flat_tol: float = optdmd.DEFAULT_FLAT_TOL
    workers: int = 1
    nbins: int = 20
    trim: list = field(default_factory=lambda: [10.0, 90.0])
    daytime: str | None = None
    daytime_eps: float = preprocess.DEFAULT_EPS
    daytime_window: list | None = None
    generator: str = "mixture"
    synth: dict = field(default_factory=dict)

    @classmethod
    def from_mapping(cls, d):
        d = dict(d)
        known = {f.name for f in fields(cls)}
        varpro = dict(d.pop("varpro", {}) or {})
        for key in VARPRO_KEYS:
            if key in d:
                varpro[key] = d.pop(key)
        extra = {k: d.pop(k) for k in list(d) if k not in known}
        cfg = cls(**d, varpro=varpro)
        # unrecognised flat keys feed the synth generator
        cfg.synth = {**extra, **cfg.synth}
        return cfg

    def validate(self):
        """Every violated field, as ``(field, message)`` pairs."""
        bad = []
        if self.command not in COMMANDS:
            bad.append(("command", f"must be one of {COMMANDS}"))
        if self.output is None:
            bad.append(("output", "required"))
        if self.command != "synth" and self.input is None:
            bad.append(("input", "required"))
        if self.rank is not None and (not isinstance(self.rank, int) or self.rank < 1):
            bad.append(("rank", "must be a positive integer"))
        try:
            EigConstraint.parse(self.constraint)
        except ValueError:
            bad.append(("constraint", "must be one of none, lhp, imag"))
        for name in ("train_days", "forecast_days", "samples_per_day", "max_rank"):
            v = getattr(self, name)
            if v is not None and (not isinstance(v, int) or v < 1):
                bad.append((name, "must be a positive integer"))
        for name in ("K", "p", "workers", "nbins"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 1:
                bad.append((name, "must be a positive integer"))
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2 ** 64:
            bad.append(("seed", "must be an unsigned 64-bit integer"))
        if self.method not in ("optdmd", "exact"):
            bad.append(("method", "must be optdmd or exact"))
        if self.command == "forecast" and self.model is None:
            bad.append(("model", "forecast needs a fitted model"))
        if self.daytime not in (None, "threshold", "window"):
            bad.append(("daytime", "must be threshold or window"))
        if self.daytime == "window" and (self.daytime_window is None
                                         or len(self.daytime_window) != 2):
            bad.append(("daytime_window", "window mode needs [start, end]"))
        if self.generator not in ("mixture", "daynight"):
            bad.append(("generator", "must be mixture or daynight"))
        unknown = sorted(set(self.varpro) - set(VARPRO_KEYS))
        if unknown:
            bad.append(("varpro", f"unknown options {unknown}"))
        else:
            try:
                VarProOptions(**self.varpro)
            except (ValidationError, TypeError) as exc:
                bad.append(("varpro", str(exc)))
        if self.ranks is not None and any(not isinstance(r, int) or r < 1 for r in self.ranks):
            bad.append(("ranks", "must be positive integers"))
        return bad


class ConfigError(ValidationError):
    def __init__(self, problems):
        self.fields = [name for name, _ in problems]
        super().__init__("; ".join(f"{n}: {m}" for n, m in problems))


def _write_json(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1)


def _write_rows(path, header, rows):
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _load(cfg):
    s = gridstore.load_snapshots(cfg.input)
    X = s.data
    if cfg.lat_index is not None or cfg.lev_index is not None:
        X = gridstore.slice(s, cfg.lat_index or 0, cfg.lev_index or 0)
    spd = cfg.samples_per_day or s.meta.samples_per_day
    return s, X, spd


def _window(X, days, spd, start=0):
    if days is None:
        return X.columns(np.arange(start, X.m))
    stop = start + days * spd
    if stop > X.m:
        raise ValidationError(f"{days} days from column {start} need {stop} columns, "
                              f"input has {X.m}")
    return X.columns(np.arange(start, stop))


def _rank(cfg, meta):
    return cfg.rank if cfg.rank is not None else DEFAULT_RANK[meta.kind]


def cmd_synth(cfg):
    p = cfg.synth
    spd = cfg.samples_per_day or int(p.get("samples_per_day", 72))
    n_days = int(p.get("n_days", 10))
    if cfg.generator == "daynight":
        if "lons" in p:
            lons = p["lons"]
        else:
            n_lons = int(p.get("n_lons", 72))
            lons = -180.0 + 360.0 * np.arange(n_lons) / n_lons
        spec = synth.DayNightSpec(lons, spd, n_days, float(p.get("day_fraction", 0.5)),
                                  p.get("profile", "half_sine"), float(p.get("amplitude", 1.0)))
        s = synth.gen_traveling_daynight(spec)
        gridstore.save_snapshots(s, os.path.join(cfg.output, "synth"))
        return {"generator": "daynight", "shape": list(s.data.shape)}
    eigs = [complex(re, im) for re, im in p.get("eigs", [[-0.1, 2 * np.pi], [-0.1, -2 * np.pi]])]
    n = int(p.get("n", 16))
    spec = synth.MixtureSpec(
        n, eigs, TimeGrid.uniform(n_days * spd, 1.0 / spd),
        mode_seed=int(p.get("mode_seed", cfg.seed)), amp_seed=int(p.get("amp_seed", cfg.seed + 1)),
        noise_seed=int(p.get("noise_seed", cfg.seed + 2)),
        noise_sigma=float(p.get("noise_sigma", 0.0)))
    X, truth = synth.gen_exponential_mixture(spec)
    meta = GridMeta(lons=-180.0 + 360.0 * np.arange(n) / n, lats=[0.0], levs=[0],
                    species=p.get("species", "SYNTH"), kind=p.get("kind", "CONC"),
                    samples_per_day=spd)
    gridstore.save_snapshots(SnapshotSet(meta, X), os.path.join(cfg.output, "synth"))
    truth.save(os.path.join(cfg.output, "truth_model.json"))
    return {"generator": "mixture", "shape": list(X.shape)}


def cmd_preprocess(cfg):
    s = gridstore.load_snapshots(cfg.input)
    spd = cfg.samples_per_day or s.meta.samples_per_day
    shifted, plan = preprocess.shift_local_time(s.data, s.meta.row_lons(), spd)
    gridstore.save_snapshots(s.with_data(shifted), os.path.join(cfg.output, "shifted"))
    _write_json(plan.to_json(), os.path.join(cfg.output, "shift_plan.json"))
    summary = {"shifted": list(shifted.shape)}
    if cfg.daytime is not None:
        kept, mask = preprocess.isolate_daytime(
            shifted, cfg.daytime, eps=cfg.daytime_eps, window=cfg.daytime_window,
            samples_per_day=spd)
        gridstore.save_snapshots(s.with_data(kept), os.path.join(cfg.output, "daytime"))
        _write_json({"keep": [bool(k) for k in mask.keep]},
                    os.path.join(cfg.output, "day_mask.json"))
        summary["daytime"] = list(kept.shape)
    return summary


def cmd_fit(cfg):
    s, X, spd = _load(cfg)
    train = _window(X, cfg.train_days, spd)
    r = _rank(cfg, s.meta)
    if cfg.method == "exact":
        model = fit_exact(train, r)
        info = None
    else:
        model, info = optdmd.fit_optdmd(train, r, cfg.constraint, VarProOptions(**cfg.varpro))
    model.save(os.path.join(cfg.output, "model.json"))
    summary = {
        "method": cfg.method,
        "rank": r,
        "constraint": model.constraint,
        "converged": bool(model.converged),
        "train_columns": train.m,
        "rel_error": relative_error(train, evaluate(model, train.time)),
    }
    if info is not None:
        summary.update(iterations=info.iterations,
                       final_relative_residual=info.final_relative_residual,
                       constraint_active_count=info.constraint_active_count)
    _write_json(summary, os.path.join(cfg.output, "fit_summary.json"))
    return summary


def cmd_forecast(cfg):
    s, X, spd = _load(cfg)
    model = DmdModel.load(cfg.model)
    t_end = model.train_span[1]
    after = np.flatnonzero(X.times > t_end + 1e-9 * max(1.0, abs(t_end)))
    if after.size == 0:
        raise ValidationError("input has no snapshots after the model's training span")
    days = cfg.forecast_days if cfg.forecast_days is not None else after.size // spd
    truth = _window(X, days, spd, start=int(after[0]))
    pred = evaluate(model, truth.time)
    report = metrics.daily_error_report(truth, pred, spd)
    report.write_csv(os.path.join(cfg.output, "forecast_report.csv"))
    summary = {"forecast_days": days, "first_column": int(after[0]),
               "model_converged": bool(model.converged),
               "mean_rel_err": [float(v) for v in report.mean_rel_err]}
    _write_json(summary, os.path.join(cfg.output, "forecast_summary.json"))
    return summary


def cmd_rank_scan(cfg):
    s, X, spd = _load(cfg)
    train = _window(X, cfg.train_days, spd)
    if cfg.ranks is not None:
        ranks = sorted(set(cfg.ranks))
    else:
        ranks = range(1, (cfg.max_rank or 50) + 1)
    curve = optdmd.rank_scan(train, ranks, cfg.constraint, VarProOptions(**cfg.varpro),
                             workers=cfg.workers)
    _write_rows(os.path.join(cfg.output, "error_curve.csv"),
                ["rank", "rel_error", "converged"],
                [[int(r), repr(float(e)), int(c)] for r, e, c in
                 zip(curve.ranks, curve.rel_errors, curve.converged_flags)])
    try:
        chosen = optdmd.select_rank(curve, cfg.flat_tol)
        result = {"rank": int(chosen), "fallback": chosen.fallback}
    except ValidationError as exc:
        result = {"rank": None, "fallback": True, "reason": str(exc)}
    _write_json(result, os.path.join(cfg.output, "selected_rank.json"))
    return result


def cmd_bopdmd(cfg):
    s, X, spd = _load(cfg)
    data = _window(X, cfg.train_days, spd)
    r = _rank(cfg, s.meta)
    spec = bopdmd.BagSpec(cfg.K, cfg.p, cfg.seed)
    opts = VarProOptions(**cfg.varpro)
    ens = bopdmd.fit_ensemble(data, r, cfg.constraint, spec, opts, workers=cfg.workers)
    stats = bopdmd.ensemble_stats(ens)
    ens.reference.save(os.path.join(cfg.output, "reference_model.json"))
    bopdmd.write_stats(stats, os.path.join(cfg.output, "ensemble_stats.json"))
    bopdmd.write_trial_table(ens, os.path.join(cfg.output, "trial_eigs.csv"))

    hist_rows, fits = [], []
    eig_abs = np.abs(np.stack([tr.model.eigs for tr in ens.converged_trials]))
    lo, hi = cfg.trim
    for j in range(r):
        try:
            kept = metrics.trimmed_sample(eig_abs[:, j], lo, hi)
            fit = metrics.gaussian_fit_histogram(kept, cfg.nbins)
        except ValidationError as exc:
            fits.append({"j": j, "skipped": str(exc)})
            continue
        centers, density = metrics.density_histogram(kept, cfg.nbins)
        hist_rows.append((j, centers, density))
        fits.append({"j": j, "n": int(kept.size), **fit.to_json()})
    metrics.write_histogram_csv(hist_rows, os.path.join(cfg.output, "eig_histogram.csv"))
    metrics.write_fit_json(fits, os.path.join(cfg.output, "eig_gaussian_fit.json"))
    summary = {"rank": r, "K": cfg.K, "p": cfg.p, "seed": cfg.seed,
               "converged_trials": stats.n_trials,
               "reference_converged": bool(ens.reference.converged)}
    _write_json(summary, os.path.join(cfg.output, "bopdmd_summary.json"))
    return summary


HANDLERS = {"synth": cmd_synth, "preprocess": cmd_preprocess, "fit": cmd_fit,
            "forecast": cmd_forecast, "rank-scan": cmd_rank_scan, "bopdmd": cmd_bopdmd}


def run(cfg: RunConfig) -> dict:
    problems = cfg.validate()
    if problems:
        raise ConfigError(problems)
    os.makedirs(cfg.output, exist_ok=True)
    return HANDLERS[cfg.command](cfg)


def build_parser():
    ap = argparse.ArgumentParser(prog="specdmd", description=__doc__.split("\n")[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="JSON file with flat RunConfig keys")
    ap.add_argument("--input")
    ap.add_argument("--output")
    ap.add_argument("--rank", type=int)
    ap.add_argument("--constraint", choices=("none", "lhp", "imag"))
    ap.add_argument("--train-days", dest="train_days", type=int)
    ap.add_argument("--forecast-days", dest="forecast_days", type=int)
    ap.add_argument("--samples-per-day", dest="samples_per_day", type=int)
    ap.add_argument("--K", type=int)
    ap.add_argument("--p", type=int)
    ap.add_argument("--seed", type=int)
    ap.add_argument("--model")
    ap.add_argument("--method", choices=("optdmd", "exact"))
    ap.add_argument("--lat-index", dest="lat_index", type=int)
    ap.add_argument("--lev-index", dest="lev_index", type=int)
    ap.add_argument("--max-rank", dest="max_rank", type=int)
    ap.add_argument("--workers", type=int)
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def config_from_args(argv=None) -> RunConfig:
    args = build_parser().parse_args(argv)
    d = {}
    if args.config:
        with open(args.config) as fh:
            d.update(json.load(fh))
    for k, v in vars(args).items():
        if k in ("config", "verbose") or v is None:
            continue
        d[k] = v
    d["command"] = args.command
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return RunConfig.from_mapping(d)


def main(argv=None) -> int:
    try:
        cfg = config_from_args(argv)
        summary = run(cfg)
    except ConfigError as exc:
        print(json.dumps({"error": "config", "message": str(exc), "fields": exc.fields}),
              file=sys.stderr)
        return 2
    except (ValidationError, OSError, ValueError, TypeError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    print(json.dumps(summary))
    return 0


if __name__ == "__main__":
    sys.exit(main())
