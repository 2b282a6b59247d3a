"""Command-line entry point: ``bnpma analyze | simulate | score``."""
import argparse
import json
import logging
import math
import os
import re
import sys
from pathlib import Path

import numpy as np

from . import io
from .config import ConfigError, load_config, parse_selector
from .gibbs import run_chain
from .model import NODES, BNPMAModel
from .polya_gamma import BACKEND
from .posterior import (NoMarkerPairs, covariate_effect, effective_sample_size,
                        marker_pairs, reported_effects)
from .simulate import generate, score_recovery

log = logging.getLogger("bnpma")

OUTPUTS = ("chain_medians.csv", "clusters.csv", "diagnostics.json", "forest.csv",
           "effects.csv", "partition.csv")


class UsageError(Exception):
    pass


def _setup_logging():
    level = os.environ.get("BNPMA_LOG", "error").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(level=levels.get(level, logging.ERROR), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def _slug(text):
    return re.sub(r"[^A-Za-z0-9]+", "_", text).strip("_").lower() or "all"


def _grid(model, n=501):
    finite = [c.upper for c in model.cohorts if math.isfinite(c.upper)]
    top = max(2.0 * max(finite, default=1.0), model.f0.quantile(0.99))
    return np.linspace(0.0, top, n)


def _write_predictive(out, name, pred, grid):
    path = out / f"predictive_{name}.csv"
    if pred is None:
        io.write_table(path, ["t", "density", "survival"], [["no data", "no data", "no data"]])
        return
    io.write_table(path, ["t", "density", "survival"],
                   zip(grid, pred.density(grid), pred.survival(grid)))


def _effect_rows(summaries, model, cfg, report):
    rows = []
    if not summaries:
        return rows
    cohorts = model.cohorts
    columns = report.covariate_columns if report else list(cohorts[0].raw_covariates)
    numeric = set(report.encoded_columns) if report else set()
    for col in columns:
        values = sorted({str(c.raw_covariates[col]) for c in cohorts})
        if col in numeric and not set(values) <= {"0", "1", "0.0", "1.0"}:
            continue  # pooling by value is for categorical covariates
        for v in values:
            rows.append(covariate_effect(summaries, cohorts, {col: v}))
    for term in cfg.interactions:
        if "*" not in term:
            raise ConfigError(f"interaction {term!r} must look like col1*col2")
        a, b = (s.strip() for s in term.split("*", 1))
        va = sorted({str(c.raw_covariates[a]) for c in cohorts})
        vb = sorted({str(c.raw_covariates[b]) for c in cohorts})
        for x in va:
            for y in vb:
                rows.append(covariate_effect(summaries, cohorts, {a: x, b: y}))
    out = []
    for e in rows:
        if e.empty:
            out.append([e.label, "no data", "no data", "no data"])
        else:
            out.append([e.label, e.mean, e.lo95, e.hi95])
    return out


def analyze(data, cfg, out, baseline=None):
    cohorts, report = io.ingest(data)
    f0 = cfg.centering.build([c.median for c in cohorts])
    model = BNPMAModel(cohorts, f0, cfg.model)
    chain = run_chain(model, cfg.n_iter, cfg.burn_in, cfg.thin, cfg.seed, cfg.workers)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)

    medians = chain.medians()
    ids = [c.cohort_id for c in cohorts]
    io.write_table(out / "chain_medians.csv", ["iteration"] + ids,
                   ([int(it)] + list(row) for it, row in zip(chain.iterations, medians)))
    io.write_table(out / "clusters.csv", ["iteration", "node"] + model.study_ids,
                   ([int(it), NODES[n]] + [int(v) + 1 for v in chain.labels[k, n]]
                    for k, it in enumerate(chain.iterations) for n in range(len(NODES))))

    summaries, pbar, excluded = {}, None, []
    if len(chain):
        try:
            summaries, pbar, excluded = chain.effect_summaries()
        except NoMarkerPairs:
            log.warning("no marker pairs; forest and effects tables left empty")
    rep = reported_effects(cohorts, model.study_ids)
    forest = []
    for s, e in summaries.items():
        forest.append([s, e.mean, e.lo95, e.hi95, "bnpma"])
    for s in summaries:
        est, lo, hi = rep[s]
        forest.append([s, est, lo, hi, "reported"])
    if baseline is not None:
        for row in io.read_table(baseline):
            forest.append([row["study"], float(row["estimate"]), float(row["lo95"]),
                           float(row["hi95"]), row.get("source") or "baseline"])
    io.write_table(out / "forest.csv", ["study", "estimate", "lo95", "hi95", "source"], forest)
    io.write_table(out / "effects.csv", ["covariate", "mean", "lo", "hi"],
                   _effect_rows(summaries, model, cfg, report))

    grid = _grid(model)
    selectors = [("all", None, None), ("marker_positive", None, "positive"),
                 ("marker_negative", None, "negative")]
    selectors += [(_slug(s), parse_selector(s), None) for s in cfg.predictive]
    for name, sel, marker in selectors:
        _write_predictive(out, name, chain.predictive(sel, marker) if len(chain) else None, grid)

    if len(chain):
        part = chain.partition(0)
        io.write_table(out / "partition.csv", ["study", "cluster"], zip(model.study_ids, part))
    else:
        io.write_table(out / "partition.csv", ["study", "cluster"], [])

    widths = [(e.hi95 - e.lo95, rep[s][2] - rep[s][1]) for s, e in summaries.items()]
    diagnostics = {
        "pg_backend": BACKEND,
        "seed": cfg.seed,
        "n_iter": cfg.n_iter, "burn_in": cfg.burn_in, "thin": cfg.thin, "kept": len(chain),
        "centering": {"family": f0.family, "rate": f0.rate, "mu": f0.mu, "sigma": f0.sigma},
        "nodes": {name: vars(d) for name, d in chain.diagnostics.items()},
        "median_unbounded_cell_draws": int(chain.median_flags.sum()) if len(chain) else 0,
        "ess_medians": {cid: effective_sample_size(medians[:, i]) for i, cid in enumerate(ids)}
        if len(chain) else {},
        "p_marker_positive_larger": pbar,
        "mean_ci_width": {"bnpma": float(np.mean([w[0] for w in widths])) if widths else None,
                          "reported": float(np.mean([w[1] for w in widths])) if widths else None},
        "excluded_studies": [{"study": s, "reason": r} for s, r in excluded],
        "covariate_center": model.center.tolist(),
        "covariate_scale": model.scale.tolist(),
        "ingestion": report.as_dict(),
    }
    io.write_json(out / "diagnostics.json", diagnostics)
    return chain, diagnostics


def simulate(cfg, out):
    cohorts, truth = generate(cfg.sim)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    io.write_cohorts(out / "sim_data.csv", cohorts, ["x1", "x2"])
    io.write_table(out / "sim_truth.csv", ["cohort", "true_median", "group"],
                   ([t.cohort_id, t.true_median, t.group] for t in truth))
    return cohorts, truth


def score(data, truth_path, chain_dir, out):
    cohorts, _ = io.ingest(data)
    truth = {r["cohort"]: float(r["true_median"]) for r in io.read_table(truth_path)}
    rows = io.read_table(Path(chain_dir) / "chain_medians.csv")
    ids = [c.cohort_id for c in cohorts]
    missing = [i for i in ids if i not in truth]
    if missing:
        raise ValueError(f"no truth for cohorts {missing[:5]}")
    draws = np.array([[float(r[i]) for i in ids] for r in rows]).reshape(len(rows), len(ids))
    studies = list(dict.fromkeys(c.study_id for c in cohorts))
    pairs = [(ip, ineg) for _, ip, ineg in marker_pairs(cohorts, studies)[0]]
    metrics = score_recovery([truth[i] for i in ids], draws, pairs)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    io.write_json(out / "score.json", metrics)
    return metrics


def build_parser():
    p = argparse.ArgumentParser(prog="bnpma", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("analyze", "run"):
        a = sub.add_parser(name, help="fit the model to a cohort CSV")
        a.add_argument("--data", required=True)
        a.add_argument("--config")
        a.add_argument("--out", required=True)
        a.add_argument("--seed", type=int)
        a.add_argument("--workers", type=int)
        a.add_argument("--baseline")
    s = sub.add_parser("simulate", help="generate a synthetic dataset")
    s.add_argument("--config")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int)
    c = sub.add_parser("score", help="score posterior medians against simulation truth")
    c.add_argument("--data", required=True)
    c.add_argument("--truth", required=True)
    c.add_argument("--chain", required=True, help="directory holding chain_medians.csv")
    c.add_argument("--out", required=True)
    return p


def _fail(kind, message, code):
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")
    return code


def main(argv=None):
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command in ("analyze", "run"):
            cfg = load_config(args.config)
            if args.seed is not None:
                cfg.seed = args.seed
            if args.workers is not None:
                cfg.workers = args.workers
            if cfg.seed is None:
                raise UsageError("a seed is required for analyze (config 'seed' or --seed)")
            cfg.validate(need_seed=True)
            analyze(args.data, cfg, args.out, args.baseline)
        elif args.command == "simulate":
            cfg = load_config(args.config)
            if args.seed is not None:
                cfg.sim.seed = args.seed
            simulate(cfg, args.out)
        else:
            print(json.dumps(score(args.data, args.truth, args.chain, args.out), sort_keys=True))
    except UsageError as exc:
        return _fail("UsageError", str(exc), 2)
    except Exception as exc:  # every module error becomes machine-readable JSON
        log.debug("failure", exc_info=True)
        return _fail(type(exc).__name__, str(exc), 1)
    return 0


if __name__ == "__main__":
    sys.exit(main())
