"""Experiment harness and command line interface.

`kernel-budget run --config cfg.json [--budget EXPR] [--out DIR]` runs one
experiment kind over a list of seeds and writes results.csv (long format,
one metric per row) plus manifest.json. `kernel-budget report --in DIR`
aggregates results.csv into aggregates.csv. Identical config and seeds
reproduce results.csv byte for byte; the timestamp lives only in the
manifest. KB_THREADS > 1 runs trials in parallel, one gram per trial,
with output ordered by (seed, kind) regardless of completion order.
"""

from __future__ import annotations

import argparse
import ast
import csv
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .errors import BudgetExhaustedError, PipelineStageError
from .instances import gen_kkmc, gen_krr, gen_mog, gen_rank
from .kkmc import (Clustering, block_clustering, cost_explicit, rank_cost_gap,
                   recover_labels)
from .krr import (classify_rows, d_eff, hard_instance_optimum, indicator_solve,
                  solve_exact)
from .mog import cluster_mog, separation_thresholds, sketch_dimension
from .oracle import QueryReport
from .rng import stream

CSV_COLUMNS = ["experiment", "seed", "n", "k", "epsilon", "metric", "value",
               "distinct_entries", "total_requests", "budget", "budget_exhausted"]

AGG_COLUMNS = ["experiment", "metric", "count", "mean", "stderr", "min", "max"]

KINDS = {
    "krr-closed-form": {"n", "J", "epsilon"},
    "krr-classify": {"n", "J", "epsilon"},
    "krr-indicator": {"n", "J", "epsilon", "c0", "c1"},
    "d-eff-scan": {"n", "J", "epsilon"},
    "kkmc-cost-envelope": {"n", "k", "epsilon"},
    "kkmc-recover": {"n", "k", "epsilon"},
    "rank-gap": {"n", "k"},
    "mog-pipeline": {"n", "d", "k", "epsilon", "sigma"},
    "budget-curve": {"n", "J", "epsilon", "budgets"},
}

BUDGET_VARS = {"n", "k", "J", "eps", "m", "t"}


class UsageError(ValueError):
    pass


def eval_budget_expr(expr, env: dict) -> int:
    """Evaluate a budget expression like "0.5*n*J/4" over {n,k,J,eps,m,t}."""
    if isinstance(expr, (int, float)):
        return int(expr)
    tree = ast.parse(str(expr), mode="eval")
    allowed_ops = (ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.USub, ast.UAdd)

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.Name):
            if node.id not in BUDGET_VARS:
                raise UsageError(f"unknown budget variable {node.id!r}")
            if node.id not in env or env[node.id] is None:
                raise UsageError(f"budget variable {node.id!r} has no value here")
            return float(env[node.id])
        if isinstance(node, ast.BinOp) and isinstance(node.op, allowed_ops):
            a, b = ev(node.left), ev(node.right)
            if isinstance(node.op, ast.Add):
                return a + b
            if isinstance(node.op, ast.Sub):
                return a - b
            if isinstance(node.op, ast.Mult):
                return a * b
            if isinstance(node.op, ast.Div):
                return a / b
            return a ** b
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, allowed_ops):
            v = ev(node.operand)
            return -v if isinstance(node.op, ast.USub) else v
        raise UsageError(f"unsupported syntax in budget expression {expr!r}")

    return int(math.floor(ev(tree)))


@dataclass
class ExperimentConfig:
    kind: str
    instance: dict
    trials: int = 1
    seeds: Optional[list] = None
    budget: Optional[object] = None
    out: Optional[str] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise UsageError(f"unknown experiment kind {self.kind!r}; "
                             f"choose from {sorted(KINDS)}")
        missing = KINDS[self.kind] - set(self.instance)
        if missing:
            raise UsageError(f"{self.kind} requires instance parameters {sorted(missing)}")
        if self.seeds is None:
            self.seeds = list(range(self.trials))
        self.seeds = [int(s) for s in self.seeds]

    @staticmethod
    def from_json(path) -> "ExperimentConfig":
        with open(path) as fh:
            blob = json.load(fh)
        return ExperimentConfig(
            kind=blob["kind"],
            instance=blob.get("instance", {}),
            trials=blob.get("trials", 1),
            seeds=blob.get("seeds"),
            budget=blob.get("budget"),
            out=blob.get("out"),
        )


@dataclass
class ResultRow:
    experiment: str
    seed: int
    n: int
    k: Optional[float]
    epsilon: Optional[float]
    metric: str
    value: float
    report: Optional[QueryReport] = None
    budget: Optional[int] = None

    def as_csv(self) -> list:
        rep = self.report
        return [
            self.experiment,
            self.seed,
            self.n,
            _fmt(self.k),
            _fmt(self.epsilon),
            self.metric,
            _fmt(self.value),
            rep.distinct_entries if rep else "",
            rep.total_requests if rep else "",
            self.budget if self.budget is not None else "",
            (str(rep.budget_exhausted).lower() if rep else ""),
        ]


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float) and (math.isnan(v) or math.isinf(v)):
        return str(v)
    return format(float(v), ".12g")


# ---------------------------------------------------------------------------
# experiment bodies, one per kind: (config, seed) -> [ResultRow]

def _krr_common(cfg, seed):
    p = cfg.instance
    return gen_krr(p["n"], p["J"], p["epsilon"], seed,
                   augmented=bool(p.get("augmented", False)))


def _run_krr_closed_form(cfg, seed):
    inst = _krr_common(cfg, seed)
    K = inst.gram.full()
    sol = solve_exact(K, inst.z, inst.lam)
    diff = float(np.max(np.abs(sol.alpha - hard_instance_optimum(inst))))
    return [ResultRow("krr-closed-form", seed, inst.n, inst.k, inst.eps,
                      "max_abs_diff", diff, inst.gram.ledger_report())]


def _run_krr_classify(cfg, seed):
    inst = _krr_common(cfg, seed)
    K = inst.gram.full()
    sol = solve_exact(K, inst.z, inst.lam)
    labels = classify_rows(sol.alpha[:inst.n], inst.n, inst.k, inst.eps)
    acc = float(np.mean(labels == inst.classes))
    return [ResultRow("krr-classify", seed, inst.n, inst.k, inst.eps,
                      "accuracy", acc, inst.gram.ledger_report())]


def _run_krr_indicator(cfg, seed):
    p = cfg.instance
    inst = _krr_common(cfg, seed)
    c0, c1 = float(p["c0"]), float(p["c1"])
    G = inst.gram.full()
    fast = indicator_solve(G, inst.z, inst.lam, c0, c1)
    K = c0 * np.ones_like(G) + (c1 - c0) * G
    direct = solve_exact(K, inst.z, inst.lam)
    diff = float(np.max(np.abs(fast.alpha - direct.alpha)))
    return [ResultRow("krr-indicator", seed, inst.n, inst.k, inst.eps,
                      "max_abs_diff", diff, inst.gram.ledger_report())]


def _run_d_eff_scan(cfg, seed):
    p = cfg.instance
    inst = _krr_common(cfg, seed)
    mults = p.get("lam_multipliers", [0.1, 0.5, 1.0, 2.0, 10.0])
    rows = []
    eigen = inst.counts.astype(np.float64)
    for mult in mults:
        val = d_eff(eigen, mult * inst.lam)
        rows.append(ResultRow("d-eff-scan", seed, inst.n, inst.k, inst.eps,
                              f"d_eff@{_fmt(mult)}", val, inst.gram.ledger_report()))
    return rows


def _run_kkmc_cost_envelope(cfg, seed):
    p = cfg.instance
    inst = gen_kkmc(p["n"], p["k"], p["epsilon"], seed)
    cost = cost_explicit(inst.points, block_clustering(inst))
    rep = inst.gram.ledger_report()
    return [
        ResultRow("kkmc-cost-envelope", seed, inst.n, inst.k, inst.eps,
                  "total_cost", cost.total, rep),
        ResultRow("kkmc-cost-envelope", seed, inst.n, inst.k, inst.eps,
                  "per_point_cost", cost.total / inst.n, rep),
    ]


def _run_kkmc_recover(cfg, seed):
    p = cfg.instance
    inst = gen_kkmc(p["n"], p["k"], p["epsilon"], seed)
    clustering = block_clustering(inst)
    labeled = {i: int(inst.block[i]) for i in range(inst.n // 2)}
    kwargs = {}
    if "sample_factor" in p:
        kwargs["sample_factor"] = float(p["sample_factor"])
    found = recover_labels(inst.gram, clustering, labeled, inst.eps, seed, **kwargs)
    unlabeled = inst.n - inst.n // 2
    correct = sum(1 for i, b in found.items() if b == inst.block[i])
    rep = inst.gram.ledger_report()
    return [
        ResultRow("kkmc-recover", seed, inst.n, inst.k, inst.eps,
                  "recovery_rate", correct / unlabeled, rep),
        ResultRow("kkmc-recover", seed, inst.n, inst.k, inst.eps,
                  "queries", rep.distinct_entries, rep),
    ]


def _run_rank_gap(cfg, seed):
    p = cfg.instance
    inst = gen_rank(p["n"], p["k"], seed)
    gap = rank_cost_gap(inst)
    rep = inst.gram.ledger_report()
    return [
        ResultRow("rank-gap", seed, inst.n, float(inst.k), None, "gap", gap, rep),
        ResultRow("rank-gap", seed, inst.n, float(inst.k), None, "planted",
                  float(inst.planted), rep),
    ]


def _run_mog_pipeline(cfg, seed):
    p = cfg.instance
    n, d, k = p["n"], p["d"], p["k"]
    eps, sigma = p["epsilon"], p["sigma"]
    c_sketch = float(p.get("C_sketch", p.get("c_sketch", 8.0)))
    delta_exponent = int(p.get("delta_exponent", 3))
    sep = p.get("separation", "auto")
    if sep == "auto":
        m_planned = sketch_dimension(n, k, eps, c_sketch, delta_exponent)
        sep = separation_thresholds(n, d, k, eps, sigma, m_planned, delta_exponent)["max"]
    inst = gen_mog(n, d, k, sigma, float(sep), seed)
    result = cluster_mog(inst.gram, k=k, eps=eps, sigma=sigma, d=d,
                         bootstrap_labels=inst.labels, c_sketch=c_sketch,
                         delta_exponent=delta_exponent)
    cost = cost_explicit(inst.points, result.clustering).total
    truth_cost = cost_explicit(inst.points, Clustering(inst.labels.copy())).total
    result.cost = cost
    ratio = cost / truth_cost if truth_cost > 0 else 1.0
    rep = result.report
    closed_form = result.t * (result.t + 1) // 2 + 2 * result.m * (n - result.t)
    return [
        ResultRow("mog-pipeline", seed, n, float(k), eps, "cost_ratio", ratio, rep),
        ResultRow("mog-pipeline", seed, n, float(k), eps, "success",
                  float(ratio <= 1.0 + 8.0 * eps), rep),
        ResultRow("mog-pipeline", seed, n, float(k), eps, "distinct_entries",
                  float(rep.distinct_entries), rep),
        ResultRow("mog-pipeline", seed, n, float(k), eps, "query_count_matches",
                  float(rep.distinct_entries == closed_form), rep),
    ]


def _probe_classify(inst, probes_per_point: int, budget: int, seed: int) -> float:
    """Classify rows by collision sampling under a hard distinct-entry budget."""
    from .instances import CLASS_S1, CLASS_S2

    inst.gram.ledger.budget = budget
    rng = stream(seed, "budget-probe")
    n, J = inst.n, inst.J
    threshold = 1.5 * probes_per_point / J
    predicted = np.full(n, CLASS_S1)
    try:
        for i in range(n):
            hits = 0
            partners = rng.integers(0, n - 1, size=probes_per_point)
            partners = partners + (partners >= i)
            for r in partners:
                if inst.gram.query(i, int(r)) == 1.0:
                    hits += 1
            if hits > threshold:
                predicted[i] = CLASS_S2
    except BudgetExhaustedError:
        pass
    return float(np.mean(predicted == inst.classes))


def _run_budget_curve(cfg, seed):
    p = cfg.instance
    rows = []
    for expr in p["budgets"]:
        inst = _krr_common(cfg, seed)
        env = {"n": inst.n, "k": inst.k, "J": inst.J, "eps": inst.eps}
        budget = eval_budget_expr(expr, env)
        q = max(1, budget // inst.n)
        acc = _probe_classify(inst, q, budget, seed)
        rows.append(ResultRow("budget-curve", seed, inst.n, inst.k, inst.eps,
                              f"accuracy@{expr}", acc, inst.gram.ledger_report(),
                              budget=budget))
    return rows


_RUNNERS = {
    "krr-closed-form": _run_krr_closed_form,
    "krr-classify": _run_krr_classify,
    "krr-indicator": _run_krr_indicator,
    "d-eff-scan": _run_d_eff_scan,
    "kkmc-cost-envelope": _run_kkmc_cost_envelope,
    "kkmc-recover": _run_kkmc_recover,
    "rank-gap": _run_rank_gap,
    "mog-pipeline": _run_mog_pipeline,
    "budget-curve": _run_budget_curve,
}


def run(config: ExperimentConfig):
    """Execute all trials; returns (rows, errors) ordered by (seed, kind)."""
    runner = _RUNNERS[config.kind]
    errors = []

    def one(seed):
        try:
            return seed, runner(config, seed), None
        except (PipelineStageError, BudgetExhaustedError, ValueError, RuntimeError) as e:
            return seed, [ResultRow(config.kind, seed,
                                    config.instance.get("n", 0), None, None,
                                    "error", float("nan"))], f"seed {seed}: {e}"

    threads = int(os.environ.get("KB_THREADS", "1"))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(one, config.seeds))
    else:
        outcomes = [one(s) for s in config.seeds]
    outcomes.sort(key=lambda item: (item[0],))
    rows = []
    for _, trial_rows, err in outcomes:
        rows.extend(trial_rows)
        if err:
            errors.append(err)
    return rows, errors


def write_results(rows, out_dir, config: ExperimentConfig, errors):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "results.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for row in rows:
            writer.writerow(row.as_csv())
    manifest = {
        "config": {
            "kind": config.kind,
            "instance": config.instance,
            "trials": config.trials,
            "seeds": config.seeds,
            "budget": config.budget,
        },
        "versions": {"kernel-budget": __version__, "numpy": np.__version__},
        "errors": errors,
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2)
    return out / "results.csv"


def report(rows):
    """Aggregate rows into per-(experiment, metric) summary records."""
    if not rows:
        raise UsageError("no rows to aggregate")
    groups = {}
    for row in rows:
        groups.setdefault((row.experiment, row.metric), []).append(row.value)
    records = []
    for (exp, metric), values in sorted(groups.items()):
        arr = np.asarray([v for v in values if not math.isnan(v)], dtype=np.float64)
        if arr.size == 0:
            records.append([exp, metric, 0, "nan", "nan", "nan", "nan"])
            continue
        stderr = float(arr.std(ddof=1) / math.sqrt(arr.size)) if arr.size > 1 else 0.0
        records.append([exp, metric, int(arr.size), _fmt(arr.mean()), _fmt(stderr),
                        _fmt(arr.min()), _fmt(arr.max())])
    return records


def _rows_from_csv(path):
    rows = []
    with open(path) as fh:
        reader = csv.DictReader(fh)
        for rec in reader:
            rows.append(ResultRow(
                experiment=rec["experiment"],
                seed=int(rec["seed"]),
                n=int(rec["n"]),
                k=float(rec["k"]) if rec["k"] else None,
                epsilon=float(rec["epsilon"]) if rec["epsilon"] else None,
                metric=rec["metric"],
                value=float(rec["value"]),
            ))
    return rows


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="kernel-budget",
        description="Run query-metered kernel experiments and aggregate results.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("--config", required=True, help="path to a JSON config")
    p_run.add_argument("--budget", default=None,
                       help="override budget expression over {n,k,J,eps,m,t}")
    p_run.add_argument("--out", default=None, help="output directory")

    p_rep = sub.add_parser("report", help="aggregate a results directory")
    p_rep.add_argument("--in", dest="in_dir", required=True,
                       help="directory containing results.csv")

    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            config = ExperimentConfig.from_json(args.config)
            if args.budget is not None:
                config.budget = args.budget
            out_dir = args.out or config.out or "."
            rows, errors = run(config)
            path = write_results(rows, out_dir, config, errors)
            print(f"wrote {path} ({len(rows)} rows)")
            if errors:
                for err in errors:
                    print(f"error: {err}", file=sys.stderr)
                return 2
            return 0
        rows = _rows_from_csv(Path(args.in_dir) / "results.csv")
        records = report(rows)
        out_path = Path(args.in_dir) / "aggregates.csv"
        with open(out_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(AGG_COLUMNS)
            writer.writerows(records)
        print(f"wrote {out_path} ({len(records)} aggregates)")
        return 0
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
