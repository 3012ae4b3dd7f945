"""Command-line entry point: solve, compare, cluster and route subcommands
driven by JSON config files, emitting plan/trace CSVs and report JSON."""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import apps
from .core import NNZ_THRESHOLD, OTProblem, Regularizer, ValidationError, validate_problem
from .objectives import dual_objective, semidual_objective
from .recovery import plan_stats
from .solvers import SolverConfig, solve

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NO_CONVERGENCE = 2


class ConfigError(Exception):
    def __init__(self, field: str, message: str):
        super().__init__(f"config error in {field!r}: {message}")
        self.field = field


def _load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ConfigError(path, "file not found")
    except json.JSONDecodeError as e:
        raise ConfigError(path, f"invalid JSON: {e}")


_KIND_ALIASES = {
    "none": "none",
    "negentropy": "negentropy",
    "entropy": "negentropy",
    "quadratic": "quadratic",
    "sparsity": "sparsity",
    "sparsity_constrained": "sparsity",
}


def _build_regularizer(cfg: dict) -> Regularizer:
    kind = _KIND_ALIASES.get(str(cfg.get("kind", "")).lower())
    if kind is None:
        raise ConfigError("regularizer.kind", f"unknown kind {cfg.get('kind')!r}")
    gamma = float(cfg.get("gamma", 1.0))
    if kind == "sparsity":
        if "k" not in cfg:
            raise ConfigError("regularizer.k", "required for sparsity kind")
        return Regularizer.sparsity(gamma=gamma, k=int(cfg["k"]))
    if kind == "none":
        return Regularizer.none()
    return Regularizer(kind, gamma=gamma)


def _build_problem(cfg: dict, reg: Regularizer) -> OTProblem:
    prob = cfg.get("problem")
    if not isinstance(prob, dict):
        raise ConfigError("problem", "missing or not an object")
    cost = prob.get("cost")
    a = b = None
    if isinstance(cost, list):
        C = np.asarray(cost, dtype=float)
    elif isinstance(cost, dict):
        gen = cost.get("generator")
        params = {key: val for key, val in cost.items() if key != "generator"}
        if gen == "gaussian_1d":
            a, b, C = apps.gen_1d_gaussian_pair(**params)
        elif gen == "bigaussian_1d":
            a, b, C = apps.gen_1d_bigaussian_target(**params)
        elif gen == "gaussian_2d":
            params.setdefault("means", ([0.0, 0.0], [4.0, 4.0]))
            params.setdefault("covs", ([[1.0, 0.0], [0.0, 1.0]],
                                       [[1.0, -0.8], [-0.8, 1.0]]))
            _, _, C = apps.gen_2d_gaussian_clouds(**params)
        else:
            raise ConfigError("problem.cost.generator", f"unknown generator {gen!r}")
    else:
        raise ConfigError("problem.cost", "must be a matrix or a generator spec")
    m, n = C.shape
    marginals = prob.get("marginals", "uniform")
    if marginals == "uniform":
        if a is None:
            a = np.full(m, 1.0 / m)
            b = np.full(n, 1.0 / n)
    elif isinstance(marginals, dict):
        a = np.asarray(marginals["a"], dtype=float)
        b = np.asarray(marginals["b"], dtype=float)
    else:
        raise ConfigError("problem.marginals", "must be 'uniform' or {a, b}")
    try:
        return validate_problem(OTProblem(a, b, C, reg))
    except ValidationError as e:
        raise ConfigError("problem", str(e))


def _build_solver(cfg: dict) -> SolverConfig:
    cfg = cfg or {}
    try:
        return SolverConfig(
            method=cfg.get("method", "lbfgs"),
            max_iter=int(cfg.get("max_iter", 500)),
            tol=float(cfg.get("tol", 1e-6)),
            lbfgs_history=int(cfg.get("history", 10)),
            adam_lr=float(cfg.get("lr", 1e-2)),
            seed=int(cfg.get("seed", 0)),
        )
    except ValueError as e:
        raise ConfigError("solver", str(e))


def write_plan_csv(path: Path, T: np.ndarray) -> None:
    m, n = T.shape
    rows, cols = np.nonzero(T > NNZ_THRESHOLD)
    with open(path, "w") as fh:
        fh.write(f"# {m},{n},{rows.size}\n")
        fh.write("i,j,value\n")
        for i, j in zip(rows, cols):
            fh.write(f"{i},{j},{float(T[i, j])!r}\n")


def read_plan_csv(path: Path) -> np.ndarray:
    with open(path) as fh:
        header = fh.readline().strip().lstrip("# ")
        m, n, _ = (int(x) for x in header.split(","))
        fh.readline()  # column header
        T = np.zeros((m, n))
        for line in fh:
            i, j, v = line.strip().split(",")
            T[int(i), int(j)] = float(v)
    return T


def write_trace_csv(path: Path, trace) -> None:
    with open(path, "w") as fh:
        fh.write("iter,objective,grad_norm,wall_ms\n")
        for it, obj, gn, ms in trace:
            fh.write(f"{it},{float(obj)!r},{float(gn)!r},{ms:.3f}\n")


def _output_dir(cfg: dict) -> Path:
    out = Path(cfg.get("output_dir", "."))
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_solve(config_path: str) -> int:
    cfg = _load_config(config_path)
    reg = _build_regularizer(cfg.get("regularizer", {}))
    p = _build_problem(cfg, reg)
    formulation = cfg.get("formulation", "semidual")
    if formulation not in ("dual", "semidual"):
        raise ConfigError("formulation", f"must be dual or semidual, got {formulation!r}")
    solver_cfg = _build_solver(cfg.get("solver"))
    try:
        pot, plan, report = solve(p, formulation, solver_cfg)
    except ValueError as e:
        raise ConfigError("formulation", str(e))
    out = _output_dir(cfg)
    stats = plan_stats(p, plan)
    report_json = {
        f"objective_{formulation}": report.objective,
        "primal_value": stats["primal_value"],
        "grad_norm": report.grad_norm,
        "iterations": report.iterations,
        "converged": report.converged,
        "ties_detected": report.ties_detected,
        "max_col_nnz": stats["max_col_nnz"],
        "marginal_err_row": plan.row_marginal_err,
        "marginal_err_col": plan.col_marginal_err,
    }
    write_plan_csv(out / "plan.csv", plan.entries)
    write_trace_csv(out / "trace.csv", report.trace)
    with open(out / "report.json", "w") as fh:
        json.dump(report_json, fh, indent=2)
        fh.write("\n")
    print(f"objective ({formulation}): {report.objective:.10g}")
    print(f"marginal errors: row {plan.row_marginal_err:.3g}, "
          f"col {plan.col_marginal_err:.3g}")
    return EXIT_OK if report.converged else EXIT_NO_CONVERGENCE


def cmd_compare(config_path: str) -> int:
    cfg = _load_config(config_path)
    regs = cfg.get("regularizers")
    if not isinstance(regs, list) or not regs:
        raise ConfigError("regularizers", "must be a nonempty list")
    formulations = cfg.get("formulations", ["semidual"])
    solvers = cfg.get("solvers", [{"method": "lbfgs"}])
    out = _output_dir(cfg)
    rows = []
    results = {}
    ok = True
    for reg_cfg in regs:
        reg = _build_regularizer(reg_cfg)
        p = _build_problem(cfg, reg)
        for solver_cfg_raw in solvers:
            solver_cfg = _build_solver(solver_cfg_raw)
            for formulation in formulations:
                if reg.kind == "none" and formulation == "dual":
                    continue
                t0 = time.perf_counter()
                _, plan, report = solve(p, formulation, solver_cfg)
                wall_ms = (time.perf_counter() - t0) * 1e3
                ok = ok and report.converged
                key = (json.dumps(reg_cfg, sort_keys=True), solver_cfg.method)
                results.setdefault(key, {})[formulation] = report.objective
                rows.append({
                    "regularizer": reg_cfg,
                    "solver": solver_cfg.method,
                    "formulation": formulation,
                    "objective": report.objective,
                    "iterations": report.iterations,
                    "wall_ms": wall_ms,
                    "max_col_nnz": int(plan.col_nnz.max()),
                    "key": key,
                })
    for row in rows:
        pair = results[row.pop("key")]
        if "dual" in pair and "semidual" in pair:
            row["duality_gap"] = abs(pair["dual"] - pair["semidual"])
        else:
            row["duality_gap"] = None
    with open(out / "comparison.json", "w") as fh:
        json.dump(rows, fh, indent=2)
        fh.write("\n")
    hdr = f"{'regularizer':<28}{'form':<10}{'solver':<8}{'objective':>14}{'iters':>7}{'nnz':>5}{'gap':>10}"
    print(hdr)
    for row in rows:
        gap = f"{row['duality_gap']:.2e}" if row["duality_gap"] is not None else "-"
        print(f"{json.dumps(row['regularizer']):<28}{row['formulation']:<10}"
              f"{row['solver']:<8}{row['objective']:>14.6g}{row['iterations']:>7}"
              f"{row['max_col_nnz']:>5}{gap:>10}")
    return EXIT_OK if ok else EXIT_NO_CONVERGENCE


def _blob_points(cfg: dict) -> np.ndarray:
    pts = cfg.get("points")
    if isinstance(pts, list):
        return np.asarray(pts, dtype=float)
    if isinstance(pts, dict) and "blobs" in pts:
        rng = np.random.default_rng(int(pts.get("seed", 0)))
        chunks = []
        for blob in pts["blobs"]:
            chunks.append(rng.normal(
                np.asarray(blob["center"], dtype=float),
                float(blob.get("std", 0.5)),
                size=(int(blob["count"]), len(blob["center"])),
            ))
        return np.concatenate(chunks, axis=0)
    raise ConfigError("points", "must be an array or a blob spec")


def cmd_cluster(config_path: str) -> int:
    cfg = _load_config(config_path)
    X = _blob_points(cfg)
    ccfg_raw = cfg.get("cluster")
    if not isinstance(ccfg_raw, dict):
        raise ConfigError("cluster", "missing or not an object")
    method = ccfg_raw.get("method", "ot")
    reg = _build_regularizer(ccfg_raw.get("regularizer", {"kind": "quadratic"}))
    try:
        ccfg = apps.ClusterConfig(
            n_clusters=int(ccfg_raw.get("n_clusters", 2)),
            reg=reg,
            em_steps=int(ccfg_raw.get("em_steps", 50)),
            solver=_build_solver(ccfg_raw.get("solver")),
            seed=int(ccfg_raw.get("seed", 0)),
            method=method,
        )
    except ValueError as e:
        raise ConfigError("cluster", str(e))
    centers, T, metrics = apps.balanced_cluster(X, ccfg)
    out = _output_dir(cfg)
    with open(out / "metrics.json", "w") as fh:
        json.dump(metrics, fh, indent=2)
        fh.write("\n")
    hard = np.argmax(T, axis=1)
    with open(out / "assignment.csv", "w") as fh:
        fh.write("point,cluster\n")
        for i, c in enumerate(hard):
            fh.write(f"{i},{c}\n")
    print(f"KL to uniform: {metrics['kl_to_uniform']:.6g}; "
          f"avg cost: {metrics['avg_cost']:.6g}")
    return EXIT_OK


def cmd_route(config_path: str) -> int:
    cfg = _load_config(config_path)
    aff = cfg.get("affinity")
    if isinstance(aff, list):
        A = np.asarray(aff, dtype=float)
    elif isinstance(aff, dict) and "random" in aff:
        spec = aff["random"]
        rng = np.random.default_rng(int(spec.get("seed", 0)))
        A = rng.normal(0.0, float(spec.get("scale", 1.0)),
                       size=(int(spec["m"]), int(spec["n"])))
    else:
        raise ConfigError("affinity", "must be a matrix or {'random': {...}}")
    rcfg_raw = cfg.get("router")
    if not isinstance(rcfg_raw, dict):
        raise ConfigError("router", "missing or not an object")
    try:
        rcfg = apps.RouterConfig(
            num_experts=int(rcfg_raw.get("num_experts", A.shape[1])),
            buffer_capacity=int(rcfg_raw["buffer_capacity"]),
            gamma=float(rcfg_raw.get("gamma", 1.0)),
            adam_steps=int(rcfg_raw.get("adam_steps", 50)),
            adam_lr=float(rcfg_raw.get("adam_lr", 1e-2)),
        )
    except (KeyError, ValueError) as e:
        raise ConfigError("router", str(e))
    try:
        plan, report = apps.moe_gating(A, rcfg)
    except ValueError as e:
        raise ConfigError("router", str(e))
    out = _output_dir(cfg)
    write_plan_csv(out / "gating.csv", plan.entries)
    metrics = {
        "max_col_nnz": int(plan.col_nnz.max()),
        "row_mass_err": plan.row_marginal_err,
        "col_mass_err": plan.col_marginal_err,
        "ties_detected": report.ties_detected,
        "grad_norm": report.grad_norm,
    }
    with open(out / "metrics.json", "w") as fh:
        json.dump(metrics, fh, indent=2)
        fh.write("\n")
    print(f"max tokens per expert: {metrics['max_col_nnz']}; "
          f"row mass error: {metrics['row_mass_err']:.3g}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="sparseot",
        description="Optimal transport with columnwise cardinality constraints",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("solve", "compare", "cluster", "route"):
        sp = sub.add_parser(name)
        sp.add_argument("config", help="path to a JSON config file")
    args = parser.parse_args(argv)
    handler = {
        "solve": cmd_solve,
        "compare": cmd_compare,
        "cluster": cmd_cluster,
        "route": cmd_route,
    }[args.command]
    try:
        return handler(args.config)
    except ConfigError as e:
        print(str(e), file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
