"""Command line harness: ``pss <subcommand> --config file.json [--out dir]``."""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path
from typing import Sequence

import numpy as np

from .config import build_model, config_hash, load_config, test_sample, validate_config
from .errors import NumericalError, PssError, SchemaError
from .greedy import (CompactSet, ReducedBasis, block_set, diagonal_set, matrix_trace, rb_offline, training_set,
                     weak_greedy)
from .interp import adaptive_interpolate, interpolate, lebesgue_constant, leja_sequence, rleja_sequence
from .legendre import LegendreSurrogate, coefficient_bound, legendre_coeffs_quadrature
from .model import StiffnessSet
from .multiindex import SurrogateWeights, box_set, build_apriori_set, product_basis
from .report import ERROR_COLUMNS, fit_rate, git_revision, write_csv, write_gnuplot
from .taylor import PolydiscSurrogate, TaylorReference, bulk_chase_run, compute_taylor, monomial_table

__all__ = ["main", "run", "threads_from_env"]

SUBCOMMANDS = ("taylor", "interp", "legendre", "rb", "greedy-synthetic")


def threads_from_env(requested: int | None = None) -> int:
    """Thread count capped by PSS_THREADS (default 1)."""
    cap = os.environ.get("PSS_THREADS")
    cap_n = max(1, int(cap)) if cap and cap.isdigit() else None
    n = requested or cap_n or 1
    return min(n, cap_n) if cap_n else n


class _Clock:
    def __init__(self, enabled: bool):
        self.enabled = enabled
        self.start = time.perf_counter()

    def ms(self):
        return round(1000 * (time.perf_counter() - self.start), 3) if self.enabled else None


def _n_list(method: dict, default_max: int) -> list[int]:
    if "n_list" in method:
        return sorted(set(method["n_list"]))
    top = method.get("n", default_max)
    grid = np.unique(np.round(np.geomspace(1, top, num=min(top, 20))).astype(int))
    return [int(v) for v in grid]


def _apriori_surrogate(stiff: StiffnessSet, spec: dict | None):
    spec = spec or {"kind": "polydisc"}
    kind = spec["kind"]
    if kind == "polydisc":
        return PolydiscSurrogate.for_model(stiff, t=stiff.r * spec.get("t_fraction", 0.5))
    if kind == "legendre":
        return LegendreSurrogate(stiff.family.norms, spec.get("eps", stiff.r / 2))
    if "params" not in spec:
        raise SchemaError(f"surrogate {kind!r} needs params")
    return SurrogateWeights(kind, tuple(spec["params"]), spec.get("b", 0.0))


def _errors(stiff: StiffnessSet, U: np.ndarray, approx: np.ndarray) -> tuple[float, float]:
    err = stiff.v_norm(U - approx)
    return float(err.max()), float(np.sqrt(np.mean(err ** 2)))


def _truth(stiff: StiffnessSet, cfg: dict, threads: int):
    block = cfg.get("test", {"kind": "sobol", "size": 256, "seed": cfg["seed"]})
    Y = test_sample(block, stiff.n_terms)
    before = stiff.truth_solves
    U = stiff.solve_many(Y, threads=threads)
    stiff.truth_solves = before  # reference solves are not charged to the method
    return Y, U, block


def _run_taylor(cfg: dict, stiff: StiffnessSet, threads: int, clock: _Clock) -> tuple[list[dict], dict]:
    method = cfg.get("method", {})
    mode = method.get("mode", "apriori")
    Y, U, block = _truth(stiff, cfg, threads)
    meta = {"test_sample": f"{block['kind']} size={block['size']} seed={block['seed']}"}
    reference = None
    if "reference_degree" in method:
        reference = TaylorReference(stiff, method["reference_degree"])
        meta["reference"] = f"total degree {method['reference_degree']}, certified tail {reference.tail:.3e}"
    rows = []
    if mode == "apriori":
        ns = _n_list(method, 50)
        surrogate = _apriori_surrogate(stiff, method.get("surrogate"))
        lam = build_apriori_set(surrogate, max(ns), max_dim=method.get("max_dim", stiff.n_terms))
        meta["surrogate_evaluations"] = lam.info["surrogate_evaluations"]
        tay = compute_taylor(stiff, lam)
        degree = max((e for nu in lam for _, e in nu.items), default=0)
        dims = max(lam.max_active_dim, 1)
        basis = product_basis(lam, monomial_table(Y[:, :dims], dims, degree))
        for step, n in enumerate(ns, 1):
            sup, l2 = _errors(stiff, U, tay.coeffs[:, :n] @ basis[:n])
            sig = reference.sigma(lam.prefix(n))[0] if reference else None
            rows.append({"step": step, "card_Lambda": n, "sigma_hat": sig, "sup_error_MC": sup, "l2_error_MC": l2,
                         "solves": n, "wall_ms": clock.ms()})
    elif mode == "bulk":
        if "theta" not in method or "eps" not in method:
            raise SchemaError("bulk mode needs theta and eps")
        steps = bulk_chase_run(stiff, method["theta"], method["eps"], reference=reference)
        for rec in steps:
            tay = compute_taylor(stiff, rec.index_set)
            sup, l2 = _errors(stiff, U, tay.evaluate(Y))
            rows.append({"step": rec.step, "card_Lambda": rec.card,
                         "sigma_hat": rec.sigma_lower if reference else None,
                         "sup_error_MC": sup, "l2_error_MC": l2, "solves": rec.solves, "wall_ms": clock.ms()})
    else:
        raise SchemaError(f"taylor does not support mode {mode!r}")
    return rows, meta


def _run_interp(cfg: dict, stiff: StiffnessSet, threads: int, clock: _Clock) -> tuple[list[dict], dict]:
    method = cfg.get("method", {})
    mode = method.get("mode", "apriori")
    ns = _n_list(method, 50)
    Y, U, block = _truth(stiff, cfg, threads)
    meta = {"test_sample": f"{block['kind']} size={block['size']} seed={block['seed']}"}
    seq_kind = method.get("seq", "leja")
    K = max(ns)
    seq = leja_sequence(K) if seq_kind == "leja" else rleja_sequence(K)
    probe = method.get("lebesgue_probe", 1000)
    rows = []
    if mode == "apriori":
        surrogate = _apriori_surrogate(stiff, method.get("surrogate"))
        lam = build_apriori_set(surrogate, K, max_dim=method.get("max_dim", stiff.n_terms))
        full = interpolate(stiff, lam, seq, threads=threads)
        solves_at = list(range(1, K + 1))
    elif mode == "adaptive":
        run_ = adaptive_interpolate(stiff, K, seq, weight_p=method.get("p", "inf"),
                                    alternate=method.get("alternate", True), threads=threads)
        full = run_.final
        solves_at = run_.solves_at
    else:
        raise SchemaError(f"interp does not support mode {mode!r}")
    for step, n in enumerate(ns, 1):
        if n > len(full.index_set):
            break
        part = full.prefix(n)
        sup, l2 = _errors(stiff, U, part.evaluate(Y))
        leb = lebesgue_constant(part.index_set, seq, max(part.index_set.max_active_dim, 1), n_probe=probe,
                                seed=cfg["seed"]) if probe else None
        rows.append({"step": step, "card_Lambda": n, "sup_error_MC": sup, "l2_error_MC": l2,
                     "lebesgue_probe": leb, "solves": solves_at[n - 1], "wall_ms": clock.ms()})
    return rows, meta


def _run_rb(cfg: dict, stiff: StiffnessSet, threads: int, clock: _Clock, out: Path, prefix: str,
            online: bool) -> tuple[list[dict], dict]:
    method = cfg.get("method", {})
    bundle = out / f"{prefix}_bundle"
    spec = method.get("train", "lattice:5" if stiff.n_terms <= 3 else "lds:1024")
    if online:
        rb = ReducedBasis.load(bundle)
    else:
        if "eps" not in method:
            raise SchemaError("rb needs eps")
        train = training_set(spec, stiff.n_terms, seed=cfg["seed"])
        rb = rb_offline(stiff, train, method["eps"], n_max=method.get("n_max"), train_spec=spec,
                        check_covering=method.get("covering_check", True))
        rb.save(bundle)
    Y, U, block = _truth(stiff, cfg, threads)
    meta = {"test_sample": f"{block['kind']} size={block['size']} seed={block['seed']}",
            "training_set": spec, "covering_radius": rb.covering, "stop_threshold": rb.stop_threshold,
            "gamma_delta_over_beta": rb.gamma}
    rows = []
    for k in range(1, rb.n + 1):
        c = rb.coefficients(Y, k)
        sup, l2 = _errors(stiff, U, rb.Q[:, :k] @ c.T)
        rows.append({"step": k, "card_Lambda": k, "sigma_hat": rb.surrogate_max[k - 1] if k <= len(rb.surrogate_max) else None,
                     "sup_error_MC": sup, "l2_error_MC": l2, "solves": k, "wall_ms": clock.ms()})
    return rows, meta


def _run_legendre(cfg: dict, stiff: StiffnessSet, threads: int) -> tuple[list[dict], dict]:
    method = cfg.get("method", {})
    dims = method.get("dims", 2)
    degree = method.get("degree", 6)
    nodes = method.get("nodes", degree + 10)
    lam = box_set(dims, degree)
    coeffs = legendre_coeffs_quadrature(stiff, lam, dims, nodes, threads=threads)
    eps = method.get("eps", stiff.r / 2)
    constant = float(coeffs.w_norms[0]) * (1 + method.get("bound_margin", 0.1))
    rows = []
    for i, nu in enumerate(lam):
        bound = coefficient_bound(stiff.family.norms, eps, nu, constant)
        rows.append({"nu": json.dumps(nu.to_json(), separators=(",", ":")), "v_norm": float(coeffs.v_norms[i]),
                     "w_norm": float(coeffs.w_norms[i]), "bound": bound})
    meta = {"quadrature": f"{nodes}^{dims} Gauss-Legendre nodes", "bound_constant": constant, "eps": eps,
            "violations": sum(r["w_norm"] > r["bound"] for r in rows)}
    return rows, meta


def _run_greedy(cfg: dict, method_overrides: dict) -> tuple[list[dict], dict]:
    method = {**cfg.get("method", {}), **method_overrides}
    kind = method.get("set", "diagonal")
    if kind == "diagonal":
        cset = diagonal_set(method.get("ratio", 0.5) ** np.arange(method.get("length", 32)))
    elif kind == "blocks":
        cset = block_set(method.get("s", 1.0), method.get("levels", 9))
    else:
        if "file" not in method:
            raise SchemaError("set 'file' needs a file path")
        cset = CompactSet.from_file(method["file"])
    gamma = method.get("gamma", 1.0)
    trace = weak_greedy(cset, gamma, method.get("n"), selection=method.get("selection", "first"))
    report = matrix_trace(trace)
    s = method.get("s", 1.0)
    rows = []
    for n in range(1, trace.n + 1):
        row = {"n": n, "label": trace.labels[n - 1], "sigma": float(trace.sigma[n]), "a_nn": float(abs(trace.A[n - 1, n - 1]))}
        if kind == "blocks":
            row["bound"] = gamma ** -2 * 2 ** (4 * s + 1) * n ** (-s)
        rows.append(row)
    meta = {"set": kind, "gamma": gamma, "p1_violations": len(report["p1_violations"]),
            "p2_violations": len(report["p2_violations"])}
    return rows, meta


def run(subcommand: str, cfg: dict, out: str | Path = ".", overrides: dict | None = None, online: bool = False) -> dict:
    """Execute one experiment; returns rows, metadata, fit and the written paths."""
    cfg = validate_config(json.loads(json.dumps(cfg)))
    if overrides:
        cfg.setdefault("method", {}).update({k: v for k, v in overrides.items() if v is not None})
        cfg = validate_config(cfg)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    prefix = cfg.get("output", {}).get("prefix", subcommand.replace("-", "_"))
    threads = threads_from_env(cfg.get("threads"))
    clock = _Clock(cfg.get("timing", True))
    meta = {"config_sha256": config_hash(cfg), "seed": cfg["seed"], "git_revision": git_revision(),
            "subcommand": subcommand}
    fit = None
    if subcommand == "greedy-synthetic":
        rows, extra = _run_greedy(cfg, {})
        columns = ["n", "label", "sigma", "a_nn"] + (["bound"] if "bound" in rows[0] else []) if rows else ["n"]
        x, ys = "n", ["sigma", "a_nn"]
    else:
        stiff = build_model(cfg["model"])
        meta["model"] = repr(stiff)
        if subcommand == "taylor":
            rows, extra = _run_taylor(cfg, stiff, threads, clock)
        elif subcommand == "interp":
            rows, extra = _run_interp(cfg, stiff, threads, clock)
        elif subcommand == "rb":
            rows, extra = _run_rb(cfg, stiff, threads, clock, out, prefix, online)
        elif subcommand == "legendre":
            rows, extra = _run_legendre(cfg, stiff, threads)
        else:
            raise SchemaError(f"unknown subcommand {subcommand!r}")
        if subcommand == "legendre":
            columns, x, ys = ["nu", "v_norm", "w_norm", "bound"], None, []
        else:
            columns, x, ys = ERROR_COLUMNS, "card_Lambda", ["sup_error_MC", "l2_error_MC"]
            window = tuple(cfg.get("method", {}).get("fit_window", ())) or None
            fit = fit_rate([r["card_Lambda"] for r in rows], [r["sup_error_MC"] for r in rows], window)
            extra["fit_rate_sup"] = fit.describe()
    meta.update(extra)
    csv_path = out / f"{prefix}.csv"
    write_csv(csv_path, columns, rows, meta)
    paths = {"csv": csv_path}
    if x:
        gp = out / f"{prefix}.gp"
        write_gnuplot(gp, csv_path.name, x, ys, title=f"pss {subcommand}")
        paths["gnuplot"] = gp
    return {"rows": rows, "meta": meta, "fit": fit, "paths": paths}


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pss", description="Parametric PDE surrogate experiments")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="experiment JSON file")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--model", default=None, help="JSON file holding a model block (overrides the config)")
        return p

    p = common(sub.add_parser("taylor", help="Taylor surrogates (a priori or bulk chasing)"))
    p.add_argument("--mode", choices=["apriori", "bulk"])
    p.add_argument("--n", type=int)
    p.add_argument("--theta", type=float)
    p.add_argument("--eps", type=float)
    p = common(sub.add_parser("interp", help="sparse Leja interpolation"))
    p.add_argument("--mode", choices=["apriori", "adaptive"])
    p.add_argument("--seq", choices=["leja", "rleja"])
    p.add_argument("--p", choices=["inf", "2"])
    p.add_argument("--n", type=int)
    p = common(sub.add_parser("legendre", help="Legendre coefficients by quadrature"))
    p.add_argument("--dims", type=int)
    p.add_argument("--degree", type=int)
    p.add_argument("--nodes", type=int)
    p = common(sub.add_parser("rb", help="reduced basis greedy"))
    p.add_argument("--eps", type=float)
    p.add_argument("--train")
    p.add_argument("--online", action="store_true", help="reuse the saved offline bundle")
    p.add_argument("--no-covering-check", dest="covering_check", action="store_false", default=None,
                   help="skip the training set covering radius check")
    p = common(sub.add_parser("greedy-synthetic", help="weak greedy on synthetic vector sets"))
    p.add_argument("--set", dest="set_kind", choices=["diagonal", "blocks", "file"])
    p.add_argument("--gamma", type=float)
    p.add_argument("--n", type=int)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.model:
            cfg["model"] = json.loads(Path(args.model).read_text(encoding="utf-8"))
        keys = {"mode", "n", "theta", "eps", "seq", "p", "dims", "degree", "nodes", "train", "gamma", "covering_check"}
        overrides = {k: v for k, v in vars(args).items() if k in keys and v is not None}
        if getattr(args, "set_kind", None):
            overrides["set"] = args.set_kind
        out = args.out or cfg.get("output", {}).get("dir", ".")
        result = run(args.subcommand, cfg, out, overrides, online=getattr(args, "online", False))
    except (SchemaError, OSError, json.JSONDecodeError) as exc:
        print(f"pss: configuration error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"pss: numerical error: {exc}", file=sys.stderr)
        return 3
    except PssError as exc:
        print(f"pss: error: {exc}", file=sys.stderr)
        return 3
    print(f"wrote {result['paths']['csv']}")
    if result["fit"] is not None:
        print(f"fitted sup-error rate: {result['fit'].describe()}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
