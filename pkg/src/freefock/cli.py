"""Experiment orchestration: config ingestion, subcommands, result emission.

One YAML configuration drives one experiment.  Subcommands: ``model
validate``, ``algebra check``, ``solve``, ``oracle run``, ``compare``.
Exit codes: 0 all checks pass, 1 execution or configuration error, 2
comparison failure.  Outputs are byte-deterministic for a fixed config
and seed: floats render via repr (shortest round-trip), JSON keys are
sorted, and manifests carry no wall-clock fields.
"""

from __future__ import annotations

import argparse
import csv
import hashlib

import json
import sys
from pathlib import Path

import numpy as np
import yaml

try:
    import jsonschema
except ImportError:  # pragma: no cover
    jsonschema = None

from . import __version__
from .errors import ConfigError, FreefockError
from .fock import DEFAULT_BUDGET, load as load_vector
from .cuntz import apply_operator
from .inverse import identity_catalog, right_inverse_K_plus_G, right_inverse_N0, right_inverse_Nq
from .model import build_oscillator_model, build_wave_model, validate_kernels
from .oracle import EnsembleSpec, estimate_mtcf, simulate
from .solver import (
    closed_equation_solve,
    lower_triangular_expansion,
    perturbation_series,
    propagate_residual_stderr,
    rational_solve,
    residual_by_level,
)

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["model", "truncation"],
    "additionalProperties": False,
    "properties": {
        "model": {
            "type": "object",
            "required": ["kind"],
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["oscillator", "wave"]},
                "omega": {"type": "number"},
                "dt": {"type": "number", "exclusiveMinimum": 0},
                "T": {"type": "integer", "minimum": 3},
                "lambda": {"type": "number"},
                "q": {"type": "number"},
                "forcing": {"type": ["number", "array"]},
                "x0_mean": {"type": "number"},
                "v0_mean": {"type": "number"},
                "interaction_rows": {"enum": ["all", "interior"]},
                "boundary": {"enum": ["initial", "free"]},
                "speed": {"type": "number", "exclusiveMinimum": 0},
                "nx": {"type": "integer", "minimum": 3},
                "length": {"type": "number", "exclusiveMinimum": 0},
                "cfl": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "nt": {"type": "integer", "minimum": 2},
            },
        },
        "truncation": {
            "type": "object",
            "required": ["L"],
            "additionalProperties": False,
            "properties": {
                "L": {"type": "integer", "minimum": 0},
                "budget": {"type": "integer", "minimum": 1},
            },
        },
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "method": {"enum": ["perturb", "triangular", "closed", "rational"]},
                "order": {"type": ["integer", "null"], "minimum": 0},
                "tol": {"type": ["number", "null"], "exclusiveMinimum": 0},
                "lambda": {"type": ["number", "null"]},
                "sym": {"type": "boolean"},
                "seed_mode": {"enum": ["free", "oracle", "file"]},
                "seed_file": {"type": ["string", "null"]},
                "chi": {"type": ["array", "null"]},
                "assumption": {"enum": ["projected", "symmetrized"]},
            },
        },
        "oracle": {
            "type": "object",
            "required": ["samples", "seed"],
            "additionalProperties": False,
            "properties": {
                "mean": {"type": "array", "items": {"type": "number"}},
                "cov": {"type": ["number", "array"]},
                "pinned": {"type": ["array", "null"]},
                "samples": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0},
                "max_order": {"type": "integer", "minimum": 1},
                "smear": {"type": ["object", "null"]},
            },
        },
        "compare": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "words": {"type": ["string", "array"]},
                "max_order": {"type": "integer", "minimum": 1},
                "sigma": {"type": "number", "exclusiveMinimum": 0},
                "abs_slack": {"type": "number", "minimum": 0},
                "rows": {"enum": ["all", "equation"]},
                "residual_sigma": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "directory": {"type": "string"},
                "prefix": {"type": "string"},
            },
        },
    },
}


def load_config(path):
    try:
        with open(path) as fh:
            doc = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a mapping")
    if jsonschema is not None:
        validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
        errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
        if errors:
            e = errors[0]
            where = ".".join(str(p) for p in e.absolute_path) or "(root)"
            raise ConfigError(f"config key {where!r}: {e.message}")
    return doc


def build_model(config):
    mc = dict(config["model"])
    kind = mc.pop("kind")
    if kind == "oscillator":
        return build_oscillator_model(
            omega=mc.get("omega", 1.0),
            dt=mc.get("dt", 0.1),
            T=mc.get("T", 8),
            lam=mc.get("lambda", 0.0),
            q=mc.get("q", 0.0),
            forcing=mc.get("forcing"),
            x0_mean=mc.get("x0_mean", 0.0),
            v0_mean=mc.get("v0_mean", 0.0),
            interaction_rows=mc.get("interaction_rows", "all"),
            boundary=mc.get("boundary", "initial"),
        )
    return build_wave_model(
        speed=mc.get("speed", 1.0),
        nx=mc.get("nx", 64),
        length=mc.get("length", 2.0),
        cfl=mc.get("cfl", 0.5),
        nt=mc.get("nt", 64),
    )


def build_ensemble(config, model):
    oc = config.get("oracle")
    if oc is None:
        raise ConfigError("config has no 'oracle' section")
    dim = 2 if model.kind == "oscillator" else 2 * model.nx
    mean = np.asarray(oc.get("mean", [0.0] * dim), dtype=float)
    cov = oc.get("cov", 0.0)
    if isinstance(cov, list):
        cov = np.asarray(cov, dtype=float)
    pinned = oc.get("pinned")
    if pinned is not None:
        pinned = np.asarray(pinned, dtype=bool)
    smear = oc.get("smear")
    if smear is not None:
        smear = {int(k): float(v) for k, v in smear.items()}
    return EnsembleSpec(
        mean=mean,
        cov=cov,
        samples=int(oc["samples"]),
        seed=int(oc["seed"]),
        pinned=pinned,
        smearing=smear,
    )


def model_hash(config):
    blob = json.dumps(config.get("model", {}), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def config_hash(config):
    return hashlib.sha256(json.dumps(config, sort_keys=True, default=str).encode()).hexdigest()[:16]


def manifest(config, **extra):
    doc = {
        "config_hash": config_hash(config),
        "model_hash": model_hash(config),
        "version": __version__,
    }
    doc.update(extra)
    return doc


def _write_json(path, doc):
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _format_word(word):
    return ";".join(str(int(i)) for i in word)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([x if isinstance(x, str) else repr(float(x)) if isinstance(x, float) else x for x in row])


def _outdir(config, args):
    oc = config.get("output", {})
    directory = Path(getattr(args, "out", None) or oc.get("directory", "out"))
    directory.mkdir(parents=True, exist_ok=True)
    return directory, oc.get("prefix", "run")


# --- subcommands -------------------------------------------------------------

def cmd_model_validate(args):
    config = load_config(args.config)
    model = build_model(config)
    if model.kind != "oscillator":
        print("wave model: no hierarchy kernels to validate (oracle-only model)")
        if args.json:
            _write_json(args.json, {"kind": "wave", "ok": True})
        return 0
    diag = validate_kernels(model.space, model.kernels)
    print(diag.render())
    if args.json:
        _write_json(args.json, {"kind": "oscillator", **diag.to_dict(), "manifest": manifest(config)})
    return 0


def cmd_algebra_check(args):
    config = load_config(args.config)
    model = build_model(config)
    if model.kind != "oscillator":
        raise ConfigError("algebra check needs an oscillator model (hierarchy kernels)")
    L = int(config["truncation"]["L"])
    budget = int(config["truncation"].get("budget", DEFAULT_BUDGET))
    results = identity_catalog(model.kernels, L, budget=budget)
    failed = [r for r in results if r.passed is False]
    for r in results:
        status = "pass" if r.passed else ("skip" if r.passed is None else "FAIL")
        res = "-" if r.residual is None else f"{r.residual:.3e}"
        extra = f"  [{r.skipped_reason}]" if r.skipped_reason else ""
        print(f"{status:4s}  {r.id:45s} residual {res}{extra}")
    doc = {
        "identities": [r.to_dict() for r in results],
        "manifest": manifest(config),
        "ok": not failed,
    }
    if args.json:
        _write_json(args.json, doc)
    return 0 if not failed else 2


def _seed_vector(config, model, L, method, budget):
    sc = config.get("solver", {})
    mode = sc.get("seed_mode", "free")
    if mode == "free":
        return None, "free"
    if mode == "file":
        path = sc.get("seed_file")
        if not path:
            raise ConfigError("seed_mode 'file' needs solver.seed_file")
        return load_vector(path, model.space), f"file:{path}"
    ensemble = build_ensemble(config, model)
    traj = simulate(model, ensemble)
    table = estimate_mtcf(traj, max_order=min(L, config.get("oracle", {}).get("max_order", L)))
    vhat = table.to_vector(model.space, L, budget=budget)
    if method == "perturb":
        bundle = right_inverse_K_plus_G(model.kernels, L, budget=budget)
        seed = apply_operator(bundle.null_projector, vhat)
    elif method in ("triangular", "closed"):
        kern = model.kernels
        bundle = right_inverse_Nq(kern, L) if kern.q != 0.0 else right_inverse_N0(kern, L)
        seed = apply_operator(bundle.null_projector, vhat)
    else:
        seed = vhat
    return seed, "oracle"


def run_solver(config, model, budget=None):
    sc = config.get("solver", {})
    L = int(config["truncation"]["L"])
    budget = budget or int(config["truncation"].get("budget", DEFAULT_BUDGET))
    method = sc.get("method", "perturb")
    kern = model.kernels
    seed, seed_desc = _seed_vector(config, model, L, method, budget)
    if method == "perturb":
        report = perturbation_series(
            kern,
            L,
            order=sc.get("order", 2),
            tol=sc.get("tol"),
            symmetrized=bool(sc.get("sym", False)),
            seed=seed,
            budget=budget,
        )
    elif method == "triangular":
        report = lower_triangular_expansion(kern, L, seed=seed, budget=budget)
    elif method == "closed":
        chi = sc.get("chi")
        report = closed_equation_solve(
            kern,
            L,
            chi=None if chi is None else np.asarray(chi, dtype=float),
            assumption=sc.get("assumption", "projected"),
            budget=budget,
        )
    elif method == "rational":
        lam = sc.get("lambda")
        if lam is None:
            raise ConfigError("rational solve needs solver.lambda (the rational coupling)")
        report = rational_solve(kern, L, lam=lam, symmetrized=bool(sc.get("sym", False)), budget=budget)
    else:  # pragma: no cover - schema blocks this
        raise ConfigError(f"unknown solver method {method!r}")
    report.extras["seed_mode"] = seed_desc
    return report


def cmd_solve(args):
    config = load_config(args.config)
    _apply_solver_overrides(config, args)
    model = build_model(config)
    if model.kind != "oscillator":
        raise ConfigError("solve needs an oscillator model")
    report = run_solver(config, model)
    outdir, prefix = _outdir(config, args)
    doc = report.to_dict()
    doc["manifest"] = manifest(config, seed_mode=report.extras.get("seed_mode", "free"))
    _write_json(outdir / f"{prefix}_solve.json", doc)
    rows = []
    L = report.V.L
    for n in range(1, L + 1):
        for idx in np.ndindex(*report.V.levels[n].shape):
            rows.append((_format_word(idx), float(report.V.levels[n][idx])))
    _write_csv(outdir / f"{prefix}_correlations.csv", ("word", "value"), rows)
    print(f"solved with method={report.method}; residual per level "
          + json.dumps({str(k): float(v) for k, v in report.residual.per_level.items()}))
    print(f"wrote {outdir / (prefix + '_solve.json')} and {outdir / (prefix + '_correlations.csv')}")
    return 0


def _apply_solver_overrides(config, args):
    sc = config.setdefault("solver", {})
    if getattr(args, "method", None):
        sc["method"] = args.method
    if getattr(args, "order", None) is not None:
        sc["order"] = args.order
    if getattr(args, "tol", None) is not None:
        sc["tol"] = args.tol
    if getattr(args, "lam", None) is not None:
        # the rational method has its own coupling; for the others lambda
        # is a model parameter
        if sc.get("method", "perturb") == "rational":
            sc["lambda"] = args.lam
        else:
            config.setdefault("model", {})["lambda"] = args.lam
    if getattr(args, "sym", False):
        sc["sym"] = True
    if getattr(args, "seed_mode", None):
        sc["seed_mode"] = args.seed_mode
    if getattr(args, "seed_file", None):
        sc["seed_file"] = args.seed_file


def cmd_oracle_run(args):
    config = load_config(args.config)
    oc = config.setdefault("oracle", {})
    if args.samples is not None:
        oc["samples"] = args.samples
    if args.seed is not None:
        oc["seed"] = args.seed
    if args.max_order is not None:
        oc["max_order"] = args.max_order
    if args.smear:
        smear = {}
        for part in args.smear.split(","):
            k, v = part.split(":")
            smear[int(k)] = float(v)
        oc["smear"] = smear
    model = build_model(config)
    ensemble = build_ensemble(config, model)
    traj = simulate(model, ensemble)
    outdir, prefix = _outdir(config, args)
    if model.kind == "wave":
        mean = traj.positions.mean(axis=0)
        rows = [
            (_format_word((r, i)), float(mean[r, i]), repr(0.0))
            for r in range(mean.shape[0])
            for i in range(mean.shape[1])
        ]
        _write_csv(outdir / f"{prefix}_mtcf.csv", ("word", "value", "stderr"), rows)
    else:
        table = estimate_mtcf(traj, max_order=oc.get("max_order", 2), smearing=ensemble.smearing)
        rows = [
            (_format_word(w), v, s)
            for w, v, s in table.word_items()
        ]
        _write_csv(outdir / f"{prefix}_mtcf.csv", ("word", "value", "stderr"), rows)
    doc = manifest(
        config,
        seed=int(ensemble.seed),
        samples=int(ensemble.samples),
        integrator=traj.scheme,
    )
    _write_json(outdir / f"{prefix}_manifest.json", doc)
    print(f"wrote {outdir / (prefix + '_mtcf.csv')} and {outdir / (prefix + '_manifest.json')}")
    return 0


def _select_words(config, model, table, L):
    cc = config.get("compare", {})
    spec = cc.get("words", "level1_interior")
    data_rows = set(model.kernels.data_rows)
    if isinstance(spec, list):
        return [tuple(int(i) for i in w) for w in spec]
    if spec == "level1_interior":
        return [(i,) for i in range(model.space.d) if i not in data_rows]
    if spec.startswith("all_orders:"):
        mo = int(spec.split(":", 1)[1])
        return [w for w, _, _ in table.word_items(max_order=mo)]
    raise ConfigError(f"unknown compare.words spec {spec!r}")


def run_compare(config):
    """Oracle vs solver comparison; returns (report dict, ok flag)."""
    model = build_model(config)
    if model.kind != "oscillator":
        raise ConfigError("compare needs an oscillator model")
    L = int(config["truncation"]["L"])
    budget = int(config["truncation"].get("budget", DEFAULT_BUDGET))
    cc = config.get("compare", {})
    sigma = float(cc.get("sigma", 3.0))
    abs_slack = float(cc.get("abs_slack", 1e-9))
    rows_mode = cc.get("rows", "equation")
    residual_sigma = float(cc.get("residual_sigma", 4.0))

    ensemble = build_ensemble(config, model)
    traj = simulate(model, ensemble)
    max_order = int(config.get("oracle", {}).get("max_order", min(L, 4)))
    table = estimate_mtcf(traj, max_order=max_order, smearing=ensemble.smearing)

    solver_report = run_solver(config, model, budget=budget)

    words = _select_words(config, model, table, L)
    comparisons = []
    worst = 0.0
    all_pass = True
    for w in words:
        mc_val, mc_se = table.word(w)
        sol_val = float(solver_report.V.levels[len(w)][tuple(w)])
        delta = abs(sol_val - mc_val)
        bound = sigma * mc_se + abs_slack
        ok = delta <= bound
        all_pass &= ok
        z = delta / mc_se if mc_se > 0 else 0.0
        worst = max(worst, z)
        comparisons.append(
            {
                "word": _format_word(w),
                "oracle": mc_val,
                "stderr": mc_se,
                "solver": sol_val,
                "delta": delta,
                "bound": bound,
                "pass": ok,
            }
        )

    # hierarchy residual of the empirical generating vector
    vhat = table.to_vector(model.space, min(L, max_order), budget=budget)
    res = residual_by_level(vhat, model.kernels, rows=rows_mode)
    se_prop = propagate_residual_stderr(model.kernels, table.se_vector(model.space, vhat.L))
    residual_checks = {}
    lo, hi = res.trusted_levels
    res_pass = True
    for n in range(lo, hi + 1):
        se_floor = _se_level_bound(se_prop, n, model)
        ok = res.per_level[n] <= residual_sigma * se_floor + abs_slack
        residual_checks[n] = {
            "residual": res.per_level[n],
            "se_bound": se_floor,
            "pass": ok,
        }
        res_pass &= ok
    all_pass &= res_pass

    report = {
        "comparisons": comparisons,
        "max_delta_over_stderr": worst,
        "residual_checks": {str(k): v for k, v in residual_checks.items()},
        "solver": solver_report.to_dict(),
        "manifest": manifest(config, seed=int(ensemble.seed), samples=int(ensemble.samples)),
        "pass": bool(all_pass),
    }
    return report, all_pass


def _se_level_bound(se_prop, n, model):
    """Smallest propagated standard error over the trusted rows of level n."""
    t = se_prop.levels[n]
    if not t.size:
        return float(t)
    data_rows = list(model.kernels.data_rows)
    if n >= 1 and data_rows:
        mask = np.ones(t.shape[0], dtype=bool)
        mask[data_rows] = False
        t = t[mask]
    return float(t.min()) if t.size else 0.0


def cmd_compare(args):
    config = load_config(args.config)
    report, ok = run_compare(config)
    outdir, prefix = _outdir(config, args)
    _write_json(outdir / f"{prefix}_compare.json", report)
    rows = [
        (c["word"], c["oracle"], c["stderr"], c["solver"], c["delta"], "pass" if c["pass"] else "FAIL")
        for c in report["comparisons"]
    ]
    _write_csv(outdir / f"{prefix}_compare.csv", ("word", "oracle", "stderr", "solver", "delta", "status"), rows)
    print(f"compare: {'pass' if ok else 'FAIL'}; max |delta|/stderr = {report['max_delta_over_stderr']:.2f}")
    print(f"wrote {outdir / (prefix + '_compare.json')}")
    return 0 if ok else 2


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="freefock",
        description="Correlation-hierarchy experiments on a truncated free Fock space",
    )
    parser.add_argument(
        "--threads",
        type=int,
        default=None,
        help="cap on oracle parallelism (sampling is vectorized in-process; accepted for interface stability)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_model = sub.add_parser("model", help="model inspection")
    model_sub = p_model.add_subparsers(dest="subcommand", required=True)
    p_validate = model_sub.add_parser("validate", help="kernel diagnostics")
    p_validate.add_argument("--config", required=True)
    p_validate.add_argument("--json", default=None, help="also write the report as JSON")
    p_validate.set_defaults(func=cmd_model_validate)

    p_algebra = sub.add_parser("algebra", help="operator-identity catalog")
    algebra_sub = p_algebra.add_subparsers(dest="subcommand", required=True)
    p_check = algebra_sub.add_parser("check", help="run every identity and report residuals")
    p_check.add_argument("--config", required=True)
    p_check.add_argument("--json", default=None)
    p_check.set_defaults(func=cmd_algebra_check)

    p_solve = sub.add_parser("solve", help="solve the hierarchy")
    p_solve.add_argument("--config", required=True)
    p_solve.add_argument("--method", choices=["perturb", "triangular", "closed", "rational"])
    p_solve.add_argument("--order", type=int, default=None)
    p_solve.add_argument("--tol", type=float, default=None)
    p_solve.add_argument("--lambda", dest="lam", type=float, default=None)
    p_solve.add_argument("--sym", action="store_true")
    p_solve.add_argument("--seed-mode", choices=["free", "oracle", "file"], default=None)
    p_solve.add_argument("--seed-file", default=None)
    p_solve.add_argument("--out", default=None)
    p_solve.set_defaults(func=cmd_solve)

    p_oracle = sub.add_parser("oracle", help="ensemble simulation and estimation")
    oracle_sub = p_oracle.add_subparsers(dest="subcommand", required=True)
    p_run = oracle_sub.add_parser("run", help="simulate and emit the moment table")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--samples", type=int, default=None)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--max-order", type=int, default=None)
    p_run.add_argument("--smear", default=None, help="shift:weight pairs, e.g. '0:0.5,1:0.5'")
    p_run.add_argument("--out", default=None)
    p_run.set_defaults(func=cmd_oracle_run)

    p_compare = sub.add_parser("compare", help="oracle vs solver, word by word")
    p_compare.add_argument("--config", required=True)
    p_compare.add_argument("--out", default=None)
    p_compare.set_defaults(func=cmd_compare)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except FreefockError as exc:
        print(f"error [{type(exc).__name__}]: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
