"""Command-line front end: ``sublinear-clt run|validate|schema``.

One JSON config describes one experiment. ``run`` writes a CSV table and a
``report.json`` into the config's ``output`` directory (if given) and prints
the report. Exit codes: 0 ok, 2 config error, 3 engine fault, 4 hypothesis
check failed.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .clt_engine import (RefusalError, SequenceSpec, clt_convergence_experiment,
                         lln_convergence_experiment, validate_hypotheses)
from .gheat_pde import (ConfigurationError, Grid1D, Grid2D,
                        MeanPolytope, NumericalFault, UnsupportedCase, gnormal_expectation,
                        grid_from_json, maximal_closed_form, maximal_expectation,
                        solve_gheat_1d, solve_gheat_2d, solve_maximal_pde)
from .matrix_sets import (CovariancePolytope, PreconditionError, hausdorff, hausdorff_interval,
                          lipschitz_bound_check, random_sym, uniform_gap_on_unit_ball)
from .sublinear_core import ConstructionError, InputError, TestFunction

log = logging.getLogger("sublinear_clt")

EXIT_OK, EXIT_CONFIG, EXIT_ENGINE, EXIT_HYPOTHESIS = 0, 2, 3, 4
THREADS_ENV = "SUBLINEAR_CLT_THREADS"

_phi = {"oneOf": [{"type": "string"},
                  {"type": "object", "required": ["id"],
                   "properties": {"id": {"type": "string"},
                                  "params": {"type": "array", "items": {"type": "number"}}}}]}
_poly = {"type": "object",
         "oneOf": [{"required": ["interval"]}, {"required": ["vertices"]}],
         "properties": {"interval": {"type": "array", "items": {"type": "number"},
                                     "minItems": 2, "maxItems": 2},
                        "vertices": {"type": "array", "minItems": 1},
                        "dimension": {"type": "integer", "minimum": 1}}}
_seq = {"type": "object", "required": ["builder"],
        "properties": {"mode": {"enum": ["clt", "lln"]},
                       "dimension": {"type": "integer", "minimum": 1},
                       "builder": {"type": "object", "required": ["id"],
                                   "properties": {"id": {"type": "string"},
                                                  "params": {"type": "object"}}},
                       "limit": _poly, "moment_bound": {"type": "number"},
                       "schedule": {"type": "object", "required": ["id"]}}}
_n_list = {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1}
_grid = {"type": "object", "required": ["L", "J", "T", "dt"]}

_SPECS = {
    "hausdorff": {"type": "object", "required": ["a", "b"],
                  "properties": {"a": _poly, "b": _poly,
                                 "samples": {"type": "integer", "minimum": 1}}},
    "pde": {"type": "object", "required": ["phi"],
            "oneOf": [{"required": ["sigma2"]}, {"required": ["theta"]}],
            "properties": {"sigma2": {"type": "array", "items": {"type": "number"},
                                      "minItems": 2, "maxItems": 2},
                           "theta": _poly, "phi": _phi, "grid": _grid,
                           "resolution": {"type": "object"}}},
    "maximal": {"type": "object", "required": ["gamma", "phi", "grid"],
                "properties": {"gamma": _poly, "phi": _phi, "grid": _grid,
                               "T": {"type": "number", "exclusiveMinimum": 0}}},
    "clt": {"type": "object", "required": ["sequence", "phi", "n_list"],
            "properties": {"sequence": _seq, "phi": _phi, "n_list": _n_list,
                           "pde": {"type": "object"},
                           "interp_spacing": {"type": "number", "exclusiveMinimum": 0}}},
    "lln": {"type": "object", "required": ["sequence", "phi", "n_list"],
            "properties": {"sequence": _seq, "phi": _phi, "n_list": _n_list,
                           "interp_spacing": {"type": "number", "exclusiveMinimum": 0}}},
    "validate": {"type": "object", "required": ["sequence"],
                 "properties": {"sequence": _seq,
                                "n_check": {"type": "integer", "minimum": 1},
                                "n_probes": {"type": "integer", "minimum": 1},
                                "alpha": {"type": "number", "exclusiveMinimum": 0,
                                          "exclusiveMaximum": 1}}},
}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "sublinear-clt experiment config",
    "type": "object",
    "required": ["experiment", "spec"],
    "properties": {
        "experiment": {"enum": list(_SPECS)},
        "spec": {"type": "object"},
        "output": {"type": "string"},
        "seed": {"type": "integer"},
        "deterministic": {"type": "boolean"},
    },
    "allOf": [{"if": {"properties": {"experiment": {"const": k}}},
               "then": {"properties": {"spec": v}}} for k, v in _SPECS.items()],
}


class ConfigError(Exception):
    pass


class HypothesisFailure(Exception):
    def __init__(self, report):
        super().__init__("hypothesis validation failed")
        self.report = report


def load_config(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(cfg)


def parse_config(cfg) -> dict:
    try:
        jsonschema.validate(cfg, SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"schema violation at {list(exc.absolute_path)}: {exc.message}") from exc
    return cfg


def _threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def _phi_of(spec) -> TestFunction:
    return TestFunction.from_json(spec["phi"])


def _write_rows(path: Path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _run_hausdorff(spec, cfg, out):
    a, b = CovariancePolytope.from_json(spec["a"]), CovariancePolytope.from_json(spec["b"])
    res = {"value": hausdorff(a, b)}
    if a.dimension == 1:
        res["interval_formula"] = hausdorff_interval(a.as_interval(), b.as_interval())
    res["uniform_gap"] = uniform_gap_on_unit_ball(a, b, int(spec.get("samples", 200)),
                                                  seed=cfg.get("seed", 0))
    rows = [[k, repr(float(v))] for k, v in res.items()]
    return res, ("hausdorff.csv", ["quantity", "value"], rows)


def _run_pde(spec, cfg, out):
    phi = _phi_of(spec)
    if "sigma2" in spec:
        lo, hi = map(float, spec["sigma2"])
        theta = CovariancePolytope.interval(lo, hi)
    else:
        theta = CovariancePolytope.from_json(spec["theta"])
    if "grid" in spec:
        grid = grid_from_json(spec["grid"])
        if isinstance(grid, Grid1D):
            sol = solve_gheat_1d(*theta.as_interval(), phi, grid)
        else:
            sol = solve_gheat_2d(theta, phi, grid)
        res = {"center_value": sol.center_value(), "steps": sol.steps,
               "cfl_ratio": sol.cfl_ratio, "grid": grid.to_json()}
    else:
        r = spec.get("resolution", {})
        lv = gnormal_expectation(theta, phi, dx=r.get("dx"), L=r.get("L"), cfl=r.get("cfl", 0.9))
        return {"center_value": lv.value, **lv.meta}, None
    return res, ("solution.csv", None, sol)


def _run_maximal(spec, cfg, out):
    gamma = MeanPolytope.from_json(spec["gamma"])
    phi = _phi_of(spec)
    grid = grid_from_json(spec["grid"])
    T = float(spec.get("T", grid.T))
    sol = solve_maximal_pde(gamma, phi, T, grid)
    if isinstance(grid, Grid2D):
        nodes = grid.mesh()
        inner = np.all(np.abs(nodes) <= np.array([grid.L1, grid.L2]) / 4, axis=1)
        dx = max(grid.dx)
    else:
        nodes = grid.x[:, None]
        inner = np.abs(grid.x) <= grid.L / 4
        dx = grid.dx
    exact = maximal_closed_form(gamma, phi, T, nodes[inner])
    err = float(np.max(np.abs(sol.values.ravel()[inner] - exact)))
    res = {"center_value": sol.center_value(),
           "closed_form_center": float(maximal_closed_form(gamma, phi, T, np.zeros((1, gamma.dimension)))[0]),
           "interior_sup_error": err, "tolerance": 10 * dx,
           "maximal_expectation_T1": maximal_expectation(gamma, phi).value}
    return res, ("solution.csv", None, sol)


def _table_rows(table, deterministic):
    return [[r.n, repr(r.dp_value), repr(r.limit_value), repr(r.gap),
             "0.0" if deterministic else repr(r.seconds)] for r in table.rows]


def _run_clt(spec, cfg, out):
    seq = SequenceSpec.from_json(spec["sequence"])
    table = clt_convergence_experiment(seq, _phi_of(spec), spec["n_list"], spec.get("pde"),
                                       spec.get("interp_spacing"), workers=_threads())
    res = {"rows": table.to_json(), "final_gap": table.gaps[-1], "limit": table.meta["limit"]}
    return res, ("convergence.csv", list(table.COLUMNS),
                 _table_rows(table, cfg.get("deterministic", False)))


def _run_lln(spec, cfg, out):
    seq = SequenceSpec.from_json(spec["sequence"])
    table = lln_convergence_experiment(seq, _phi_of(spec), spec["n_list"],
                                       spec.get("interp_spacing"), workers=_threads())
    res = {"rows": table.to_json(), "final_gap": table.gaps[-1]}
    return res, ("convergence.csv", list(table.COLUMNS),
                 _table_rows(table, cfg.get("deterministic", False)))


def _run_validate(spec, cfg, out):
    seq = SequenceSpec.from_json(spec["sequence"])
    n_check = int(spec.get("n_check", 64))
    rep = validate_hypotheses(seq, n_check, seed=cfg.get("seed", 0),
                              n_probes=int(spec.get("n_probes", 20)), alpha=spec.get("alpha"))
    res = {"validation": rep.to_json()}
    ok = rep.passed
    if seq.mode == "clt" and rep.conditions["ii"].passed and seq.moment_bound is not None:
        rng = np.random.default_rng(cfg.get("seed", 0) + 1)
        d = seq.dimension
        pairs = [(random_sym(d, rng, unit=False), random_sym(d, rng, unit=False))
                 for _ in range(int(spec.get("n_probes", 20)))]
        lip = lipschitz_bound_check([seq.covariance_set(i) for i in range(1, n_check + 1)],
                                    seq.moment_bound, pairs)
        res["lipschitz_common_constant"] = {"passed": lip.passed, "checks": lip.checks,
                                            "worst_margin": lip.worst_margin}
        ok = ok and lip.passed
    rows = [[c["condition"], str(c["passed"]).lower(), c["detail"]]
            for c in res["validation"]["conditions"]]
    res["passed"] = ok
    return res, ("validation.csv", ["condition", "passed", "detail"], rows)


_RUNNERS = {"hausdorff": _run_hausdorff, "pde": _run_pde, "maximal": _run_maximal,
            "clt": _run_clt, "lln": _run_lln, "validate": _run_validate}


def run(cfg: dict) -> dict:
    """Execute one parsed config and return the report dict.

    Raises HypothesisFailure for a failed validation, after writing outputs.
    """
    t0 = time.perf_counter()
    spec = cfg["spec"]
    out = Path(cfg["output"]) if cfg.get("output") else None
    res, artifact = _RUNNERS[cfg["experiment"]](spec, cfg, out)
    deterministic = cfg.get("deterministic", False)
    report = {
        "artifact_version": __version__,
        "experiment": cfg["experiment"],
        "seed": cfg.get("seed", 0),
        "config": cfg,
        "results": res,
        "timings": {"seconds": 0.0 if deterministic else time.perf_counter() - t0,
                    "threads": _threads()},
    }
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        if artifact is not None:
            name, header, payload = artifact
            if header is None:
                payload.to_csv(out / name)
            else:
                _write_rows(out / name, header, payload)
            report["outputs"] = [str(out / name)]
        with open(out / "report.json", "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2, default=_json_default)
            fh.write("\n")
    if cfg["experiment"] == "validate" and not res["passed"]:
        raise HypothesisFailure(report)
    return report


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def validate(cfg: dict) -> dict:
    """Run hypothesis validation for any config carrying a sequence."""
    seq = cfg["spec"].get("sequence")
    if seq is None:
        raise ConfigError("validate needs a config whose spec has a 'sequence'")
    keep = {k: cfg["spec"][k] for k in ("n_check", "n_probes", "alpha") if k in cfg["spec"]}
    vcfg = {**cfg, "experiment": "validate", "spec": {"sequence": seq, **keep}}
    return run(parse_config(vcfg))


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="sublinear-clt", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("run", "validate"):
        p = sub.add_parser(name)
        p.add_argument("config")
    sub.add_parser("schema")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")

    if args.command == "schema":
        print(json.dumps(SCHEMA, indent=2))
        return EXIT_OK
    try:
        cfg = load_config(args.config)
        report = run(cfg) if args.command == "run" else validate(cfg)
    except HypothesisFailure as exc:
        print(json.dumps(exc.report, indent=2, default=_json_default))
        return EXIT_HYPOTHESIS
    except (ConfigError, InputError, ConstructionError, ConfigurationError,
            PreconditionError, KeyError) as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except (NumericalFault, UnsupportedCase, RefusalError, ArithmeticError) as exc:
        log.error("engine fault: %s", exc)
        return EXIT_ENGINE
    except Exception as exc:  # noqa: BLE001
        log.exception("unexpected engine failure: %s", exc)
        return EXIT_ENGINE
    print(json.dumps(report, indent=2, default=_json_default))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
