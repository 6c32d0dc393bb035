"""``ccekit table|sweep|rate --config <path>``: run experiments, write CSV (+SVG).

Exit codes: 0 success, 2 config error, 3 runtime failure.
"""
import argparse
import copy
import json
import logging
import os
import sys

import jsonschema

from . import __version__
from . import dgp, montecarlo as mc, report
from ._errors import ConfigError

log = logging.getLogger("ccekit")

SCHEMA_VERSION = 1
EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

_criterion = {
    "type": "object",
    "additionalProperties": False,
    "required": ["criterion"],
    "properties": {
        "criterion": {"enum": ["MW", "DVS", "DVS_adjusted", "ER"]},
        "penalty": {"enum": ["P1", "P2"]},
        "variant": {"enum": list(mc.ER_VARIANTS)},
    },
}
_num = {"type": "number"}
_int = {"type": "integer"}
_pos = {"type": "integer", "minimum": 1}
_tau = {"type": "number", "minimum": 0, "exclusiveMaximum": 1}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["schema_version"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "reps": _pos,
        "seed": {"type": "integer", "minimum": 0, "maximum": 2 ** 64 - 1},
        "threads": _pos,
        "dgp": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "k": _pos, "beta_level": _num, "slope_het_sd": _num,
                "loading_mean": _num, "loading_sd": _num,
                "oracle_candidates": {"type": "boolean"},
                "factor": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "m": _pos, "q_low": _num, "q_high": _num, "burn_in": _int,
                        "innovation_scale": {"enum": list(dgp.INNOVATION_SCALES)},
                    },
                },
                "errors": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "mode": {"enum": list(dgp.ERROR_MODES)},
                        "rho": _num, "rho_v": _num, "kappa": _num, "kappa_v": _num,
                        "J": _int, "J_v": _int, "burn_in": _int,
                    },
                },
            },
        },
        "table": {
            "type": "object",
            "additionalProperties": False,
            "required": ["cells"],
            "properties": {
                "cells": {
                    "type": "array", "minItems": 1,
                    "items": {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["N", "T", "tau"],
                        "properties": {"N": _pos, "T": _pos, "tau": _tau},
                    },
                },
                "criteria": {"type": "array", "minItems": 1, "items": _criterion},
            },
        },
        "sweep": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "N": _pos, "T": _pos,
                "taus": {"type": "array", "minItems": 1, "items": _tau},
                "error_modes": {"type": "array", "minItems": 1,
                                "items": {"enum": list(dgp.ERROR_MODES)}},
                "criteria": {"type": "array", "minItems": 1, "items": _criterion},
            },
        },
        "rate": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "checks": {
                    "type": "array", "minItems": 1,
                    "items": {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["statistic", "tau"],
                        "properties": {
                            "statistic": {"enum": list(mc.RATE_STATISTICS)},
                            "tau": _tau,
                            "couple_NT": {"type": "boolean"},
                        },
                    },
                },
                "N_fixed": _pos,
                "T_grid": {"type": "array", "minItems": 3, "items": _pos},
                "reps": _pos,
            },
        },
    },
}


def default_config():
    """Full average-g grid, the tau sweep and the headline rate checks."""
    sizes = (10, 20, 50, 100)
    return {
        "schema_version": SCHEMA_VERSION,
        "reps": 500,
        "seed": 20251018,
        "threads": 1,
        "table": {
            "cells": [{"N": n, "T": t, "tau": tau}
                      for tau in (0.0, 0.1, 0.9) for t in sizes for n in sizes],
            "criteria": [{"criterion": "MW", "penalty": "P1"}, {"criterion": "MW", "penalty": "P2"},
                         {"criterion": "DVS", "penalty": "P1"}, {"criterion": "DVS", "penalty": "P2"}],
        },
        "sweep": {"N": 100, "T": 100},
        "rate": {
            "checks": [{"statistic": "prop1_under", "tau": 0.9},
                       {"statistic": "prop1_under", "tau": 0.5},
                       {"statistic": "corA1", "tau": 0.5}],
            "N_fixed": 200,
            "T_grid": [100, 200, 400, 800],
            "reps": 200,
        },
    }


def _line_of(text, path):
    """Best-effort line number of the JSON node at ``path`` (keys and indices)."""
    pos = 0
    for part in path:
        if isinstance(part, str):
            hit = text.find(json.dumps(part), pos)
            if hit < 0:
                break
            pos = hit
    return text.count("\n", 0, pos) + 1


def load_config(path):
    """Parse and validate a JSON config; raises ConfigError with a line number."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc.strerror}") from None
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from None
    validate(cfg, text, path)
    return cfg


def validate(cfg, text="", path="<config>"):
    errors = sorted(jsonschema.Draft7Validator(SCHEMA).iter_errors(cfg),
                    key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        err = errors[0]
        loc = "$" + "".join(f"[{p}]" if isinstance(p, int) else f".{p}" for p in err.absolute_path)
        # an unknown key is reported by its parent, so point at the key itself
        where = list(err.absolute_path)
        if err.validator == "additionalProperties":
            extra = [k for k in err.instance if k not in err.schema.get("properties", {})]
            where += extra[:1]
        line = _line_of(text, where) if text else 0
        raise ConfigError(f"{path}:{line}: {loc}: {err.message}")
    # semantic checks that the schema cannot express
    try:
        template = build_dgp(cfg)
    except (ConfigError, TypeError) as exc:
        raise ConfigError(f"{path}:{_line_of(text, ['dgp']) if text else 0}: $.dgp: {exc}") from None
    for i, c in enumerate(cfg.get("table", {}).get("cells", [])):
        try:
            template.with_cell(c["N"], c["T"], c["tau"])
        except ConfigError as exc:
            line = _nth_line(text, "cells", '"N"', i) if text else 0
            raise ConfigError(f"{path}:{line}: $.table.cells[{i}]: {exc}") from None


def _nth_line(text, anchor, token, n):
    pos = text.find(json.dumps(anchor))
    for _ in range(n + 1):
        nxt = text.find(token, pos + 1)
        if nxt < 0:
            break
        pos = nxt
    return text.count("\n", 0, max(pos, 0)) + 1


def build_dgp(cfg):
    d = cfg.get("dgp", {})
    factor = dgp.FactorConfig(**d.get("factor", {}))
    e = dict(d.get("errors", {}))
    errors = dgp.ErrorConfig.for_mode(e.pop("mode", "weak_cs"), **e)
    top = {k: v for k, v in d.items() if k not in ("factor", "errors")}
    return dgp.PanelConfig(factor=factor, errors=errors, **top)


def _criteria(items):
    if items is None:
        return mc.STANDARD_CRITERIA
    return tuple(mc.CriterionSpec(c["criterion"], c.get("penalty"), c.get("variant", "X"))
                 for c in items)


def effective_config(args):
    cfg = load_config(args.config) if args.config else default_config()
    cfg = copy.deepcopy(cfg)
    for key in ("reps", "seed", "threads"):
        val = getattr(args, key)
        if val is not None:
            cfg[key] = val
    if args.reps is not None and "rate" in cfg:
        cfg["rate"]["reps"] = args.reps
    validate(cfg, path=args.config or "<default>")
    return cfg


def _meta(command, cfg, reps):
    # thread count is left out so outputs are byte-identical across worker counts
    audit = {k: v for k, v in cfg.items() if k != "threads"}
    return {"tool": f"ccekit-{__version__}", "command": command,
            "config_sha256": report.config_hash(audit),
            "seed": cfg.get("seed", 20251018), "reps": reps}


def _write_provenance(out, name, cfg):
    prov = {"tool_version": __version__, "threads": cfg.get("threads", 1),
            "seed": cfg.get("seed", 20251018), "reps": cfg.get("reps"), "config": cfg}
    with open(os.path.join(out, name + ".provenance.json"), "w", newline="\n") as fh:
        json.dump(prov, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_table(cfg, out):
    if "table" not in cfg:
        raise ConfigError("config has no 'table' section")
    t = cfg["table"]
    reps = cfg.get("reps", 500)
    spec = mc.ExperimentSpec(
        cells=[mc.Cell(c["N"], c["T"], float(c["tau"])) for c in t["cells"]],
        dgp=build_dgp(cfg), criteria=_criteria(t.get("criteria")), reps=reps,
        master_seed=cfg.get("seed", 20251018), parallelism=cfg.get("threads", 1))
    results = mc.run_experiment(spec)
    rows = mc.aggregate(results)
    report.write_csv(os.path.join(out, "table.csv"), mc.ROW_FIELDS, rows, _meta("table", cfg, reps))
    _write_provenance(out, "table", cfg)
    return rows


SWEEP_FIELDS = ("tau", "criterion", "error_mode", "share_misselected")


def cmd_sweep(cfg, out, svg=False):
    s = cfg.get("sweep", {})
    reps = cfg.get("reps", 500)
    crit = _criteria(s.get("criteria")) if "criteria" in s else (
        mc.CriterionSpec("MW", "P1"), mc.CriterionSpec("DVS", "P1"))
    rows = mc.tau_sweep(
        taus=s.get("taus"), N=s.get("N", 100), T=s.get("T", 100),
        error_modes=tuple(s.get("error_modes", ("weak_cs", "weak_time_cs"))),
        criteria=crit, reps=reps, master_seed=cfg.get("seed", 20251018),
        dgp_template=build_dgp(cfg), workers=cfg.get("threads", 1))
    dict_rows = [{"tau": r.tau, "criterion": r.criterion, "error_mode": r.error_mode,
                  "share_misselected": r.share_misselected} for r in rows]
    report.write_csv(os.path.join(out, "sweep.csv"), SWEEP_FIELDS, dict_rows,
                     _meta("sweep", cfg, reps))
    _write_provenance(out, "sweep", cfg)
    if svg:
        series = {}
        for r in rows:
            series.setdefault(f"{r.criterion} {r.error_mode}", []).append((r.tau, r.share_misselected))
        text = report.svg_line_chart(series, "tau", "share misselected",
                                     title=f"N={s.get('N', 100)}, T={s.get('T', 100)}")
        with open(os.path.join(out, "sweep.svg"), "w", newline="\n") as fh:
            fh.write(text)
    return dict_rows


RATE_FIELDS = ("statistic", "tau", "T", "median_value", "fitted_slope", "theoretical_slope")


def cmd_rate(cfg, out):
    r = cfg.get("rate", {})
    checks = r.get("checks", default_config()["rate"]["checks"])
    reps = r.get("reps", 200)
    template = build_dgp(cfg)
    rows = []
    for chk in checks:
        res = mc.rate_check(chk["statistic"], chk["tau"], N_fixed=r.get("N_fixed", 200),
                            T_grid=tuple(r.get("T_grid", (100, 200, 400, 800))), reps=reps,
                            seed=cfg.get("seed", 20251018), couple_NT=chk.get("couple_NT"),
                            dgp_template=template, workers=cfg.get("threads", 1))
        for T, med in zip(res.T_grid, res.medians):
            rows.append({"statistic": res.statistic, "tau": res.tau, "T": int(T),
                         "median_value": med, "fitted_slope": "", "theoretical_slope": ""})
        rows.append({"statistic": res.statistic, "tau": res.tau, "T": "slope",
                     "median_value": "", "fitted_slope": res.fitted_slope,
                     "theoretical_slope": res.theoretical_slope})
    report.write_csv(os.path.join(out, "rate.csv"), RATE_FIELDS, rows, _meta("rate", cfg, reps))
    _write_provenance(out, "rate", cfg)
    return rows


def build_parser():
    p = argparse.ArgumentParser(prog="ccekit", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"ccekit {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("table", "sweep", "rate"):
        s = sub.add_parser(name)
        s.add_argument("--config", help="JSON config (default: built-in config)")
        s.add_argument("--out", default=".", help="output directory")
        s.add_argument("--reps", type=int)
        s.add_argument("--seed", type=int)
        s.add_argument("--threads", type=int)
        s.add_argument("--svg", action="store_true", help="also write an SVG chart (sweep)")
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = effective_config(args)
        build_dgp(cfg)
        os.makedirs(args.out, exist_ok=True)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TypeError, ValueError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.command == "table":
            cmd_table(cfg, args.out)
        elif args.command == "sweep":
            cmd_sweep(cfg, args.out, svg=args.svg)
        else:
            cmd_rate(cfg, args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # runtime failure, reported not raised
        log.debug("run failed", exc_info=True)
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
