"""Command line front end.

Every subcommand takes its settings from flags, from a JSON ``--config``
file with the same keys (flag names with dashes or underscores), or both;
flags win.  Outputs start with a comment line holding the resolved
configuration and the code version.  Results depend only on that
configuration, never on ``--workers``.

Exit codes: 0 success, 2 configuration error, 3 resource guard, 4 invalid
model.  Errors are also written to stderr as one JSON record.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass
from typing import Any, Callable

import numpy as np

from . import __version__
from .asymptotics import degenerate_band_scan, limit_constant, v_theta
from .diagnostics import (Band, band_l2, standard_battery, validate_empirically)
from .errors import (GWFractalError, ModelInvalidError, ParameterError,
                     ResourceGuardError, UnsupportedModelError)
from .geometry import sincos
from .favard import favard_length, replicate_table
from .models import (BUILTIN_DEFAULT_L, DiscModel, check_memory_guard, load_model,
                     make_builtin, sample_chain)
from .quadrature import QuadratureRule
from .rng import Stream
from .survival import expected_favard_exact, line_statistics
from .parallel import map_chunks

EXIT_OK, EXIT_CONFIG, EXIT_RESOURCE, EXIT_MODEL = 0, 2, 3, 4


class ConfigError(Exception):
    def __init__(self, messages: list[str]):
        super().__init__("; ".join(messages))
        self.messages = messages


# --- value parsing ---------------------------------------------------------


def parse_int_list(text) -> list[int]:
    """``"1..12"``, ``"1,3,5"``, ``4`` or a JSON list."""
    if isinstance(text, bool):
        raise ValueError("expected integers")
    if isinstance(text, int):
        return [text]
    if isinstance(text, list):
        if not all(isinstance(v, int) and not isinstance(v, bool) for v in text):
            raise ValueError("expected a list of integers")
        return list(text)
    out: list[int] = []
    for part in str(text).split(","):
        part = part.strip()
        if ".." in part:
            a, b = part.split("..")
            lo, hi = int(a), int(b)
            if hi < lo:
                raise ValueError(f"empty range {part}")
            out.extend(range(lo, hi + 1))
        else:
            out.append(int(part))
    return out


def parse_float_list(text) -> list[float]:
    if isinstance(text, (int, float)) and not isinstance(text, bool):
        return [float(text)]
    if isinstance(text, list):
        return [float(v) for v in text]
    return [float(v) for v in str(text).split(",")]


def parse_bool(v) -> bool:
    if isinstance(v, bool):
        return v
    if str(v).lower() in ("1", "true", "yes"):
        return True
    if str(v).lower() in ("0", "false", "no"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _int(v) -> int:
    if isinstance(v, bool) or (isinstance(v, float) and not v.is_integer()):
        raise ValueError(f"not an integer: {v!r}")
    return int(v)


def _str(v) -> str:
    if not isinstance(v, str):
        raise ValueError(f"not a string: {v!r}")
    return v


PARSERS: dict[str, Callable[[Any], Any]] = {
    "int": _int, "float": float, "str": _str, "ints": parse_int_list,
    "floats": parse_float_list, "bool": parse_bool,
}


@dataclass(frozen=True)
class Option:
    kind: str
    default: Any
    help: str


COMMON = {
    "model": Option("str", None, "builtin model name"),
    "model_file": Option("str", None, "JSON model description"),
    "L": Option("int", None, "grid size (builtin default if omitted)"),
    "seed": Option("int", None, "global seed (required for stochastic commands)"),
}

COMMANDS: dict[str, dict[str, Option]] = {
    "sample": {"n": Option("int", 6, "depth")},
    "favard": {
        "n": Option("int", 8, "depth"),
        "chains": Option("int", 1, "number of independent chains"),
        "theta_nodes": Option("int", 256, "angle nodes"),
        "fatten": Option("float", 0.0, "neighbourhood radius"),
    },
    "expected": {
        "n": Option("ints", "1..8", "depths, e.g. 1..12"),
        "reps": Option("int", 1000, "replicates"),
        "theta_nodes": Option("int", 256, "angle nodes"),
        "condition_on_survival": Option("bool", False, "reject extinct chains"),
    },
    "exact-expected": {
        "n": Option("ints", "0..4", "depths"),
        "theta_nodes": Option("int", 128, "angle nodes"),
        "t_nodes": Option("int", 1024, "offset nodes per angle"),
    },
    "survival": {
        "n": Option("int", 4, "depth"),
        "thetas": Option("floats", None, "angles (default: 8 midpoints of [0, pi])"),
        "t_nodes": Option("int", 64, "offset nodes per angle"),
    },
    "vtheta": {"angles": Option("int", 128, "equally spaced angles in [0, pi]")},
    "limit": {"nodes": Option("int", 512, "angle nodes")},
    "ratio": {
        "n": Option("int", 12, "largest depth"),
        "chains": Option("int", 100, "traced chains"),
        "reps": Option("int", 1000, "replicates for the reference means"),
        "theta_nodes": Option("int", 256, "angle nodes"),
    },
    "deg-scan": {
        "n": Option("int", 12, "depth"),
        "ks": Option("ints", "1,2,3", "band indices"),
        "t_nodes": Option("int", 256, "initial offset nodes"),
        "tol": Option("float", 1e-4, "refinement tolerance"),
    },
    "bv": {
        "n": Option("ints", "4..10", "depths"),
        "theta_nodes": Option("int", 64, "angle nodes per band"),
    },
    "bounds": {"trials": Option("int", 100000, "trials per case")},
}

STOCHASTIC = {"sample", "favard", "expected", "ratio", "bv", "bounds"}
NEEDS_MODEL = set(COMMANDS) - {"bounds"}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gwfractal", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name, opts in COMMANDS.items():
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON file with settings")
        sp.add_argument("--out", help="output file (default: stdout)")
        sp.add_argument("--workers", type=int, default=1, help="worker processes")
        for key, opt in {**COMMON, **opts}.items():
            flag = "--" + key.replace("_", "-")
            if opt.kind == "bool":
                sp.add_argument(flag, dest=key, nargs="?", const="true", default=None, help=opt.help)
            else:
                sp.add_argument(flag, dest=key, default=None, help=opt.help)
    return p


def resolve_config(command: str, args: argparse.Namespace) -> dict:
    """Merge defaults, the config file and flags; collect every problem."""
    opts = {**COMMON, **COMMANDS[command]}
    errors: list[str] = []
    raw: dict[str, Any] = {k: o.default for k, o in opts.items()}
    if getattr(args, "config", None):
        try:
            with open(args.config) as fh:
                filecfg = json.load(fh)
            if not isinstance(filecfg, dict):
                raise ValueError("top level must be an object")
        except (OSError, ValueError) as exc:
            raise ConfigError([f"cannot read config {args.config}: {exc}"]) from exc
        for key, val in filecfg.items():
            k = key.replace("-", "_")
            if k not in opts:
                errors.append(f"unknown config key {key!r} for {command}")
            else:
                raw[k] = val
    for k in opts:
        v = getattr(args, k, None)
        if v is not None:
            raw[k] = v
    cfg: dict[str, Any] = {}
    for k, opt in opts.items():
        v = raw[k]
        if v is None:
            cfg[k] = None
            continue
        try:
            cfg[k] = PARSERS[opt.kind](v)
        except (TypeError, ValueError) as exc:
            errors.append(f"{k}: {exc}")
    errors += _semantic_errors(command, cfg)
    if errors:
        raise ConfigError(errors)
    return cfg


def _positive(cfg, keys, errors):
    for k in keys:
        v = cfg.get(k)
        if v is not None and v < 1:
            errors.append(f"{k} must be a positive integer, got {v}")


def _semantic_errors(command: str, cfg: dict) -> list[str]:
    errors: list[str] = []
    if command in STOCHASTIC and cfg.get("seed") is None:
        errors.append(f"{command} is stochastic: --seed is required")
    if cfg.get("seed") is not None and cfg["seed"] < 0:
        errors.append("seed must be non-negative")
    if command in NEEDS_MODEL:
        if cfg.get("model") is None and cfg.get("model_file") is None:
            errors.append("one of --model or --model-file is required")
        if cfg.get("model") is not None and cfg.get("model_file") is not None:
            errors.append("--model and --model-file are mutually exclusive")
        if cfg.get("model") is not None and cfg["model"] not in BUILTIN_DEFAULT_L:
            errors.append(f"unknown model {cfg['model']!r}; choose from "
                          + ", ".join(sorted(BUILTIN_DEFAULT_L)))
    if cfg.get("L") is not None and cfg["L"] < 2:
        errors.append("L must be at least 2")
    _positive(cfg, ["reps", "chains", "theta_nodes", "t_nodes", "angles", "nodes", "trials"], errors)
    n = cfg.get("n")
    for v in (n if isinstance(n, list) else [n] if n is not None else []):
        if v < 0:
            errors.append(f"depth {v} must be non-negative")
    if command in ("ratio",) and n is not None and n < 1:
        errors.append("ratio needs n >= 1")
    if command == "bv" and isinstance(n, list) and any(v < 2 for v in n):
        errors.append("bv needs depths n >= 2 (bands need k <= log_L n)")
    if command == "limit" and cfg.get("nodes") is not None and cfg["nodes"] % 4:
        errors.append("limit nodes must be a multiple of 4")
    if cfg.get("fatten") is not None and cfg["fatten"] < 0:
        errors.append("fatten must be non-negative")
    if cfg.get("tol") is not None and not cfg["tol"] > 0:
        errors.append("tol must be positive")
    if cfg.get("thetas") is not None and any(not 0 <= t <= math.pi for t in cfg["thetas"]):
        errors.append("angles must lie in [0, pi]")
    if cfg.get("ks") is not None and any(k < 0 for k in cfg["ks"]):
        errors.append("band indices must be non-negative")
    return errors


def build_model(cfg: dict):
    if cfg.get("model_file"):
        model = load_model(cfg["model_file"])
        if cfg.get("L") is not None and cfg["L"] != model.L:
            raise ParameterError(f"--L {cfg['L']} disagrees with the model file (L={model.L})")
        return model
    return make_builtin(cfg["model"], cfg.get("L"))


# --- formatting ------------------------------------------------------------


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    return str(v)


def _json_value(v):
    if isinstance(v, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {_json_value(x)}"
                               for k, x in v.items()) + "}"
    if isinstance(v, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_json_value(x) for x in v) + "]"
    if isinstance(v, (float, np.floating)):
        x = float(v)
        return fmt(x) if math.isfinite(x) else "null"
    if isinstance(v, (bool, np.bool_)) or v is None:
        return json.dumps(None if v is None else bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return json.dumps(v)


def config_line(command: str, cfg: dict, model_id: str | None) -> str:
    rec = {"command": command, "code_version": __version__, "model_id": model_id}
    rec.update({k: cfg[k] for k in sorted(cfg)})
    return "# " + _json_value(rec)


def csv_text(command, cfg, model_id, header, rows) -> str:
    lines = [config_line(command, cfg, model_id), ",".join(header)]
    lines += [",".join(fmt(v) for v in r) for r in rows]
    return "\n".join(lines) + "\n"


def json_text(command, cfg, model_id, payload: dict) -> str:
    rec = {"config": json.loads(config_line(command, cfg, model_id)[2:])}
    rec.update(payload)
    return _json_value(rec) + "\n"


# --- commands --------------------------------------------------------------


def _stream(cfg, command) -> Stream:
    return Stream(cfg["seed"]).child(command)


def cmd_sample(cfg, model, workers):
    real = sample_chain(model, cfg["n"], _stream(cfg, "sample"))
    levels = [lv.tolist() if real.is_grid else [[float(a), float(b)] for a, b in lv]
              for lv in real.levels]
    return json_text("sample", cfg, model.model_id, {
        "n": real.n, "levels": levels, "z_trace": [float(z) for z in real.z_trace]})


def _favard_chunk(chains, model, n, nodes, fatten, stream):
    out = []
    for c in chains:
        real = sample_chain(model, n, stream.child(c))
        est = favard_length(real, QuadratureRule(nodes), fatten)
        out.append((c, n, est.value, est.error, float(real.z_trace[n])))
    return out


def cmd_favard(cfg, model, workers):
    parts = map_chunks(_favard_chunk, list(range(cfg["chains"])), workers,
                       (model, cfg["n"], cfg["theta_nodes"], cfg["fatten"], _stream(cfg, "favard")))
    rows = [r for p in parts for r in p]
    return csv_text("favard", cfg, model.model_id,
                    ["chain_id", "n", "fav", "refinement_error", "z_n"], rows)


def cmd_expected(cfg, model, workers):
    ns = cfg["n"]
    tab = replicate_table(model, max(ns), cfg["reps"], QuadratureRule(cfg["theta_nodes"]),
                          _stream(cfg, "expected"), workers, cfg["condition_on_survival"])
    rows = []
    for n in ns:
        e = tab.estimate(n)
        rows.append((model.model_id, model.L, n, e.replicates, e.theta_nodes, e.mean,
                     e.stderr, e.mean_z, cfg["seed"]))
    return csv_text("expected", cfg, model.model_id,
                    ["model_id", "L", "n", "replicates", "theta_nodes", "mean_fav",
                     "stderr", "mean_z", "seed"], rows)


def cmd_exact_expected(cfg, model, workers):
    rows = []
    for n in cfg["n"]:
        e = expected_favard_exact(model, n, cfg["theta_nodes"], cfg["t_nodes"], workers=workers)
        rows.append((model.model_id, model.L, n, cfg["theta_nodes"], cfg["t_nodes"],
                     e.value, e.error))
    return csv_text("exact-expected", cfg, model.model_id,
                    ["model_id", "L", "n", "theta_nodes", "t_nodes", "e_fav",
                     "refinement_error"], rows)


def cmd_survival(cfg, model, workers):
    thetas = cfg["thetas"]
    if thetas is None:
        thetas = list((np.arange(8) + 0.5) * math.pi / 8)
    rule = QuadratureRule(cfg["t_nodes"])
    rows = []
    for th in thetas:
        s, c = sincos(th)
        ts, _ = rule.offsets(min(0.0, -s, c, c - s), max(0.0, -s, c, c - s))
        st = line_statistics(model, th, ts, cfg["n"])
        rows += [(th, t, cfg["n"], p) for t, p in zip(ts, st.survival)]
    return csv_text("survival", cfg, model.model_id, ["theta", "t", "n", "p"], rows)


def _vtheta_chunk(thetas, model):
    out = []
    for th in thetas:
        a = v_theta(model, th, "definition")
        b = v_theta(model, th, "alternative")
        out.append((model.model_id, th, a, b, abs(a - b)))
    return out


def cmd_vtheta(cfg, model, workers):
    thetas = [float(t) for t in np.linspace(0.0, math.pi, cfg["angles"])]
    rows = [r for p in map_chunks(_vtheta_chunk, thetas, workers, (model,)) for r in p]
    return csv_text("vtheta", cfg, model.model_id,
                    ["model_id", "theta", "v_def", "v_alt", "abs_diff"], rows)


def cmd_limit(cfg, model, workers):
    lc = limit_constant(model, cfg["nodes"])
    return json_text("limit", cfg, model.model_id,
                     {"constant": lc.constant, "refinement_error": lc.refinement_error})


def cmd_ratio(cfg, model, workers):
    rule = QuadratureRule(cfg["theta_nodes"])
    stream = _stream(cfg, "ratio")
    ref = replicate_table(model, cfg["n"], cfg["reps"], rule, stream.child("reference"), workers)
    chains = replicate_table(model, cfg["n"], cfg["chains"], rule, stream.child("chains"), workers)
    means = [e.mean for e in ref.estimates()]
    rows = []
    for c in range(cfg["chains"]):
        for n in range(1, cfg["n"] + 1):
            fav = float(chains.favard[c, n])
            rows.append((c, n, fav, float(chains.z[c, n]), fav / means[n]))
    return csv_text("ratio", cfg, model.model_id, ["chain_id", "n", "fav", "z_n", "ratio"], rows)


def cmd_deg_scan(cfg, model, workers):
    rows = degenerate_band_scan(model, cfg["n"], cfg["ks"], QuadratureRule(cfg["t_nodes"]), cfg["tol"])
    return csv_text("deg-scan", cfg, model.model_id,
                    ["k", "theta", "n", "e_proj", "ratio_n_over_Lk"],
                    [(r.k, r.theta, r.n, r.e_proj, r.ratio_n_over_Lk) for r in rows])


def cmd_bv(cfg, model, workers):
    ns = cfg["n"]
    real = sample_chain(model, max(ns), _stream(cfg, "bv"))
    rows = []
    for n in ns:
        sub = type(real)(real.model, real.levels[: n + 1], real.z_trace[: n + 1])
        kmax = int(math.floor(math.log(n) / math.log(model.L) + 1e-12))
        for k in range(1, kmax + 1):
            v = band_l2(sub, Band(k, model.L), QuadratureRule(cfg["theta_nodes"]))
            rows.append((n, k, v, v * float(model.L) ** (2 * k) / n))
    return csv_text("bv", cfg, model.model_id, ["n", "k", "band_l2", "scaled"], rows)


def cmd_bounds(cfg, model, workers):
    stream = _stream(cfg, "bounds")
    rows = []
    for sampler, eps in standard_battery():
        r = validate_empirically(sampler, eps, cfg["trials"], stream)
        rows.append((r.kind, r.sampler, r.epsilon, r.bound, r.frequency, r.trials, r.ok))
    return csv_text("bounds", cfg, None,
                    ["kind", "sampler", "epsilon", "bound", "frequency", "trials", "ok"], rows)


HANDLERS = {
    "sample": cmd_sample, "favard": cmd_favard, "expected": cmd_expected,
    "exact-expected": cmd_exact_expected, "survival": cmd_survival, "vtheta": cmd_vtheta,
    "limit": cmd_limit, "ratio": cmd_ratio, "deg-scan": cmd_deg_scan, "bv": cmd_bv,
    "bounds": cmd_bounds,
}


def _depths(cfg) -> list[int]:
    n = cfg.get("n")
    return n if isinstance(n, list) else [] if n is None else [n]


def _fail(kind: str, messages: list[str], code: int) -> int:
    sys.stderr.write(json.dumps({"error": kind, "messages": messages}) + "\n")
    return code


def run(argv: list[str] | None = None) -> tuple[int, str]:
    """Parse, validate and execute; returns ``(exit_code, output_text)``."""
    args = build_parser().parse_args(argv)
    command = args.command
    try:
        if args.workers < 1:
            raise ConfigError(["workers must be a positive integer"])
        cfg = resolve_config(command, args)
    except ConfigError as exc:
        return _fail("config", exc.messages, EXIT_CONFIG), ""
    try:
        model = build_model(cfg) if command in NEEDS_MODEL else None
        if model is not None:
            cfg["L"] = model.L
            for n in _depths(cfg):
                check_memory_guard(model, n)
            if isinstance(model, DiscModel) and command not in ("sample", "favard", "expected", "ratio"):
                raise UnsupportedModelError(f"{command} needs a grid model")
        text = HANDLERS[command](cfg, model, args.workers)
    except ResourceGuardError as exc:
        return _fail(exc.kind, [str(exc)], EXIT_RESOURCE), ""
    except ModelInvalidError as exc:
        return _fail(exc.kind, [str(exc)], EXIT_MODEL), ""
    except (ParameterError, UnsupportedModelError) as exc:
        return _fail(exc.kind, [str(exc)], EXIT_CONFIG), ""
    except GWFractalError as exc:
        return _fail(exc.kind, [str(exc)], EXIT_CONFIG), ""
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK, text


def main(argv: list[str] | None = None) -> int:
    code, _ = run(argv)
    return code


if __name__ == "__main__":
    sys.exit(main())
