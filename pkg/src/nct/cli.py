"""Command-line entry point: JSON job files in, deterministic JSON reports out.

    nct torsion job.json
    nct cs src/nct/examples/example3.json
    nct decompose --group S3
    nct pair-cover --N 128 --profile hat --cocycle tau.json
    nct check --suite core
"""
from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .base_geometry import make_grid
from .connections import chern, cs, flat_bundle, integrate_blocks
from .cover_pairing import (DiscreteCover, bump_section, make_h, pair_injective, partition_residual,
                            self_adjoint_residual)
from .group_core import (Group, build_group, class_function_from_block_traces, identity_trace, wedderburn,
                         wedderburn_report)
from .hodge import hodge_residuals, laplacian, make_complex, make_module, random_complex
from .nc_forms import GroupCocycle, cyclic_from_group
from .torsion import (RelativeFamily, large_t_slope, relative_torsion, torsion_degree0, torsion_form)

KINDS = ["torsion", "relative-torsion", "cs", "chern", "pair-cover", "decompose", "check"]
DEFAULT_CONFIG = {"tol": 1e-6, "stencil": "spectral", "q_max": 2, "seed": 0, "compare_tol": 1e-4}

_bmat = {
    "oneOf": [
        {"type": "array"},
        {"type": "object", "properties": {"real": {"type": "array"}, "imag": {"type": "array"}},
         "required": ["real"], "additionalProperties": False},
    ]
}
_module = {
    "oneOf": [
        {"type": "integer", "minimum": 0},
        {"type": "object", "properties": {"N": {"type": "integer", "minimum": 0}, "e": _bmat},
         "required": ["N"], "additionalProperties": False},
    ]
}
_complex = {
    "type": "object",
    "properties": {
        "modules": {"type": "array", "items": _module, "minItems": 1},
        "v": {"type": "array", "items": _bmat},
        "metrics": {"type": "array", "items": {"oneOf": [{"type": "null"}, _bmat]}},
    },
    "required": ["modules", "v"],
    "additionalProperties": False,
}
_random_complex = {
    "type": "object",
    "properties": {
        "ranks": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1},
        "harmonic": {"type": "array", "items": {"type": "integer", "minimum": 0}},
        "gap": {"type": "number", "exclusiveMinimum": 0},
        "seed": {"type": "integer"},
    },
    "required": ["ranks"],
    "additionalProperties": False,
}
_cocycle = {
    "type": "object",
    "properties": {
        "k": {"type": "integer", "minimum": 0, "maximum": 2},
        "kind": {"enum": ["linear"]},
        "coeffs": {},
        "x": {"oneOf": [{"const": "e"}, {"type": "array", "items": {"type": "integer"}}]},
        "validate": {"type": "boolean"},
    },
    "required": ["k", "coeffs"],
    "additionalProperties": False,
}

JOB_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "properties": {
        "kind": {"enum": KINDS},
        "group": {"oneOf": [{"type": "string"}, {"type": "object", "required": ["kind"]}]},
        "complex": _complex,
        "random_complex": _random_complex,
        "relative": {
            "type": "object",
            "properties": {
                "W": _complex, "W_tilde": _complex,
                "T": {"type": "array", "items": _bmat},
                "cutoff": {"type": "number", "exclusiveMinimum": 0},
            },
            "required": ["W", "W_tilde", "T"],
            "additionalProperties": False,
        },
        "family": {
            "type": "object",
            "properties": {
                "base": {
                    "type": "object",
                    "properties": {
                        "kind": {"enum": ["circle"]},
                        "N": {"type": "integer", "minimum": 8},
                        "stencil": {"enum": ["spectral", "central2", "central4", "forward1"]},
                    },
                    "additionalProperties": False,
                },
                "holonomy": _bmat,
                "metric": _bmat,
                "metric_of_theta": _bmat,
                "t": {"type": "number", "exclusiveMinimum": 0},
            },
            "required": ["holonomy"],
            "additionalProperties": False,
        },
        "cover": {
            "type": "object",
            "properties": {
                "N": {"type": "integer", "minimum": 4},
                "profile": {"enum": ["indicator", "hat", "bump"]},
                "stencil": {"enum": ["central2", "forward1", "backward1"]},
            },
            "additionalProperties": False,
        },
        "cocycle": _cocycle,
        "suite": {"enum": ["core", "cover"]},
        "config": {
            "type": "object",
            "properties": {
                "tol": {"type": "number", "exclusiveMinimum": 0},
                "compare_tol": {"type": "number", "exclusiveMinimum": 0},
                "stencil": {"enum": ["spectral", "central2", "central4", "forward1"]},
                "q_max": {"type": "integer", "minimum": 0, "maximum": 3},
                "seed": {"type": "integer"},
            },
            "additionalProperties": False,
        },
        "description": {"type": "string"},
    },
    "required": ["kind"],
    "additionalProperties": False,
}


class SpecError(ValueError):
    pass


def _pointer(path) -> str:
    return "/" + "/".join(str(p) for p in path)


def validate_job(job: dict) -> dict:
    """Validate against the job schema and fill defaults; errors name JSON pointers."""
    errors = sorted(jsonschema.Draft202012Validator(JOB_SCHEMA).iter_errors(job), key=lambda e: list(e.path))
    if errors:
        lines = [f"{_pointer(e.absolute_path)}: {e.message}" for e in errors]
        raise SpecError("invalid job spec:\n  " + "\n  ".join(lines))
    job = dict(job)
    job["config"] = {**DEFAULT_CONFIG, **job.get("config", {})}
    kind = job["kind"]
    needs = {"torsion": ["group"], "relative-torsion": ["group", "relative"], "cs": ["group", "family"],
             "chern": ["group", "family"], "pair-cover": ["cocycle"], "decompose": ["group"]}
    for key in needs.get(kind, []):
        if key not in job:
            raise SpecError(f"/{key}: required for kind {kind!r}")
    if kind == "torsion" and not ("complex" in job or "random_complex" in job):
        raise SpecError("/complex: torsion jobs need 'complex' or 'random_complex'")
    return job


def parse_spec(path) -> dict:
    with open(path) as fh:
        job = json.load(fh)
    return validate_job(job)


# ----------------------------------------------------------------------------
# decoding numeric payloads


def decode_bmat(obj) -> np.ndarray:
    if isinstance(obj, dict):
        re = np.asarray(obj["real"], dtype=float)
        im = np.asarray(obj.get("imag", np.zeros_like(re)), dtype=float)
        return re + 1j * im
    return np.asarray(obj, dtype=complex)


def build_complex(G: Group, spec: dict, seed: int = 0):
    if "ranks" in spec and "v" not in spec:
        rng = np.random.default_rng(spec.get("seed", seed))
        return random_complex(G, spec["ranks"], rng, harmonic=spec.get("harmonic"), gap=spec.get("gap"))
    mods = [m if isinstance(m, int) else make_module(G, m["N"], decode_bmat(m["e"]) if "e" in m else None)
            for m in spec["modules"]]
    v = [decode_bmat(x) for x in spec["v"]]
    mets = spec.get("metrics")
    mets = None if mets is None else [None if m is None else decode_bmat(m) for m in mets]
    return make_complex(G, mods, v, mets)


def build_cocycle(spec: dict) -> GroupCocycle:
    G = build_group("Z")
    x = spec.get("x", "e")
    x = G.identity if x == "e" else tuple(x)
    return GroupCocycle.linear(G, spec["k"], spec["coeffs"], x=x)


# ----------------------------------------------------------------------------
# report serialization


def _plain(obj, timing: bool):
    if isinstance(obj, dict):
        return {str(k): _plain(v, timing) for k, v in obj.items() if timing or k != "wall_time"}
    if isinstance(obj, (list, tuple)):
        return [_plain(v, timing) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist(), timing)
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    return obj


def _emit(obj, indent=0) -> str:
    pad = "  " * (indent + 1)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(k)}: {_emit(obj[k], indent + 1)}" for k in sorted(obj)]
        return "{\n" + ",\n".join(items) + "\n" + "  " * indent + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list)) for v in obj):
            return "[" + ", ".join(_emit(v, indent) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + _emit(v, indent + 1) for v in obj) + "\n" + "  " * indent + "]"
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, float):
        if not math.isfinite(obj):
            return json.dumps(repr(obj))
        text = format(obj, ".17g")
        return text if any(c in text for c in ".en") else text + ".0"
    return json.dumps(obj)


def dumps_report(report: dict, timing: bool = False) -> str:
    """Byte-stable JSON: sorted keys, floats with 17 significant digits."""
    return _emit(_plain(report, timing)) + "\n"


def _class_table(cf):
    if cf is None:
        return None
    labels = cf.labels()
    return {labels[k]: v for k, v in sorted(cf.values.items(), key=lambda kv: str(kv[0]))}


def _check(value, tol, passed=None):
    value = float(value)
    return {"value": value, "tol": float(tol), "passed": bool(value <= tol if passed is None else passed)}


# ----------------------------------------------------------------------------
# job runners


def run_torsion(job):
    cfg = job["config"]
    G = build_group(job["group"])
    cx = build_complex(G, job.get("complex") or job["random_complex"], cfg["seed"])
    rep = torsion_form(cx, tol=cfg["tol"])
    closed = torsion_degree0(cx)
    diff = np.abs(np.asarray(rep.values) - np.asarray(closed.values))
    scale = np.maximum(np.abs(np.asarray(closed.values)), 1.0)
    slope = large_t_slope(cx)
    return {
        "per_irrep": rep.values,
        "closed_form_per_irrep": closed.values,
        "class_function": _class_table(rep.class_function),
        "trace_e": rep.trace_e,
        "diagnostics": {**rep.diagnostics, "large_t_slope": slope if np.isfinite(slope) else None},
        "checks": {"heat_vs_closed_form": _check((diff / scale).max(initial=0.0), cfg["compare_tol"])},
    }


def run_relative(job):
    cfg = job["config"]
    G = build_group(job["group"])
    r = job["relative"]
    W = build_complex(G, r["W"], cfg["seed"])
    Wt = build_complex(G, r["W_tilde"], cfg["seed"])
    rel = RelativeFamily(W, Wt, [decode_bmat(x) for x in r["T"]], r.get("cutoff", 1.0))
    rep = relative_torsion(rel, tol=cfg["tol"])
    return {"per_irrep": rep.values, "class_function": _class_table(rep.class_function),
            "trace_e": rep.trace_e, "diagnostics": rep.diagnostics, "checks": {}}


def _bundle(job):
    """Flat bundle over the circle with the given holonomy; metric constant or sampled per site."""
    G = build_group(job["group"])
    fam = job["family"]
    base = fam.get("base", {})
    grid = make_grid("circle", base.get("N", 64), base.get("stencil", job["config"]["stencil"]))
    metric = None
    if "metric_of_theta" in fam:
        metric = decode_bmat(fam["metric_of_theta"])
    elif "metric" in fam:
        m = decode_bmat(fam["metric"])
        metric = np.broadcast_to(m, grid.shape + m.shape).copy()
    return G, flat_bundle(G, decode_bmat(fam["holonomy"]), grid, metric=metric)


def run_cs(job):
    G, sc = _bundle(job)
    t = job["family"].get("t", 1.0)
    forms = cs(sc, t=t, stencil=sc.grid.stencil)
    vals = integrate_blocks(forms)
    wd = wedderburn(G)
    return {"per_irrep": vals, "class_function": _class_table(class_function_from_block_traces(wd, vals)),
            "trace_e": identity_trace(wd, vals), "block_dims": wd.dims,
            "checks": {"imaginary_part": _check(np.abs(np.imag(vals)).max(initial=0.0), job["config"]["compare_tol"])}}


def run_chern(job):
    G, sc = _bundle(job)
    t = job["family"].get("t", 1.0)
    fields = chern(sc, t=t, stencil=sc.grid.stencil)
    wd = wedderburn(G)
    rank = [complex(f.get((0, 0)).mean()) if f.get((0, 0)) is not None else 0j for f in fields]
    top = integrate_blocks(fields)
    return {"degree0_per_irrep": rank, "degree1_integral_per_irrep": top, "block_dims": wd.dims,
            "checks": {"flat_degree1": _check(np.abs(top).max(initial=0.0), job["config"]["compare_tol"])}}


def run_pair_cover(job):
    c = job.get("cover", {})
    cover = DiscreteCover(c.get("N", 128), c.get("stencil", "central2"))
    h = make_h(cover, c.get("profile", "hat"))
    tau = build_cocycle(job["cocycle"])
    Z = cyclic_from_group(tau, check=job["cocycle"].get("validate", tau.x == tau.group.identity))
    form, integral = pair_injective(Z, cover, h)
    s1 = bump_section(cover, 0.3, 1.6)
    s2 = bump_section(cover, -0.2, 1.3, phase=0.7)
    sa = self_adjoint_residual(cover, h, s1, s2, parts=True)
    return {"integral": integral, "form_max_abs": float(np.abs(form).max()),
            "self_adjoint_residual": sa,
            "checks": {"partition_identity": _check(partition_residual(cover, h), 1e-12)}}


def run_decompose(job):
    G = build_group(job["group"])
    if not G.is_finite:
        raise SpecError("/group: decompose needs a finite group")
    wd = wedderburn(G, seed=job["config"]["seed"])
    res = wedderburn_report(wd)
    return {"group": G.name, "order": G.order, "block_dims": wd.dims,
            "characters": wd.characters,
            "checks": {k: _check(v, 1e-10) for k, v in res.items()}}


def _suite_core(seed):
    from .connections import pairing_per_irrep, cs_block
    from .group_core import AlgebraElement
    from .nc_forms import cyclicity_residual, hochschild_residual
    from .torsion import g_eval
    checks = {}
    for name in ("C", "Z2", "Z3", "S3"):
        res = wedderburn_report(wedderburn(build_group(name)))
        checks[f"wedderburn_{name}"] = _check(max(res.values()), 1e-10)
    rng = np.random.default_rng(seed)
    worst = {"P2": 0.0, "Pstar": 0.0, "GDelta": 0.0}
    for k, name in enumerate(("C", "Z2", "Z3", "S3")):
        G = build_group(name)
        cx = random_complex(G, [1, 1], rng, gap=2.0)
        res = hodge_residuals(laplacian(cx))
        for key in worst:
            worst[key] = max(worst[key], res[key])
    checks.update({f"hodge_{k}": _check(v, 1e-10) for k, v in worst.items()})
    Zg = build_group("Z")
    Z = cyclic_from_group(GroupCocycle.linear(Zg, 1, [1.0]))
    cyc = hoch = 0.0
    for _ in range(20):
        el = [AlgebraElement(Zg, {(int(rng.integers(-3, 4)),): complex(rng.normal(), rng.normal())
                                  for _ in range(3)}) for _ in range(3)]
        cyc = max(cyc, abs(cyclicity_residual(Z, el[:2])))
        hoch = max(hoch, abs(hochschild_residual(Z, el)))
    checks["cocycle_cyclicity"] = _check(cyc, 1e-12)
    checks["cocycle_hochschild"] = _check(hoch, 1e-12)
    checks["g_at_zero"] = _check(abs(g_eval(0.0) + 1.0), 1e-12)
    G = build_group("Z2")
    sc = flat_bundle(G, np.array([[[2.0, 1.0]]]), make_grid("circle", 64))
    vals = [integrate_blocks([cs_block(bs)])[0] for bs in pairing_per_irrep(sc, lambda b: b)]
    checks["example3_cs"] = _check(np.abs(np.asarray(vals) - [2 * np.log(3), 0.0]).max(), 1e-6)
    cx = make_complex(G, [1, 1], [np.array([[[2.0, 1.0]]])])
    rep = torsion_form(cx)
    checks["z2_torsion"] = _check(np.abs(np.asarray(rep.values) - [-np.log(9), 0.0]).max(), 1e-4)
    return checks


def _suite_cover(seed):
    from .cover_pairing import linear_cocycle, refinement_order
    checks = {}
    Zc = cyclic_from_group(linear_cocycle())
    Zx = cyclic_from_group(linear_cocycle(x=5), check=False)
    spread, vanish = [], 0.0
    for N in (128, 256):
        vals = []
        for prof in ("indicator", "hat", "bump"):
            cover = DiscreteCover(N, "forward1" if prof == "indicator" else "central2")
            h = make_h(cover, prof)
            vals.append(pair_injective(Zc, cover, h)[1])
            vanish = max(vanish, float(np.abs(pair_injective(Zx, cover, h)[0]).max()))
        spread.append(float(np.abs(np.asarray(vals) - vals[0]).max() / abs(vals[0])))
    checks["x_not_e_vanishes"] = _check(vanish, 0.0)
    checks["h_independence"] = _check(max(spread), 1e-2)
    for stencil, order in (("forward1", 0.9), ("central2", 1.8)):
        res = []
        for N in (64, 128, 256):
            cover = DiscreteCover(N, stencil)
            h = make_h(cover, "hat")
            res.append(self_adjoint_residual(cover, h, bump_section(cover, 0.3, 1.6),
                                             bump_section(cover, -0.2, 1.3, phase=0.7)))
        measured = float(refinement_order(res, (64, 128, 256)).min())
        checks[f"self_adjoint_order_{stencil}"] = {"value": measured, "tol": order,
                                                   "passed": bool(measured >= order)}
    return checks


SUITES = {"core": _suite_core, "cover": _suite_cover}


def run_check(job):
    suite = job.get("suite", "core")
    return {"suite": suite, "checks": SUITES[suite](job["config"]["seed"])}


RUNNERS = {"torsion": run_torsion, "relative-torsion": run_relative, "cs": run_cs, "chern": run_chern,
           "pair-cover": run_pair_cover, "decompose": run_decompose, "check": run_check}


def run(job: dict, timing: bool = False):
    """Run a validated job; returns (report, exit_code)."""
    start = time.perf_counter()
    result = RUNNERS[job["kind"]](job)
    checks = result.get("checks", {})
    passed = all(c["passed"] for c in checks.values())
    report = {"version": __version__, "kind": job["kind"], "job": job, "result": result, "passed": passed}
    if timing:
        report["wall_time"] = time.perf_counter() - start
    return report, 0 if passed else 1


# ----------------------------------------------------------------------------
# argument parsing


def _parser():
    p = argparse.ArgumentParser(prog="nct", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"nct {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for kind in KINDS:
        s = sub.add_parser(kind)
        s.add_argument("spec", nargs="?", help="JSON job file")
        s.add_argument("--tol", type=float)
        s.add_argument("--seed", type=int)
        s.add_argument("--q-max", type=int, dest="q_max")
        s.add_argument("--grid", type=int, help="circle grid size N")
        s.add_argument("--out", help="write the report here instead of stdout")
        s.add_argument("--timing", action="store_true", help="include wall time (breaks byte stability)")
        if kind in ("decompose", "torsion", "cs", "chern", "relative-torsion"):
            s.add_argument("--group")
        if kind == "pair-cover":
            s.add_argument("--N", type=int)
            s.add_argument("--profile", choices=["indicator", "hat", "bump"])
            s.add_argument("--stencil", choices=["central2", "forward1", "backward1"])
            s.add_argument("--cocycle", help="JSON file with a cocycle spec")
        if kind == "check":
            s.add_argument("--suite", choices=["core", "cover"])
    return p


def job_from_args(args) -> dict:
    job = {}
    if args.spec:
        with open(args.spec) as fh:
            job = json.load(fh)
    if job.get("kind", args.command) != args.command:
        raise SpecError(f"/kind: file declares {job['kind']!r} but the subcommand is {args.command!r}")
    job["kind"] = args.command
    cfg = dict(job.get("config", {}))
    for key in ("tol", "seed", "q_max"):
        if getattr(args, key, None) is not None:
            cfg[key] = getattr(args, key)
    if cfg:
        job["config"] = cfg
    if getattr(args, "group", None):
        job["group"] = args.group
    if args.grid is not None and args.command in ("cs", "chern"):
        fam = dict(job.get("family", {}))
        fam["base"] = {**fam.get("base", {}), "kind": "circle", "N": args.grid}
        job["family"] = fam
    if args.command == "pair-cover":
        cover = dict(job.get("cover", {}))
        for key in ("N", "profile", "stencil"):
            if getattr(args, key) is not None:
                cover[key] = getattr(args, key)
        if cover:
            job["cover"] = cover
        if args.cocycle:
            with open(args.cocycle) as fh:
                job["cocycle"] = json.load(fh)
        job.setdefault("cocycle", {"k": 1, "coeffs": [1.0]})
    if args.command == "check" and args.suite:
        job["suite"] = args.suite
    return validate_job(job)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        job = job_from_args(args)
        report, code = run(job, timing=args.timing)
    except (SpecError, OSError, json.JSONDecodeError) as exc:
        print(f"nct: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError) as exc:
        print(f"nct {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    text = dumps_report(report, timing=args.timing)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
