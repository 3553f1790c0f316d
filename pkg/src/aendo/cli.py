"""Command-line driver: parse a run config, run one analysis, write reports and rasters.

Config files hold one ``key = value`` per line with ``#`` comments, e.g.::

    model = product
    k = 2
    amplitude = 0.1
    grid = 128
    eps = 0.2, 0.1, 0.05, 0.025

Reports are JSON with sorted keys so that identical runs give identical bytes;
wall-clock timings go to a separate ``timing.json``.
"""

from __future__ import annotations

import argparse
import configparser
import json
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from .errors import AendoError, BudgetExceeded, ConfigError, PreconditionError
from .geometry import infinity, is_infinite, point_from_raw, sphere_point, to_array, wrap
from .models import Endomorphism, Product, Quadratic, from_params
from .natural_extension import grow_preimage_tree
from .spectral.graph import build_transition_graph, chain_recurrent_cells
from .spectral.grid import BoxGrid
from .spectral.sets import decompose_basic_sets, in_set_branches
from .spectral.smoothness import attractor_smoothness, repeller_curve_quotients
from .spectral.verdicts import (
    DEFAULT_EPS,
    basin_labels,
    classify_attractor,
    classify_repeller,
    verify_axiom_a,
    verify_expanding_derivative,
    verify_expanding_metric,
)
from .hyperbolic import verify_hyperbolic

EXIT_OK, EXIT_CONFIG, EXIT_BUDGET = 0, 2, 3
SUBCOMMANDS = ("orbit", "preimages", "spectral", "classify", "verify-expanding", "axiom-a", "render")

MODEL_KEYS = ("model", "k", "matrix", "c_re", "c_im", "amplitude", "kappa")
# key -> (parser, default)
RUN_KEYS: dict[str, tuple] = {
    "grid": (int, 128),
    "depth": (int, 24),
    "eps": ("floats", DEFAULT_EPS),
    "seed": (int, 0),
    "threads": (int, 1),
    "out": (str, "out"),
    "bloat": (float, 0.5),
    "x0": ("floats", None),
    "iterations": (int, 100),
    "tree_depth": (int, 4),
    "node_budget": (float, 1e6),
    "fattenings": (int, 3),
    "max_period": (int, 8),
    "metric_eps": (float, 0.05),
    "n_test": (int, 10),
    "refinements": ("ints", (7, 10)),
    "density_threshold": (float, 0.99),
}


@dataclass
class RunConfig:
    model: dict[str, Any]
    grid: int = 128
    depth: int = 24
    eps: tuple = DEFAULT_EPS
    seed: int = 0
    threads: int = 1
    out: str = "out"
    options: dict[str, Any] = field(default_factory=dict)

    def echo(self) -> dict:
        d = {"model": dict(self.model), "grid": self.grid, "depth": self.depth, "eps": list(self.eps), "seed": self.seed}
        d.update({k: list(v) if isinstance(v, tuple) else v for k, v in sorted(self.options.items())})
        return d


# -- config parsing --------------------------------------------------------------------------------

def _key_lines(text: str) -> dict[str, int]:
    lines = {}
    for i, line in enumerate(text.splitlines(), 1):
        s = line.split("#", 1)[0]
        if "=" in s:
            lines.setdefault(s.split("=", 1)[0].strip().lower(), i)
    return lines


def _parse_value(kind, raw: str):
    if kind == "floats":
        return tuple(float(v) for v in raw.replace(",", " ").split())
    if kind == "ints":
        return tuple(int(v) for v in raw.replace(",", " ").split())
    return kind(raw)


def _parse_matrix(raw: str):
    rows = [r.replace(",", " ").split() for r in raw.split(";")]
    return [[int(v) for v in r] for r in rows if r]


def parse_config(text: str, source: str = "<config>") -> dict[str, Any]:
    """Flat mapping of typed values; raises ConfigError naming the line and key."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    try:
        cp.read_string("[run]\n" + text, source=source)
    except configparser.Error as e:
        raise ConfigError(f"{source}: {e}") from None
    where = _key_lines(text)
    out: dict[str, Any] = {}
    for key, raw in cp["run"].items():
        at = f"{source}:{where.get(key, '?')}: key {key!r}"
        try:
            if key == "matrix":
                out[key] = _parse_matrix(raw)
            elif key == "model":
                out[key] = raw.strip()
            elif key in MODEL_KEYS:
                out[key] = float(raw) if key != "k" else int(raw)
            elif key in RUN_KEYS:
                out[key] = _parse_value(RUN_KEYS[key][0], raw)
            else:
                raise ConfigError(f"{at}: unknown key")
        except ValueError as e:
            raise ConfigError(f"{at}: cannot parse {raw!r} ({e})") from None
        out[f"_line_{key}"] = at
    return out


def build_config(values: dict[str, Any], args: argparse.Namespace | None = None) -> RunConfig:
    """Merge file values with command-line overrides and validate them."""
    vals = {k: v for k, v in values.items() if not k.startswith("_line_")}
    if args is not None:
        for key in ("grid", "depth", "seed", "threads", "out"):
            v = getattr(args, key, None)
            if v is not None:
                vals[key] = v
        if getattr(args, "eps", None):
            vals["eps"] = _parse_value("floats", args.eps)

    def at(key):
        return values.get(f"_line_{key}", f"command line: key {key!r}")

    if "model" not in vals:
        raise ConfigError("config: key 'model' is required")
    model = {k: vals[k] for k in MODEL_KEYS if k in vals}
    run = {k: vals.get(k, RUN_KEYS[k][1]) for k in RUN_KEYS}
    checks = [
        ("grid", run["grid"] >= 4, "must be at least 4"),
        ("depth", run["depth"] >= 1, "must be at least 1"),
        ("eps", len(run["eps"]) > 0 and all(e > 0 for e in run["eps"]), "must be a nonempty list of positive numbers"),
        ("seed", 0 <= run["seed"] < 2**64, "must fit in an unsigned 64-bit integer"),
        ("threads", run["threads"] >= 1, "must be at least 1"),
        ("bloat", run["bloat"] > 0, "must be positive"),
        ("iterations", run["iterations"] >= 0, "must be nonnegative"),
        ("tree_depth", run["tree_depth"] >= 0, "must be nonnegative"),
        ("node_budget", run["node_budget"] >= 1, "must be at least 1"),
        ("fattenings", run["fattenings"] >= 1, "must be at least 1"),
        ("max_period", run["max_period"] >= 1, "must be at least 1"),
        ("metric_eps", run["metric_eps"] > 0, "must be positive"),
        ("n_test", run["n_test"] >= 1, "must be at least 1"),
        ("refinements", all(3 <= m <= 16 for m in run["refinements"]), "entries must lie in 3..16"),
        ("density_threshold", 0 <= run["density_threshold"] <= 1, "must lie in [0, 1]"),
    ]
    for key, ok, msg in checks:
        if not ok:
            raise ConfigError(f"{at(key)}: {msg}")
    try:
        f = from_params(model)
    except (PreconditionError, ValueError, TypeError) as e:
        raise ConfigError(f"{at('model')}: invalid model parameters ({e})") from None
    if run["x0"] is not None:
        need = f.manifold.dimension
        if len(run["x0"]) != need:
            raise ConfigError(f"{at('x0')}: expected {need} numbers")
    opts = {k: v for k, v in run.items() if k not in ("grid", "depth", "eps", "seed", "threads", "out")}
    return RunConfig(model, run["grid"], run["depth"], tuple(run["eps"]), run["seed"], run["threads"], str(run["out"]), opts)


# -- output helpers ---------------------------------------------------------------------------------

def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    return obj


def dump_report(report: dict) -> str:
    return json.dumps(_clean(report), sort_keys=True, indent=2) + "\n"


def pgm_bytes(img) -> bytes:
    img = np.asarray(img, dtype=np.uint8)
    h, w = img.shape
    # row 0 of the raster is the lowest coordinate; images put it at the bottom
    return f"P5\n{w} {h}\n255\n".encode() + np.ascontiguousarray(img[::-1]).tobytes()


def render_cells(cells, grid: BoxGrid, path=None) -> bytes:
    """P5 image with one pixel per cell, 255 for members and 0 otherwise."""
    if not (grid.manifold.is_sphere or (grid.manifold.is_torus and grid.manifold.dimension == 2)):
        raise PreconditionError(f"no raster layout for {grid.manifold}")
    m = grid.mask(cells)
    data = pgm_bytes(grid.raster(np.where(m, 255, 0)))
    if path is not None:
        Path(path).write_bytes(data)
    return data


def render_basins(labels, n_sets: int, grid: BoxGrid) -> bytes:
    """P5 image of basin indices; set i gets gray level 255 (i + 1) / n_sets, unsettled cells 0."""
    lab = np.asarray(labels)
    val = np.where(lab >= 0, np.round(255.0 * (lab + 1) / max(n_sets, 1)), 0).astype(np.uint8)
    return pgm_bytes(grid.raster(val))


def _fmt(v: float) -> str:
    return repr(float(v))


def _point_row(f: Endomorphism, x) -> list[str]:
    if f.manifold.is_sphere:
        if is_infinite(np.array([x]))[0]:
            return ["inf", "inf"]
        return [_fmt(x.real), _fmt(x.imag)]
    return [_fmt(v) for v in np.atleast_1d(x)]


def _start_point(f: Endomorphism, cfg: RunConfig):
    x0 = cfg.options.get("x0")
    if f.manifold.is_sphere:
        if x0 is None:
            return sphere_point(0.5 + 0.25j)
        if any(math.isinf(v) for v in x0):
            return infinity()
        return sphere_point(complex(x0[0], x0[1]))
    d = f.manifold.dimension
    return wrap(x0 if x0 is not None else [0.1 * (i + 1) for i in range(d)], f.manifold)


def _header(f: Endomorphism) -> list[str]:
    if f.manifold.is_sphere:
        return ["re", "im"]
    return [f"x{i}" for i in range(f.manifold.dimension)]


# -- subcommands ------------------------------------------------------------------------------------

class Run:
    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.f = from_params(cfg.model)
        self.files: dict[str, bytes] = {}
        self.timing: dict[str, float] = {}
        self._t0 = time.perf_counter()

    def stage(self, name):
        now = time.perf_counter()
        self.timing[name] = now - self._t0
        self._t0 = now

    def base_report(self, sub: str) -> dict:
        return {"tool": "aendo", "version": __version__, "subcommand": sub, "config": self.cfg.echo()}

    def grid_and_sets(self, typed=True):
        cfg, f = self.cfg, self.f
        g = BoxGrid(f.manifold, cfg.grid)
        t = build_transition_graph(f, g, bloat=cfg.options["bloat"], threads=cfg.threads)
        self.stage("transition_graph")
        rec = chain_recurrent_cells(t)
        sets = decompose_basic_sets(t, rec, f=f if typed else None, seed=cfg.seed)
        self.stage("decomposition")
        return g, t, rec, sets

    @staticmethod
    def set_record(L) -> dict:
        rec = {
            "index": L.index,
            "cells": L.size,
            "fraction_of_grid": L.fraction_of_grid(),
            "type": list(L.type_uv) if L.type_uv is not None else None,
        }
        if "type_votes" in L.evidence:
            rec["type_votes"] = L.evidence["type_votes"]
        if "type_error" in L.evidence:
            rec["type_error"] = L.evidence["type_error"]
        return rec

    def _images(self, g, rec, sets):
        if g.manifold.is_torus and g.manifold.dimension != 2:
            return
        self.files["recurrent.pgm"] = render_cells(rec, g)
        for L in sets:
            self.files[f"set_{L.index}.pgm"] = render_cells(L.cells, g)

    # orbit: CSV of x_0 .. x_n
    def orbit(self):
        f = self.f
        n = self.cfg.options["iterations"]
        x = to_array([_start_point(f, self.cfg)])
        rows = [["step"] + _header(f)]
        for i in range(n + 1):
            rows.append([str(i)] + _point_row(f, x[0]))
            if i < n:
                x = f.eval_raw(x)
        self.files["orbit.csv"] = "\n".join(",".join(r) for r in rows).encode() + b"\n"
        self.stage("orbit")
        return self.base_report("orbit") | {"points": n + 1}

    # preimages: CSV dump of the preimage tree
    def preimages(self):
        f, o = self.f, self.cfg.options
        t = grow_preimage_tree(f, _start_point(f, self.cfg), o["tree_depth"], budget=o["node_budget"])
        rows = [["level", "index", "parent"] + _header(f)]
        for lev, X in enumerate(t.levels):
            par = t.parents[lev]
            for i, x in enumerate(X):
                rows.append([str(-lev), str(i), str(int(par[i]))] + _point_row(f, x))
        self.files["preimages.csv"] = "\n".join(",".join(r) for r in rows).encode() + b"\n"
        self.stage("preimages")
        return self.base_report("preimages") | {"depth": t.depth, "leaf_count": t.leaf_count}

    def spectral(self):
        g, t, rec, sets = self.grid_and_sets()
        self._images(g, rec, sets)
        rep = self.base_report("spectral")
        rep.update(
            grid={"manifold": str(g.manifold), "n": g.n, "active_cells": int(g.active.sum()), "edges": t.n_edges},
            recurrent_cells=int(rec.sum()),
            basic_sets=[self.set_record(L) for L in sets],
        )
        return rep

    def classify(self):
        cfg, f = self.cfg, self.f
        g, t, rec, sets = self.grid_and_sets()
        o = cfg.options
        records = []
        for L in sets:
            r = self.set_record(L)
            r.update(self._classify_set(L))
            records.append(r)
        self.stage("classification")
        self._images(g, rec, sets)
        rep = self.base_report("classify")
        rep.update(
            grid={"manifold": str(g.manifold), "n": g.n, "active_cells": int(g.active.sum()), "edges": t.n_edges},
            recurrent_cells=int(rec.sum()),
            basic_sets=records,
            tolerances={"containment_bloat": g.diameter, "fattenings": o["fattenings"], "depth": cfg.depth, "eps": list(cfg.eps)},
        )
        return rep

    def _classify_set(self, L) -> dict:
        cfg, f, o = self.cfg, self.f, self.cfg.options
        out: dict[str, Any] = {}
        att = rep = None
        try:
            att = classify_attractor(f, L, cfg.eps, cfg.depth, o["n_test"], seed=cfg.seed)
            out["attractor"] = {"verdict": att.verdict, "per_eps": att.per_eps, "witness": att.witness}
        except AendoError as e:
            out["attractor"] = {"verdict": "inconclusive", "error": f"{type(e).__name__}: {e}"}
        rep = classify_repeller(f, L, o["fattenings"])
        out["repeller"] = {"repeller": rep.repeller, "fattening": rep.fattening, "per_r": rep.per_r}
        is_att = att is not None and att.is_attractor
        if is_att and rep.repeller:
            L.classification = "attractor_and_repeller"
        elif is_att:
            L.classification = "attractor"
        elif rep.repeller:
            L.classification = "repeller"
        elif att is not None and att.verdict == "neither":
            L.classification = "neither"
        else:
            L.classification = "inconclusive"
        out["classification"] = L.classification
        out.update(self._expansion(L))
        out.update(self._smoothness(L))
        return out

    def _expansion(self, L) -> dict:
        f, o, cfg = self.f, self.cfg.options, self.cfg
        out: dict[str, Any] = {}
        n = f.manifold.dimension
        if L.type_uv is None:
            return out
        u, s = L.type_uv
        if (u, s) == (n, 0):
            try:
                m = verify_expanding_metric(f, L, o["metric_eps"], seed=cfg.seed)
                out["metric_expansion"] = {"mu": m.mu, "pairs": m.pairs, "eps": m.eps, "expanding": m.expanding}
            except AendoError as e:
                out["metric_expansion"] = {"error": f"{type(e).__name__}: {e}"}
        if u >= 1:
            try:
                d = verify_expanding_derivative(f, L, seed=cfg.seed, depth=cfg.depth)
                out["derivative_expansion"] = {"C": d.C, "lambda": d.lambda_, "samples": d.samples, "expanding": d.expanding}
            except AendoError as e:
                out["derivative_expansion"] = {"error": f"{type(e).__name__}: {e}"}
        try:
            h = verify_hyperbolic(f, in_set_branches(f, L, 8, cfg.depth, cfg.seed))
            out["hyperbolicity"] = {
                "C": h.C,
                "lambda": h.lambda_,
                "samples": h.sample_count,
                "worst_violation": h.worst_violation,
                "hyperbolic": h.hyperbolic,
            }
        except AendoError as e:
            out["hyperbolicity"] = {"error": f"{type(e).__name__}: {e}"}
        return out

    def _smoothness(self, L) -> dict:
        f, o = self.f, self.cfg.options
        n = f.manifold.dimension
        if L.type_uv is None:
            return {}
        rows = []
        try:
            if isinstance(f, Product) and tuple(L.type_uv) == (n - 1, 1):
                rows = [attractor_smoothness(f, L, m).as_dict() for m in o["refinements"]]
            elif isinstance(f, Quadratic) and tuple(L.type_uv) == (2, 0):
                rows = [repeller_curve_quotients(f, m, L).as_dict() for m in o["refinements"]]
        except AendoError as e:
            return {"smoothness": {"error": f"{type(e).__name__}: {e}"}}
        if not rows:
            return {}
        q = [r["max_first_quotient"] for r in rows]
        growth = q[-1] / q[0] if q[0] > 0 else (1.0 if q[-1] == 0 else float("inf"))
        return {"smoothness": {"refinements": rows, "first_quotient_growth": growth}}

    def verify_expanding(self):
        g, t, rec, sets = self.grid_and_sets()
        records = []
        for L in sets:
            r = self.set_record(L)
            r.update(self._expansion(L))
            records.append(r)
        self.stage("expansion")
        rep = self.base_report("verify-expanding")
        rep.update(basic_sets=records, recurrent_cells=int(rec.sum()))
        return rep

    def axiom_a(self):
        cfg, o = self.cfg, self.cfg.options
        g, t, rec, sets = self.grid_and_sets()
        ev = verify_axiom_a(
            self.f, g, o["max_period"], t=t, decomposition=sets, seed=cfg.seed, density_threshold=o["density_threshold"]
        )
        self.stage("axiom_a")
        rep = self.base_report("axiom-a")
        rep.update(evidence=ev, basic_sets=[self.set_record(L) for L in sets])
        return rep

    def render(self):
        g, t, rec, sets = self.grid_and_sets(typed=False)
        self.files["recurrent.pgm"] = render_cells(rec, g)
        labels = basin_labels(self.f, sets) if sets else np.full(g.n_cells, -1)
        self.files["basins.pgm"] = render_basins(labels, len(sets), g)
        self.stage("render")
        rep = self.base_report("render")
        counts = np.bincount(labels[labels >= 0], minlength=len(sets)) if sets else np.zeros(0, dtype=int)
        rep.update(
            recurrent_cells=int(rec.sum()),
            basins=[{"index": i, "cells": int(c)} for i, c in enumerate(counts)],
            unsettled_cells=int(((labels < 0) & g.active.astype(bool)).sum()),
        )
        return rep


def run(subcommand: str, cfg: RunConfig) -> tuple[int, dict, dict[str, bytes]]:
    """Run one subcommand; returns (exit status, report, output files by name)."""
    if subcommand not in SUBCOMMANDS:
        raise ConfigError(f"unknown subcommand {subcommand!r}")
    r = Run(cfg)
    f = r.f
    if subcommand == "render" and not (f.manifold.is_sphere or f.manifold.dimension == 2):
        raise ConfigError(f"render needs a 2-torus or sphere model, not {f.manifold}")
    report = getattr(r, subcommand.replace("-", "_"))()
    r.files["report.json"] = dump_report(report).encode()
    r.files["timing.json"] = (json.dumps({k: round(v, 6) for k, v in r.timing.items()}, sort_keys=True, indent=2) + "\n").encode()
    return EXIT_OK, report, r.files


def write_outputs(out: Path, files: dict[str, bytes]):
    out.mkdir(parents=True, exist_ok=True)
    for name in sorted(files):
        (out / name).write_bytes(files[name])


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="aendo", description="Numerics for hyperbolic endomorphisms and their basic sets.")
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--config", required=True, help="key = value run config")
    p.add_argument("--out", help="output directory (default: config 'out' or ./out)")
    p.add_argument("--threads", type=int, help="worker cap for graph construction")
    p.add_argument("--seed", type=int, help="sampling seed (unsigned 64-bit)")
    p.add_argument("--grid", type=int, help="cells per axis (per chart on the sphere)")
    p.add_argument("--depth", type=int, help="backward branch depth")
    p.add_argument("--eps", help="comma separated eps list for the attractor test")
    return p


def main(argv: list[str] | None = None) -> int:
    args = make_parser().parse_args(argv)
    try:
        text = Path(args.config).read_text()
    except OSError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = build_config(parse_config(text, args.config), args)
        status, report, files = run(args.subcommand, cfg)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except BudgetExceeded as e:
        print(f"budget exceeded: {e}", file=sys.stderr)
        return EXIT_BUDGET
    out = Path(cfg.out)
    write_outputs(out, files)
    print(f"wrote {len(files)} files to {out}")
    return status


if __name__ == "__main__":
    raise SystemExit(main())
