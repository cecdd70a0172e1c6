"""``lorentz-lab``: command-line front end for the samplers and experiments.

Exit status: 0 when every verdict passes, 1 when some verdict fails,
2 for usage errors, 3 for requests outside a module's domain, 4 for
numerical failures, 5 for I/O errors. Outputs are written atomically, so
a failed run leaves nothing behind.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import limit_laws
from .core import (BallParams, Normalization, as_extended, as_q, ball_volume,
                   intersection_threshold, limit_law)
from .ode import (OdeError, conjecture_density, figure1_family, find_critical_slope,
                  write_trajectories_csv)
from .report import GofReport, append_csv_log
from .rng import WORKERS_ENV, RngStreamSpec
from .sampler import (SamplerError, sample_exact, sample_rejection_oracle, sample_weyl_chamber,
                      to_binary, write_csv)
from .svg import Plot

PROG = "lorentz-lab"
SUBCOMMANDS = ("sample", "volume", "empirical", "pmb", "clt", "lln", "intersect", "ode", "selftest")
FORMATS = ("csv", "json", "binary")

EXIT_OK, EXIT_VERDICT, EXIT_USAGE, EXIT_DOMAIN, EXIT_NUMERIC, EXIT_IO = range(6)

# tolerance overrides per profile; "default" keeps the experiment defaults
TOLERANCE_PROFILES = {
    "default": {},
    "strict": {"empirical": 0.005, "pmb_ks": 0.01, "pmb_corr": 0.02, "lln": 0.005,
               "intersect": 0.01, "clt": {"ks_gumbel": 0.03, "ks_log_normal": 0.05,
                                          "ks_normal": 0.03, "p_series": 0.05}},
}


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    subcommand: str
    params: dict = field(default_factory=dict)
    seed: int = 0
    stream: int = 0
    out: str | None = None
    format: str = "json"
    plot: str | None = None
    tolerance_profile: str = "default"
    workers: int | None = None

    @property
    def rng(self) -> RngStreamSpec:
        return RngStreamSpec(self.seed, self.stream)

    def to_dict(self) -> dict:
        # worker count is an execution detail: results do not depend on it
        return {"subcommand": self.subcommand, "params": dict(sorted(self.params.items())),
                "seed": self.seed, "stream": self.stream, "format": self.format,
                "tolerance_profile": self.tolerance_profile}

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        return cls(d["subcommand"], dict(d["params"]), d["seed"], d["stream"],
                   format=d["format"], tolerance_profile=d["tolerance_profile"])


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _qtoken(text: str) -> str:
    try:
        q = as_q(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    return str(q)


def _rtoken(text: str):
    try:
        r = as_extended(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    return "inf" if math.isinf(r) else r


def _positive_int(text: str) -> int:
    try:
        v = int(float(text)) if "e" in text.lower() else int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be positive: {text}")
    return v


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 1 << 64:
        raise argparse.ArgumentTypeError(f"must fit in 64 unsigned bits: {text}")
    return v


def _floats(text: str) -> list[float]:
    try:
        vals = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of reals: {text!r}") from None
    return vals


def _build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=_u64, default=0)
    common.add_argument("--stream", type=_u64, default=0)
    common.add_argument("--out")
    common.add_argument("--format", choices=FORMATS, default="json")
    common.add_argument("--plot")
    common.add_argument("--workers", type=_positive_int)
    common.add_argument("--tolerance-profile", choices=tuple(TOLERANCE_PROFILES), default="default")

    parser = _Parser(prog=PROG, description="Lorentz ball sampling and limit-theorem experiments")
    sub = parser.add_subparsers(dest="subcommand", parser_class=_Parser)
    sub.required = True

    def add(name, help_):
        return sub.add_parser(name, parents=[common], help=help_)

    p = add("sample", "draw uniform points of a Lorentz ball")
    p.add_argument("--q", type=_qtoken, required=True)
    p.add_argument("--n", type=_positive_int, required=True)
    p.add_argument("--p", type=float, default=1.0)
    p.add_argument("--count", type=_positive_int, default=10_000)
    p.add_argument("--normalization", choices=[m.value for m in Normalization], default="unit")
    p.add_argument("--generator", choices=("exact", "weyl", "rejection"), default="exact")

    p = add("volume", "exact log-volume of B_{q,1}^n")
    p.add_argument("--q", type=_qtoken, required=True)
    p.add_argument("--n", type=_positive_int, required=True)

    p = add("empirical", "coordinate law of one sample vs nu_{q,1}")
    p.add_argument("--q", type=_qtoken, required=True)
    p.add_argument("--n", type=_positive_int, default=100_000)
    p.add_argument("--reference", choices=("nu", "laplace"), default="nu")

    p = add("pmb", "first k coordinates vs the product law")
    p.add_argument("--q", type=_qtoken, required=True)
    p.add_argument("--n", type=_positive_int, default=10_000)
    p.add_argument("--k", type=_positive_int, default=2)
    p.add_argument("--replications", type=_positive_int, default=10_000)

    p = add("clt", "fluctuations of the largest coordinate")
    p.add_argument("--q", type=_qtoken, required=True)
    p.add_argument("--n", type=_positive_int, default=100_000)
    p.add_argument("--replications", type=_positive_int, default=2000)
    p.add_argument("--truncation", type=_positive_int, default=1_000_000)

    p = add("lln", "l_r norm concentration on the volume-normalized ball")
    p.add_argument("--q", type=_qtoken, required=True)
    p.add_argument("--r", type=_rtoken, required=True)
    p.add_argument("--n", type=_positive_int, default=100_000)
    p.add_argument("--replications", type=_positive_int, default=200)

    p = add("intersect", "volume of the intersection with a scaled l_r ball")
    p.add_argument("--q", type=_qtoken, required=True)
    p.add_argument("--r", type=_rtoken, required=True)
    p.add_argument("--t", type=_floats, required=True,
                   help="one value, or a comma-separated sweep (the first is judged)")
    p.add_argument("--n", type=_positive_int, default=10_000)
    p.add_argument("--replications", type=_positive_int, default=10_000)

    p = add("ode", "shooting for the conjectured limit density")
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--q", type=_qtoken, required=True)
    p.add_argument("--slopes", type=_floats, default=None)

    add("selftest", "run the acceptance suite")
    return parser


_PARSER = None


def _validate(cfg: RunConfig) -> None:
    prm = cfg.params
    cmd = cfg.subcommand
    q = as_q(prm["q"]) if "q" in prm else None
    if cmd == "sample":
        if prm["p"] < 1 or (q.is_finite and prm["p"] > q.value):
            raise UsageError(f"need 1 <= p <= q, got p={prm['p']}, q={q}")
        if prm["p"] != 1.0:
            raise UsageError(f"sampling needs p = 1, got p={prm['p']}")
    if cmd in ("empirical", "pmb", "lln", "intersect") and q.is_finite and q.value <= 1.0:
        raise UsageError(f"{cmd} needs q > 1, got q={q}")
    if cmd in ("sample", "volume", "clt") and q.is_finite and q.value < 1.0:
        raise UsageError(f"need q >= 1, got q={q}")
    if cmd == "clt" and q.is_infinite:
        raise UsageError("clt: regime undefined for q=inf")
    if cmd in ("lln", "intersect") and as_extended(prm["r"]) <= 1.0:
        raise UsageError(f"{cmd} needs r > 1, got r={prm['r']}")
    if cmd == "pmb" and prm["k"] > prm["n"]:
        raise UsageError(f"need k <= n, got k={prm['k']}, n={prm['n']}")
    if cmd == "intersect" and any(t <= 0 for t in prm["t"]):
        raise UsageError("t must be positive")
    if cmd == "ode":
        if q.is_infinite or not 1.0 <= prm["p"] <= q.value:
            raise UsageError(f"need 1 <= p <= q < inf, got p={prm['p']}, q={q}")
        if prm.get("slopes") is not None and any(s <= 0 for s in prm["slopes"]):
            raise UsageError("slopes must be positive")
    if cfg.format == "binary" and cmd != "sample":
        raise UsageError("--format binary is only available for sample")
    if cfg.format == "binary" and not cfg.out:
        raise UsageError("--format binary needs --out")


def parse_args(argv=None) -> RunConfig:
    global _PARSER
    if _PARSER is None:
        _PARSER = _build_parser()
    ns = vars(_PARSER.parse_args(argv))
    common = {k: ns.pop(k) for k in ("subcommand", "seed", "stream", "out", "format", "plot",
                                      "workers", "tolerance_profile")}
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            common["workers"] = max(1, int(env))
        except ValueError:
            raise UsageError(f"{WORKERS_ENV} must be an integer, got {env!r}") from None
    params = {k: v for k, v in ns.items() if v is not None}
    cfg = RunConfig(common["subcommand"], params, common["seed"], common["stream"],
                    common["out"], common["format"], common["plot"],
                    common["tolerance_profile"], common["workers"])
    _validate(cfg)
    return cfg


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

def _atomic_write(path, data: bytes | str) -> None:
    path = Path(path)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def _emit(cfg: RunConfig, text: str) -> None:
    if cfg.out:
        _atomic_write(cfg.out, text)
    else:
        sys.stdout.write(text)


def _json_doc(cfg: RunConfig, **body) -> str:
    return json.dumps({"config": cfg.to_dict(), **body}, sort_keys=True, indent=2) + "\n"


def _emit_reports(cfg: RunConfig, reports: list[GofReport]) -> None:
    if cfg.format == "csv":
        if cfg.out:
            append_csv_log(reports, cfg.out)
        else:
            import csv
            from .report import LOG_COLUMNS

            w = csv.DictWriter(sys.stdout, fieldnames=LOG_COLUMNS)
            w.writeheader()
            for r in reports:
                w.writerow(r.log_row())
        return
    _emit(cfg, _json_doc(cfg, reports=[r.to_dict() for r in reports]))


def load_run(path) -> tuple[RunConfig, list[GofReport]]:
    """Parse a JSON run artifact back into its config and reports."""
    doc = json.loads(Path(path).read_text())
    return RunConfig.from_dict(doc["config"]), [GofReport.from_dict(r) for r in
                                                doc.get("reports", [])]


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _cmd_sample(cfg: RunConfig) -> int:
    prm = cfg.params
    params = BallParams(prm["q"], prm["n"], prm["p"], Normalization(prm["normalization"]))
    gen = prm["generator"]
    if gen == "exact":
        batch = sample_exact(params, prm["count"], cfg.rng, cfg.workers)
    elif gen == "weyl":
        batch = sample_weyl_chamber(params, prm["count"], cfg.rng, cfg.workers)
    else:
        batch = sample_rejection_oracle(params, prm["count"], cfg.rng)
    batch.meta["config"] = cfg.to_dict()
    if cfg.format == "binary":
        _atomic_write(cfg.out, to_binary(batch))
    elif cfg.format == "csv":
        if cfg.out:
            fd, tmp = tempfile.mkstemp(dir=Path(cfg.out).parent, suffix=".tmp")
            os.close(fd)
            try:
                write_csv(batch, tmp)
                os.replace(tmp, cfg.out)
            except BaseException:
                Path(tmp).unlink(missing_ok=True)
                raise
        else:
            sys.stdout.write("# " + json.dumps(batch.header(), sort_keys=True) + "\n")
            sys.stdout.write(",".join(f"x{i + 1}" for i in range(params.n)) + "\n")
            np.savetxt(sys.stdout, batch.data, delimiter=",", fmt="%.17g")
    else:
        _emit(cfg, _json_doc(cfg, header=batch.header(), data=batch.data.tolist()))
    if cfg.plot and params.n >= 2:
        plot = Plot(title=f"first two coordinates, q={params.q}", xlabel="x1", ylabel="x2")
        plot.add(batch.data[:2000, 0], batch.data[:2000, 1], "samples", points=True)
        _atomic_write(cfg.plot, plot.render())
    return EXIT_OK


def _cmd_volume(cfg: RunConfig) -> int:
    q, n = cfg.params["q"], cfg.params["n"]
    vol = ball_volume(q, n)
    if cfg.format == "csv":
        text = "q,n,log_volume,volume\n" + f"{q},{n},{vol.log_volume!r},{vol.volume!r}\n"
        _emit(cfg, text)
    else:
        _emit(cfg, _json_doc(cfg, log_volume=vol.log_volume, volume=vol.volume,
                             overflow=vol.overflow))
    if not cfg.out:
        sys.stderr.write(f"log_volume={vol.log_volume:.17g} volume={vol.volume!r}\n")
    return EXIT_OK


def _tol(cfg, key, default=None):
    return TOLERANCE_PROFILES[cfg.tolerance_profile].get(key, default)


def _verdict(reports) -> int:
    return EXIT_OK if all(r.verdict for r in reports) else EXIT_VERDICT


def _cmd_empirical(cfg: RunConfig) -> int:
    prm = cfg.params
    rep = limit_laws.run_empirical_convergence(prm["q"], prm["n"], cfg.rng,
                                               reference=prm["reference"],
                                               tolerance=_tol(cfg, "empirical"),
                                               workers=cfg.workers)
    _emit_reports(cfg, [rep])
    if cfg.plot:
        x = sample_exact(BallParams(prm["q"], prm["n"], normalization=Normalization.TILDE), 1,
                  cfg.rng, cfg.workers).data[0]
        _atomic_write(cfg.plot, _density_overlay(x, prm, "coordinates of one sample"))
    return _verdict([rep])


def _density_overlay(x, prm, title) -> str:
    hist, edges = np.histogram(x, bins=80, density=True)
    plot = Plot(title=title, xlabel="x", ylabel="density")
    plot.add(edges, np.append(hist, hist[-1]), "empirical", step=True)
    grid = np.linspace(edges[0], edges[-1], 400)
    if prm.get("reference") == "laplace":
        plot.add(grid, 0.5 * np.exp(-np.abs(grid)), "two-sided exponential", dashed=True)
    else:
        plot.add(grid, limit_law(prm["q"]).density(grid), "limit density", dashed=True)
    return plot.render()


def _cmd_pmb(cfg: RunConfig) -> int:
    prm = cfg.params
    kw = {}
    if _tol(cfg, "pmb_ks"):
        kw = {"ks_tolerance": _tol(cfg, "pmb_ks"), "abs_corr_tolerance": _tol(cfg, "pmb_corr")}
    rep = limit_laws.run_pmb(prm["q"], prm["n"], prm["k"], cfg.rng, prm["replications"],
                             workers=cfg.workers, **kw)
    _emit_reports(cfg, [rep])
    return _verdict([rep])


def _cmd_clt(cfg: RunConfig) -> int:
    prm = cfg.params
    rep = limit_laws.run_clt_max(prm["q"], prm["n"], prm["replications"], cfg.rng,
                                 truncation=prm["truncation"], tolerances=_tol(cfg, "clt"),
                                 workers=cfg.workers)
    _emit_reports(cfg, [rep])
    if cfg.plot:
        z = limit_laws.scaled_max_norm(prm["q"], prm["n"], prm["replications"], cfg.rng,
                                       cfg.workers)
        hist, edges = np.histogram(z, bins=50, density=True)
        plot = Plot(title=f"scaled max norm, q={prm['q']}", xlabel="z", ylabel="density")
        plot.add(edges, np.append(hist, hist[-1]), "empirical", step=True)
        grid = np.linspace(edges[0], edges[-1], 400)
        s2 = rep.statistics.get("sigma_q2") or (0.25 if as_q(prm["q"]).value == 2 else None)
        if as_q(prm["q"]).value == 1.0:
            from .core import EULER_GAMMA

            u = grid + EULER_GAMMA
            plot.add(grid, np.exp(-u - np.exp(-u)), "Gumbel(-gamma)", dashed=True)
        elif s2:
            plot.add(grid, np.exp(-grid**2 / (2 * s2)) / math.sqrt(2 * math.pi * s2),
                     "normal limit", dashed=True)
        _atomic_write(cfg.plot, plot.render())
    return _verdict([rep])


def _cmd_lln(cfg: RunConfig) -> int:
    prm = cfg.params
    kw = {"tolerance": _tol(cfg, "lln")} if _tol(cfg, "lln") else {}
    rep = limit_laws.run_lln_norm(prm["q"], prm["r"], prm["n"], prm["replications"], cfg.rng,
                                  workers=cfg.workers, **kw)
    _emit_reports(cfg, [rep])
    return _verdict([rep])


def _cmd_intersect(cfg: RunConfig) -> int:
    prm = cfg.params
    ts = prm["t"]
    kw = {"tolerance": _tol(cfg, "intersect")} if _tol(cfg, "intersect") else {}
    rep = limit_laws.run_intersection(prm["q"], prm["r"], ts[0], prm["n"], prm["replications"],
                                      cfg.rng, sweep=ts[1:], workers=cfg.workers, **kw)
    _emit_reports(cfg, [rep])
    if cfg.plot:
        a = intersection_threshold(prm["q"], prm["r"])
        hi = max(max(ts), 1.5 / a)
        grid = np.linspace(0.0, hi, 301)[1:]
        est = limit_laws.intersection_curve(prm["q"], prm["r"], prm["n"], grid,
                                            prm["replications"], cfg.rng, cfg.workers)
        plot = Plot(title=f"intersection volume, q={prm['q']}, r={prm['r']}, n={prm['n']}",
                    xlabel="t", ylabel="estimate")
        plot.add(grid, est, "Monte Carlo", step=True)
        plot.add([1 / a, 1 / a], [0.0, 1.0], "t = 1/A", dashed=True)
        _atomic_write(cfg.plot, plot.render())
    return _verdict([rep])


def _solution_summary(sol) -> dict:
    return {"initial_slope": sol.initial_slope, "classification": sol.classification.label,
            "termination": sol.termination.value,
            "support_radius": "inf" if math.isinf(sol.support_radius) else sol.support_radius,
            "terminal_G": float(sol.g[-1]), "terminal_slope": sol.terminal_slope,
            "constraint_integral": sol.constraint_integral, "steps": len(sol.grid) - 1}


def _cmd_ode(cfg: RunConfig) -> int:
    p, q = cfg.params["p"], as_q(cfg.params["q"]).value
    slopes = cfg.params.get("slopes")
    if slopes is None:
        crit = find_critical_slope(p, q)
        dens = conjecture_density(p, q)
        members = figure1_family(p, q, [crit.c_pq])
        body = {"critical_slope": crit.c_pq, "bracket": list(crit.bracket),
                "solution": _solution_summary(crit.solution),
                "density_mass": dens.total_mass()}
    else:
        members = figure1_family(p, q, slopes, workers=cfg.workers)
        body = {"trajectories": [
            {"slope": m.slope, **(_solution_summary(m.solution) if m.solution else {}),
             **({"error": m.error} if m.error else {})} for m in members]}
    if cfg.format == "csv":
        if cfg.out:
            fd, tmp = tempfile.mkstemp(dir=Path(cfg.out).parent, suffix=".tmp")
            os.close(fd)
            try:
                write_trajectories_csv(members, tmp)
                os.replace(tmp, cfg.out)
            except BaseException:
                Path(tmp).unlink(missing_ok=True)
                raise
        else:
            with tempfile.TemporaryDirectory() as d:
                write_trajectories_csv(members, Path(d) / "t.csv")
                sys.stdout.write((Path(d) / "t.csv").read_text())
    else:
        _emit(cfg, _json_doc(cfg, **body))
    if cfg.plot:
        plot = Plot(title=f"G for p={p:g}, q={q:g}", xlabel="x", ylabel="G(x)", hlines=[1.0])
        for m in members:
            if m.solution is not None:
                sol = m.solution
                plot.add(sol.x, sol.g, f"G'(0)={m.slope:.4g} ({sol.classification.label})")
        _atomic_write(cfg.plot, plot.render())
    return EXIT_OK if all(m.solution is not None for m in members) else EXIT_NUMERIC


def _cmd_selftest(cfg: RunConfig) -> int:
    from .acceptance import run_all

    results = run_all(echo=lambda s: print(s, flush=True))
    if cfg.out:
        doc = {"config": cfg.to_dict(), "criteria": [
            {"number": r.number, "title": r.title, "passed": r.passed,
             "checks": [{"label": c.label, "value": c.value, "bound": c.bound, "ok": c.ok}
                        for c in r.checks]} for r in results]}
        _atomic_write(cfg.out, json.dumps(doc, sort_keys=True, indent=2) + "\n")
    return EXIT_OK if all(r.passed for r in results) else EXIT_VERDICT


_DISPATCH = {
    "sample": _cmd_sample, "volume": _cmd_volume, "empirical": _cmd_empirical, "pmb": _cmd_pmb,
    "clt": _cmd_clt, "lln": _cmd_lln, "intersect": _cmd_intersect, "ode": _cmd_ode,
    "selftest": _cmd_selftest,
}


def execute(cfg: RunConfig) -> int:
    """Run one configured command and return its exit status."""
    targets = [t for t in (cfg.out, cfg.plot) if t]
    existed = {t: Path(t).exists() for t in targets}
    try:
        return _DISPATCH[cfg.subcommand](cfg)
    except BaseException:
        # remove artifacts this run created before failing
        for t in targets:
            if not existed[t]:
                Path(t).unlink(missing_ok=True)
        raise


def main(argv=None) -> int:
    try:
        cfg = parse_args(argv)
        return execute(cfg)
    except UsageError as exc:
        print(f"{PROG}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SamplerError, ValueError) as exc:
        print(f"{PROG}: error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except (OdeError, FloatingPointError) as exc:
        print(f"{PROG}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"{PROG}: i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
