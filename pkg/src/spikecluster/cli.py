"""Command-line pipelines.

Each verb reads a run configuration, writes its outputs atomically under
``--out`` and records a manifest (config echo, toolkit version, per-stage
files, key scalars and wall-clock).  Exit codes: 0 success, 2 invalid input,
3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
import warnings
from itertools import product
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, load_config
from .equilibrium import search_equilibria
from .errors import CacheMiss, NotAdmissible, NumericalFailure, SpikeClusterError, ValidationError
from .lspde import (
    assemble_ansatz,
    canonical_pair,
    expansion_defect,
    extract_peaks,
    newton_solve,
    projected_solve,
    reduced_energy_numeric,
    save_field_binary,
    setup_grid,
)
from .potential import SpikeConfig
from .profile import Nonlinearity, compute_constants, get_profile, pohozaev_defect
from .reduced import (
    CriticalOptions,
    find_critical_point,
    generate,
    maxmin_report,
    r_eps,
    reduced_energy,
)

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3
COMMANDS = ("profile", "constants", "reduce", "search", "maxmin", "pde", "lsreduce",
            "expansion-test", "lemma-check")


# -- atomic writers -------------------------------------------------------------

def _write_text(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    tmp.replace(path)
    return path


def write_json(path, obj) -> Path:
    return _write_text(Path(path), json.dumps(obj, indent=2, sort_keys=True) + "\n")


def write_csv(path, header, rows) -> Path:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])
    return _write_text(Path(path), buf.getvalue())


class Run:
    """Collects per-stage outputs and writes the manifest."""

    def __init__(self, command: str, cfg: RunConfig, out: Path):
        self.command, self.cfg, self.out = command, cfg, out
        self.stages = []
        out.mkdir(parents=True, exist_ok=True)

    def stage(self, name, outputs, scalars, t0):
        self.stages.append({"name": name, "outputs": [str(Path(p).relative_to(self.out)) for p in outputs],
                            "scalars": scalars, "wall_seconds": round(time.perf_counter() - t0, 3)})

    def finish(self) -> Path:
        manifest = {"command": self.command, "version": __version__, "config": self.cfg.as_dict(),
                    "stages": self.stages}
        return write_json(self.out / f"manifest_{self.command.replace('-', '_')}.json", manifest)


# -- shared setup ---------------------------------------------------------------

def _profile(cfg: RunConfig, out: Path, cache_only: bool):
    cache = Path(cfg.cache_dir) if cfg.cache_dir else out / "cache"
    return get_profile(cfg.N, cfg.p, cfg.profile_tol, cache_dir=cache, cache_only=cache_only)


def _constants_dict(pr, rc) -> dict:
    return {"c1_unit": rc.c1_unit, "c2": rc.c2, "c3": rc.c3, "c4": rc.c4, "A": pr.A, "w0": pr.w0}


def _need_plane(cfg):
    if cfg.N != 2 or not cfg.lambdas:
        raise ValidationError("this command needs N = 2 and a saddle potential")


def _family_seed(cfg, eps, beta):
    fam = cfg.family()
    if fam.kind == "positive":
        return generate(fam, np.zeros((fam.ell, fam.pot.r)), None, eps, beta)
    return generate(fam, np.zeros(fam.pot.r), np.full(fam.ell - 1, r_eps(eps)), eps, beta)


def _critical(cfg, pr, rc, eps, beta):
    seed = _family_seed(cfg, eps, beta)
    return find_critical_point(seed, pr, cfg.potential(), rc, CriticalOptions(mode=cfg.mode, gtol=cfg.gtol))


def _tag(eps) -> str:
    return f"{eps:.6g}".replace(".", "p")


# -- commands -------------------------------------------------------------------

def cmd_profile(cfg, out, cache_only=False, **_):
    run = Run("profile", cfg, out)
    t0 = time.perf_counter()
    pr = _profile(cfg, out, cache_only)
    summary = {"N": pr.dim, "p": pr.p, "w0": pr.w0, "A": pr.A, "r_star": pr.r_star,
               "pohozaev_defect": pohozaev_defect(pr)}
    path = write_json(out / "profile.json", summary)
    run.stage("profile", [path], summary, t0)
    return run.finish()


def cmd_constants(cfg, out, cache_only=False, **_):
    run = Run("constants", cfg, out)
    t0 = time.perf_counter()
    pr = _profile(cfg, out, cache_only)
    vals = _constants_dict(pr, compute_constants(pr))
    path = write_json(out / "constants.json", vals)
    run.stage("constants", [path], vals, t0)
    return run.finish()


def cmd_reduce(cfg, out, cache_only=False, **_):
    """J landscape of the configured family over a parameter box, per ladder point."""
    _need_plane(cfg)
    run = Run("reduce", cfg, out)
    pr = _profile(cfg, out, cache_only)
    rc = compute_constants(pr)
    fam, pot = cfg.family(), cfg.potential()
    if fam.kind == "positive":
        raise ValidationError("the landscape sweep covers the mixed-sign families")
    d = pot.r + fam.ell - 1
    n = max(3, int(cfg.reduce_points ** (1.0 / d)))
    header = [f"a{i + 1}" for i in range(pot.r)] + [f"r{i + 2}" for i in range(fam.ell - 1)] + ["J", "gradJ"]
    for eps in cfg.epsilons:
        t0 = time.perf_counter()
        axes = [np.linspace(-eps ** cfg.beta, eps ** cfg.beta, n)] * pot.r + \
            [np.linspace(eps, 4.0 * r_eps(eps), n)] * (fam.ell - 1)
        rows = []
        for x in product(*axes):
            x = np.array(x)
            c = generate(fam, x[:pot.r], x[pot.r:], eps, cfg.beta)
            ev = reduced_energy(c, pr, pot, rc, cfg.mode, check=False)
            rows.append([*x, ev.value, float(np.linalg.norm(ev.gradient))])
        path = write_csv(out / f"landscape_eps{_tag(eps)}.csv", header, rows)
        J = np.array([r[-2] for r in rows])
        run.stage(f"reduce eps={eps!r}", [path], {"eps": eps, "rows": len(rows), "J_min": float(J.min()),
                                                 "J_max": float(J.max())}, t0)
    return run.finish()


def _critical_record(res, eps, beta):
    c = res.config
    sep = c.pair_distances()
    return {
        "eps": eps, "beta": beta, "points": c.points.tolist(), "signs": c.signs.tolist(),
        "value": res.value, "grad_norm": res.grad_norm, "signature": res.signature,
        "hessian_eigs": np.asarray(res.hessian_eigs).tolist(), "in_gamma": res.in_gamma, "in_D": res.in_D,
        "max_abs_P": float(np.max(np.linalg.norm(c.points, axis=1))),
        "min_separation": float(sep.min()) if sep.size else math.inf,
        "eps_pow_beta": eps ** beta, "separation_floor": 2 * beta ** 2 * eps * math.log(1 / eps),
    }


def cmd_search(cfg, out, cache_only=False, **_):
    _need_plane(cfg)
    run = Run("search", cfg, out)
    pr = _profile(cfg, out, cache_only)
    rc = compute_constants(pr)
    records = []
    for eps in cfg.epsilons:
        t0 = time.perf_counter()
        rec = _critical_record(_critical(cfg, pr, rc, eps, cfg.beta), eps, cfg.beta)
        records.append(rec)
        run.stage(f"search eps={eps!r}", [], {k: rec[k] for k in ("eps", "value", "grad_norm", "max_abs_P",
                                                                  "min_separation")}, t0)
    path = write_json(out / "critical_points.json", records)
    run.stages[-1]["outputs"].append(str(path.relative_to(out)))
    return run.finish()


def cmd_maxmin(cfg, out, cache_only=False, **_):
    _need_plane(cfg)
    run = Run("maxmin", cfg, out)
    pr = _profile(cfg, out, cache_only)
    rc = compute_constants(pr)
    fam = cfg.family()
    reports = []
    for eps in cfg.epsilons:
        t0 = time.perf_counter()
        rep = maxmin_report(fam, pr, rc, eps, cfg.maxmin_beta, cfg.maxmin_grid, cfg.mode, seed=cfg.seed)
        d = fam.param_dim
        names = [f"x{i + 1}" for i in range(d)]
        p1 = write_csv(out / f"maxmin_K_eps{_tag(eps)}.csv", names + ["J", "gradJ"], rep.samples.tolist())
        p2 = write_csv(out / f"maxmin_K0_eps{_tag(eps)}.csv", names + ["J"], rep.boundary.tolist())
        reports.append(rep.as_dict())
        run.stage(f"maxmin eps={eps!r}", [p1, p2], rep.as_dict(), t0)
    write_json(out / "maxmin.json", reports)
    return run.finish()


def cmd_pde(cfg, out, cache_only=False, **_):
    """Reduced critical point, correction, full Newton, peak table."""
    _need_plane(cfg)
    run = Run("pde", cfg, out)
    pr = _profile(cfg, out, cache_only)
    rc = compute_constants(pr)
    pot, nl = cfg.potential(), Nonlinearity(cfg.p)
    summary = []
    for eps in cfg.epsilons:
        t0 = time.perf_counter()
        crit = _critical(cfg, pr, rc, eps, cfg.beta)
        params, g = setup_grid(eps, cfg.beta, pot, nl, cfg.grid_ratio, cfg.v_floor, cfg.n_max,
                               clearance=cfg.clearance)
        corr = projected_solve(crit.config, pr, pot, nl, params, g, cfg.projected_tol)
        log = []
        v = newton_solve(assemble_ansatz(crit.config, pr, params, g) + corr.phi, pot, nl, params,
                         cfg.newton_tol, log=log)
        peaks = extract_peaks(v, pr.w0)
        tag = _tag(eps)
        p1 = save_field_binary(v, out / f"field_eps{tag}.bin")
        p2 = write_csv(out / f"peaks_eps{tag}.csv", ["i", "x", "y", "sign", "height"],
                       [[i, *pk.position.tolist(), int(pk.sign), pk.height] for i, pk in enumerate(peaks)])
        pred = crit.config.points
        dev = [float(np.min(np.linalg.norm(pred - pk.position, axis=1))) for pk in peaks]
        rec = {"eps": eps, "n": g.n, "L": g.L, "newton_steps": len(log), "n_peaks": len(peaks),
               "max_peak_offset": max(dev) if dev else math.nan,
               "final_residual": log[-1]["residual"] if log else 0.0}
        summary.append(rec)
        run.stage(f"pde eps={eps!r}", [p1, p2], rec, t0)
    write_json(out / "pde.json", summary)
    return run.finish()


def cmd_lsreduce(cfg, out, cache_only=False, **_):
    """Projected correction on the canonical pair along the ladder."""
    _need_plane(cfg)
    run = Run("lsreduce", cfg, out)
    pr = _profile(cfg, out, cache_only)
    rc = compute_constants(pr)
    pot, nl = cfg.potential(), Nonlinearity(cfg.p)
    rows = []
    for eps in cfg.epsilons:
        t0 = time.perf_counter()
        c = canonical_pair(eps, cfg.beta, pr, cfg.theta, cfg.kappa)
        params, g = setup_grid(eps, cfg.beta, pot, nl, cfg.grid_ratio, cfg.v_floor, cfg.n_max,
                               clearance=cfg.clearance)
        corr = projected_solve(c, pr, pot, nl, params, g, cfg.projected_tol)
        j_num = reduced_energy_numeric(c, pr, pot, nl, params, g, rc, corr)
        j_formula = reduced_energy(c, pr, pot, rc, "xi_exact", check=False).value
        lev = c.level
        rec = {"eps": eps, "n": g.n, "newton_steps": corr.newton_steps,
               "orth_defect": float(np.max(corr.orth_defects)),
               "phi_max": corr.phi.max_norm(), "phi_over_eps_eta": corr.phi.max_norm() / eps ** params.eta,
               "J_numeric": j_num, "J_formula": j_formula,
               "J_defect_over_level": abs(j_num - j_formula) / lev}
        rows.append(rec)
        run.stage(f"lsreduce eps={eps!r}", [], rec, t0)
    keys = list(rows[0])
    path = write_csv(out / "lsreduce.csv", keys, [[r[k] for k in keys] for r in rows])
    run.stages[-1]["outputs"].append(str(path.relative_to(out)))
    return run.finish()


def cmd_expansion_test(cfg, out, cache_only=False, **_):
    """Ladder table ``(eps, E, E / eps^(2 beta))`` for the ansatz-only defect."""
    _need_plane(cfg)
    run = Run("expansion-test", cfg, out)
    pr = _profile(cfg, out, cache_only)
    rc = compute_constants(pr)
    pot, nl = cfg.potential(), Nonlinearity(cfg.p)
    rows = []
    for eps in cfg.epsilons:
        t0 = time.perf_counter()
        c = canonical_pair(eps, cfg.beta, pr, cfg.theta, cfg.kappa)
        params, g = setup_grid(eps, cfg.beta, pot, nl, cfg.grid_ratio, cfg.v_floor, cfg.n_max,
                               clearance=cfg.clearance)
        E = expansion_defect(c, pr, pot, nl, params, g, rc)
        rows.append([eps, E, E / c.level])
        run.stage(f"expansion eps={eps!r}", [], {"eps": eps, "E": E, "E_over_level": E / c.level}, t0)
    path = write_csv(out / "expansion.csv", ["eps", "E", "E_over_eps_2beta"], rows)
    run.stages[-1]["outputs"].append(str(path.relative_to(out)))
    return run.finish()


def cmd_lemma_check(cfg, out, threads=1, **_):
    run = Run("lemma-check", cfg, out)
    reports, verdicts = [], []
    for ell in cfg.lemma_ells:
        t0 = time.perf_counter()
        rep = search_equilibria(ell, cfg.lemma_dim, cfg.lemma_trials, cfg.seed, workers=threads)
        reports.append(rep.as_dict())
        verdicts.append(rep.verdict())
        run.stage(f"lemma ell={ell}", [], {"ell": ell, "graphs": len(rep.graphs),
                                           "nontrivial": len(rep.nontrivial), "rejected": rep.rejected}, t0)
    p1 = write_json(out / "lemma_report.json", reports)
    p2 = _write_text(out / "lemma_verdicts.txt", "\n".join(verdicts) + "\n")
    run.stages[-1]["outputs"] += [str(p1.relative_to(out)), str(p2.relative_to(out))]
    for line in verdicts:
        print(line)
    return run.finish()


HANDLERS = {
    "profile": cmd_profile, "constants": cmd_constants, "reduce": cmd_reduce, "search": cmd_search,
    "maxmin": cmd_maxmin, "pde": cmd_pde, "lsreduce": cmd_lsreduce,
    "expansion-test": cmd_expansion_test, "lemma-check": cmd_lemma_check,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spikecluster", description="Multi-spike cluster toolkit")
    parser.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="run configuration or manifest JSON")
    common.add_argument("--out", type=Path, help="output directory (overrides the config)")
    common.add_argument("--seed", type=int, help="rng seed (overrides the config)")
    common.add_argument("--threads", type=int, default=1, help="worker threads where supported")
    common.add_argument("--cache-only", action="store_true", help="fail instead of solving a missing profile")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=(HANDLERS[name].__doc__ or name).split("\n")[0])
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else RunConfig().validate()
        if args.seed is not None:
            cfg.seed = args.seed
        if args.out is not None:
            cfg.out = str(args.out)
        cfg.validate()
        if args.threads < 1:
            raise ValidationError("--threads must be at least 1")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NotAdmissible)
            manifest = HANDLERS[args.command](cfg, Path(cfg.out), cache_only=args.cache_only,
                                              threads=args.threads)
    except (ValidationError, CacheMiss) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NumericalFailure as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except SpikeClusterError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    print(f"wrote {manifest}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
