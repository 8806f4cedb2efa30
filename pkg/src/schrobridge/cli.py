"""Batch runner: ``schrobridge run|list|describe``.

A config is a flat ``key = value`` text file (``#`` starts a comment);
``key=value`` arguments after it override file entries, the last one winning.
The config argument may also be a bare experiment name, which runs that
experiment with its defaults.

Exit codes: 0 pass, 1 runtime failure, 2 config error, 3 acceptance failure.
"""

from __future__ import annotations

import argparse
import hashlib
import io
import math
import os
import re
import sys
import warnings
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from . import analysis, gaussian_oracle, langevin, metrics, sb_step, sinkhorn
from .analysis import DEFAULT_EPSILONS, rate_fit
from .errors import InputDomainError
from .measures import GaussianSpec, GridSpec, discretize, linear_model, model_from_name

EXIT_PASS, EXIT_RUNTIME, EXIT_CONFIG, EXIT_FAIL = 0, 1, 2, 3


class ConfigError(Exception):
    pass


# ---------------------------------------------------------------- config

def _floats(text: str) -> tuple:
    try:
        vals = tuple(float(s) for s in text.split(",") if s.strip())
    except ValueError as exc:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from exc
    if not vals:
        raise ConfigError("empty number list")
    return vals


def _positive_floats(text: str) -> tuple:
    vals = _floats(text)
    if any(not (math.isfinite(v) and v > 0) for v in vals):
        raise ConfigError(f"values must be positive, got {text!r}")
    return vals


def _int(text: str) -> int:
    try:
        return int(text)
    except ValueError as exc:
        raise ConfigError(f"expected an integer, got {text!r}") from exc


def _positive_int(text: str) -> int:
    v = _int(text)
    if v < 1:
        raise ConfigError(f"expected a positive integer, got {text!r}")
    return v


def _float(text: str) -> float:
    try:
        return float(text)
    except ValueError as exc:
        raise ConfigError(f"expected a number, got {text!r}") from exc


def _grid(text: str):
    if text == "auto":
        return None
    parts = text.split(":")
    if len(parts) != 3:
        raise ConfigError(f"grid must be 'auto' or 'lower:upper:n', got {text!r}")
    try:
        return GridSpec(float(parts[0]), float(parts[1]), int(parts[2]))
    except (ValueError, InputDomainError) as exc:
        raise ConfigError(f"bad grid {text!r}: {exc}") from exc


def _model(text: str):
    try:
        return model_from_name(text)
    except InputDomainError as exc:
        raise ConfigError(str(exc)) from exc


def _scenario(text: str):
    if text not in sb_step.SCENARIOS:
        raise ConfigError(f"unknown scenario {text!r}; known: {sorted(sb_step.SCENARIOS)}")
    return text


def _text(text: str) -> str:
    return text


_PARSERS: Dict[str, Callable] = {
    "experiment": _text,
    "seed": _int,
    "output": _text,
    "model": _model,
    "grid": _grid,
    "epsilons": _positive_floats,
    "tol": _float,
    "max_iter": _positive_int,
    "variance": _float,
    "points": _floats,
    "n_paths": _positive_int,
    "n_steps": _positive_int,
    "linear_slope": _float,
    "scenario": _scenario,
    "n_mc": _positive_int,
    "n_t": _positive_int,
}

_EPS_DEFAULT = ",".join(f"{e:.12g}" for e in DEFAULT_EPSILONS)
_COMMON = {"seed": "0", "output": "-"}
_SOLVER = {"tol": "1e-10", "max_iter": "100000"}


def parse_config_text(text: str) -> Dict[str, str]:
    out: Dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not re.fullmatch(r"[a-z_][a-z0-9_]*", key):
            raise ConfigError(f"line {lineno}: bad key {key!r}")
        out[key] = value
    return out


def config_hash(raw: Dict[str, str]) -> str:
    canon = "\n".join(f"{k}={raw[k]}" for k in sorted(raw) if k != "output")
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


# ---------------------------------------------------------------- experiments

@dataclass
class Outcome:
    rows: List[tuple]
    passed: bool
    detail: str
    fit: Optional[tuple] = None  # (column name, RateReport)


@dataclass(frozen=True)
class Experiment:
    name: str
    claim: str
    rule: str
    columns: tuple
    defaults: Dict[str, str]
    run: Callable = field(repr=False)


def _decreasing(vals, allowed_violations=0):
    return int(np.sum(np.diff(vals) >= 0)) <= allowed_violations


def _marginal(cfg):
    grid = cfg["grid"] or cfg["model"].default_grid()
    return discretize(cfg["model"], grid)


def _solve(rho, eps, cfg):
    return sinkhorn.solve_symmetric(rho, eps, tol=cfg["tol"], max_iter=cfg["max_iter"])


def _sorted_eps(cfg):
    return sorted(cfg["epsilons"], reverse=True)


def _gauss_kl_rate(cfg):
    spec = GaussianSpec(0.0, cfg["variance"])
    eps = _sorted_eps(cfg)
    rows = []
    for e in eps:
        kl = gaussian_oracle.symmetrized_kl_gaussian(gaussian_oracle.ou_pair_covariance(spec, e),
                                                     gaussian_oracle.sb_pair_covariance(spec, e))
        lead = (e / spec.variance) ** 4 / 1152
        rows.append((e, kl, kl / lead))
    fit = rate_fit(eps, [r[1] for r in rows])
    ratio = rows[-1][2]
    ok = 0.95 <= ratio <= 1.05 and abs(fit.slope - 4.0) <= 0.2
    return Outcome(rows, ok, f"ratio at eps={eps[-1]:g} is {ratio:.6f}; slope {fit.slope:.4f}",
                   ("sym_kl", fit))


def _gaussian_of(model):
    m = re.fullmatch(r"gaussian\(([^,]+),([^)]+)\)", model.name)
    if model.name == "gaussian" or not m:
        raise ConfigError(f"this experiment needs a gaussian(mean,var) model, got {model.name!r}")
    return GaussianSpec(float(m.group(1)), float(m.group(2)))


def _sinkhorn_vs_oracle(cfg):
    spec = _gaussian_of(cfg["model"])
    rho = _marginal(cfg)
    rows = []
    for e in _sorted_eps(cfg):
        plan = _solve(rho, e, cfg)
        x = rho.points - rho.mean()
        cross = float(x @ plan.plan @ x)
        oracle = gaussian_oracle.sb_pair_covariance(spec, e).cross
        marg = float(max(np.max(np.abs(plan.row_sums() - rho.weights)),
                         np.max(np.abs(plan.col_sums() - rho.weights))))
        rows.append((e, cross, oracle, abs(cross - oracle) / abs(oracle), marg, plan.n_iter))
    worst_rel = max(r[3] for r in rows)
    worst_marg = max(r[4] for r in rows)
    ok = worst_rel < 1e-2 and worst_marg < 1e-8
    return Outcome(rows, ok, f"max relative cross-moment error {worst_rel:.3e}; "
                             f"max marginal error {worst_marg:.3e}")


def _score_limit(cfg):
    rho = _marginal(cfg)
    model = cfg["model"]
    quarter_fisher = 0.25 * metrics.fisher_discrete(rho)
    eps = _sorted_eps(cfg)
    rows = []
    for e in eps:
        plan = _solve(rho, e, cfg)
        fl = analysis.fisher_limit_check(plan, model)
        rows.append((e, analysis.score_residual(plan, model), fl, fl / quarter_fisher))
    fit = rate_fit(eps, [r[1] for r in rows])
    ratio = rows[-1][3]
    ok = _decreasing([r[1] for r in rows]) and fit.slope >= 0.8 and abs(ratio - 1) <= 0.05
    return Outcome(rows, ok, f"slope {fit.slope:.4f}; fisher check / (I/4) at eps={eps[-1]:g} is {ratio:.5f}",
                   ("score_residual", fit))


def _generator_limit(cfg):
    rho = _marginal(cfg)
    model = cfg["model"]
    bump, ident = analysis.gaussian_observable(), analysis.identity_observable()
    eps = _sorted_eps(cfg)
    rows = []
    for e in eps:
        plan = _solve(rho, e, cfg)
        r_id = analysis.generator_residual(plan, model, ident)
        rows.append((e, analysis.generator_residual(plan, model, bump), r_id, r_id / (e / 8)))
    fit = rate_fit(eps, [r[1] for r in rows])
    worst = max(abs(r[3] - 1) for r in rows)
    ok = _decreasing([r[1] for r in rows]) and fit.slope > 0 and worst <= 0.10
    return Outcome(rows, ok, f"bump slope {fit.slope:.4f}; identity residual within "
                             f"{100 * worst:.2f}% of eps/8", ("residual_bump", fit))


def _cost_expansion(cfg):
    rho = _marginal(cfg)
    fisher = metrics.fisher_discrete(rho)
    eps = _sorted_eps(cfg)
    rows = []
    for e in eps:
        h = sinkhorn.entropic_cost(_solve(rho, e, cfg))
        lead = e * fisher / 8
        rows.append((e, h, lead, abs(h - lead) / e**2))
    scaled = [r[3] for r in rows]
    fit = rate_fit(eps, [abs(r[1] - r[2]) for r in rows])
    ok = _decreasing(scaled) and scaled[-1] < 0.5 * scaled[0]
    return Outcome(rows, ok, f"|H - eps I/8|/eps^2 from {scaled[0]:.4e} to {scaled[-1]:.4e}",
                   ("cost_gap", fit))


def _feynman_kac_check(cfg):
    spec = _gaussian_of(cfg["model"])
    model = cfg["model"]
    rows = []
    worst = 0.0
    for e in _sorted_eps(cfg):
        for x in cfg["points"]:
            for y in cfg["points"]:
                est = langevin.bridge_feynman_kac(model, x, y, e, cfg["n_paths"], cfg["n_steps"], cfg["seed"])
                log_q = (-0.5 * math.log(2 * math.pi * e) - (x - y) ** 2 / (2 * e)
                         + 0.5 * (model.log_density(y) - model.log_density(x)) - est.value)
                log_exact = gaussian_oracle.ou_transition_logpdf(spec, x, y, e)
                rel = abs(math.expm1(log_q - log_exact))
                worst = max(worst, rel)
                rows.append((x, y, e, est.value, est.std_error, log_q, log_exact, rel))
    # constant harmonic characteristic: c = eps * slope^2 / 8 exactly
    lin = linear_model(cfg["linear_slope"])
    const_ok = True
    for e in _sorted_eps(cfg):
        est = langevin.bridge_feynman_kac(lin, 0.0, 0.0, e, cfg["n_paths"], cfg["n_steps"], cfg["seed"])
        exact = e * cfg["linear_slope"] ** 2 / 8
        const_ok &= abs(est.value - exact) <= max(3 * est.std_error, 1e-12 * max(1.0, exact))
    ok = worst < 0.02 and const_ok
    return Outcome(rows, ok, f"max relative kernel error {worst:.3e}; constant case "
                             f"{'exact' if const_ok else 'off'}")


def _sb_step_gap(cfg):
    grid = cfg["grid"]
    if grid is None:
        sc = sb_step.scenario(cfg["scenario"])
    else:
        if grid.lower != -grid.upper:
            raise ConfigError("sb_step_gap needs a symmetric grid")
        sc = sb_step.scenario(cfg["scenario"], grid.n_points, grid.upper)
    rep = sb_step.step_gap_report(sc.rho, sc.field, cfg["epsilons"], n_mc=cfg["n_mc"],
                                  n_steps=cfg["n_steps"], seed=cfg["seed"], tol=cfg["tol"])
    rows = [tuple(r) + (r[1] / r[0],) for r in rep.rows]
    ratio = [r[4] for r in rows]
    tri = all(r[1] <= r[2] + r[3] + 1e-12 for r in rows)
    ok = _decreasing(ratio, allowed_violations=1) and rep.sb_euler.slope > 1 and tri
    return Outcome(rows, ok, f"W2(sb,euler) slope {rep.sb_euler.slope:.4f}; "
                             f"triangle inequality {'holds' if tri else 'violated'}",
                   ("w2_sb_euler", rep.sb_euler))


def _fisher_continuity(cfg):
    rho = _marginal(cfg)
    fisher = metrics.fisher_discrete(rho)
    eps = _sorted_eps(cfg)
    rows = []
    for e in eps:
        fi = metrics.integrated_fisher(_solve(rho, e, cfg), cfg["n_t"])
        rows.append((e, fi, fisher, fisher - fi))
    bounded = all(r[1] <= fisher + 1e-6 for r in rows)
    shrink = rows[0][3] / rows[-1][3] if rows[-1][3] > 0 else math.inf
    fit = rate_fit(eps, [r[3] for r in rows])
    ok = bounded and shrink >= 2
    return Outcome(rows, ok, f"deficit shrinks {shrink:.2f}x; bound "
                             f"{'holds' if bounded else 'violated'}", ("deficit", fit))


def _defaults(**kw):
    d = dict(_COMMON)
    d.update(kw)
    return d


EXPERIMENTS: Dict[str, Experiment] = {e.name: e for e in [
    Experiment("gauss_kl_rate",
               "symmetrized KL between Langevin and bridge pair laws of a Gaussian is eps^4/1152 to leading order",
               "ratio to eps^4/1152 in [0.95, 1.05] at the smallest eps and fitted slope 4.0 +- 0.2",
               ("epsilon", "sym_kl", "ratio"),
               _defaults(variance="1", epsilons=_EPS_DEFAULT), _gauss_kl_rate),
    Experiment("sinkhorn_vs_oracle",
               "the discrete bridge of a Gaussian reproduces the closed-form pair covariance",
               "relative cross-moment error < 1e-2 and marginal error < 1e-8",
               ("epsilon", "cross_plan", "cross_oracle", "rel_err", "marginal_err", "n_iter"),
               _defaults(model="gaussian(0,1)", grid="-6:6:241", epsilons="0.5", **_SOLVER),
               _sinkhorn_vs_oracle),
    Experiment("score_limit",
               "(b - Id)/eps tends to half the score and eps^-2 |b - Id|^2 to a quarter of the Fisher information",
               "score residual decreasing with slope >= 0.8; Fisher check within 5% of I/4 at the smallest eps",
               ("epsilon", "score_residual", "fisher_check", "fisher_ratio"),
               _defaults(model="gaussian(0,1)", grid="auto", epsilons=_EPS_DEFAULT, **_SOLVER),
               _score_limit),
    Experiment("generator_limit",
               "(E[xi(Y)|X] - xi)/eps tends to the Langevin generator applied to xi",
               "exp(-x^2) residual decreasing with positive slope; identity residual within 10% of eps/8",
               ("epsilon", "residual_bump", "residual_identity", "identity_ratio"),
               _defaults(model="gaussian(0,1)", grid="auto", epsilons=_EPS_DEFAULT, **_SOLVER),
               _generator_limit),
    Experiment("cost_expansion",
               "the entropic cost is eps I/8 up to o(eps^2)",
               "|H - eps I/8|/eps^2 decreasing, last point below half the first",
               ("epsilon", "entropic_cost", "leading_term", "scaled_gap"),
               _defaults(model="gaussian(0,1)", grid="auto", epsilons=_EPS_DEFAULT, **_SOLVER),
               _cost_expansion),
    Experiment("feynman_kac_check",
               "Brownian kernel times the bridge correction reproduces the Langevin transition kernel",
               "relative kernel error < 2% at every point pair; constant-U case exact within 3 standard errors",
               ("x", "y", "epsilon", "c_hat", "c_se", "logq_hat", "logq_exact", "rel_err"),
               _defaults(model="gaussian(0,1)", epsilons="0.1,0.5", points="-1,0,1",
                         n_paths="100000", n_steps="64", linear_slope="1"),
               _feynman_kac_check),
    Experiment("sb_step_gap",
               "the bridge step matches the explicit Euler step to o(eps) in W2",
               "W2(sb,euler)/eps decreasing (one violation allowed), slope > 1, triangle inequality per row",
               ("epsilon", "w2_sb_euler", "w2_ld_euler", "w2_sb_ld", "w2_sb_euler_over_eps"),
               _defaults(scenario="heat_flow", grid="auto", epsilons=_EPS_DEFAULT, n_mc="256",
                         n_steps="64", **_SOLVER),
               _sb_step_gap),
    Experiment("fisher_continuity",
               "the time-averaged Fisher information of the entropic interpolation tends to I(rho) from below",
               "integrated Fisher <= I + 1e-6 at every eps; deficit shrinks >= 2x across the sweep",
               ("epsilon", "integrated_fisher", "fisher_marginal", "deficit"),
               _defaults(model="gaussian(0,1)", grid="auto", epsilons=_EPS_DEFAULT, n_t="21", **_SOLVER),
               _fisher_continuity),
]}


def resolve_config(raw: Dict[str, str]) -> tuple:
    """Validate ``raw`` against its experiment; returns ``(experiment, merged raw, parsed)``."""
    name = raw.get("experiment")
    if name is None:
        raise ConfigError("config has no 'experiment' key")
    if name not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {name!r}; run 'schrobridge list'")
    exp = EXPERIMENTS[name]
    merged = dict(exp.defaults)
    merged.update(raw)
    unknown = sorted(set(merged) - set(exp.defaults) - {"experiment"})
    if unknown:
        raise ConfigError(f"unknown key(s) for {name}: {', '.join(unknown)}")
    parsed = {k: _PARSERS[k](v) for k, v in merged.items()}
    return exp, merged, parsed


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.12g}"


def render(exp: Experiment, merged: Dict[str, str], outcome: Outcome) -> str:
    buf = io.StringIO()
    buf.write(f"# experiment={exp.name}\n")
    buf.write(f"# claim={exp.claim}\n")
    buf.write(f"# config_hash={config_hash(merged)}\n")
    buf.write(f"# seed={merged['seed']}\n")
    buf.write(",".join(exp.columns) + "\n")
    for row in outcome.rows:
        buf.write(",".join(_fmt(v) for v in row) + "\n")
    if outcome.fit is None:
        buf.write("# fit=none\n")
    else:
        col, rep = outcome.fit
        buf.write(f"# fit column={col} slope={rep.slope:.6f} intercept={rep.intercept:.6f} "
                  f"r_squared={rep.r_squared:.6f}\n")
    buf.write(f"# {'PASS' if outcome.passed else 'FAIL'}: {outcome.detail}\n")
    return buf.getvalue()


def run_config(raw: Dict[str, str], stdout=None) -> int:
    stdout = stdout or sys.stdout
    try:
        exp, merged, parsed = resolve_config(raw)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        outcome = exp.run(parsed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ArithmeticError, RuntimeError, ValueError) as exc:
        print(f"{exp.name} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    text = render(exp, merged, outcome)
    if parsed["output"] == "-":
        stdout.write(text)
    else:
        with open(parsed["output"], "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        print(f"{exp.name}: {'PASS' if outcome.passed else 'FAIL'} ({outcome.detail}); "
              f"wrote {parsed['output']}", file=stdout)
    return EXIT_PASS if outcome.passed else EXIT_FAIL


# ---------------------------------------------------------------- commands

def list_experiments(machine: bool = False, pattern: Optional[str] = None) -> str:
    lines = []
    for name, exp in EXPERIMENTS.items():
        if pattern and pattern not in name:
            continue
        keys = ",".join(sorted(exp.defaults))
        if machine:
            lines.append(f"name={name} columns={','.join(exp.columns)} keys={keys}")
        else:
            lines.append(f"{name:<20} {exp.claim}\n{'':<20} keys: {keys}")
    return "\n".join(lines) + ("\n" if lines else "")


def describe(name: str) -> str:
    exp = EXPERIMENTS[name]
    out = [f"{exp.name}", f"  claim:   {exp.claim}", f"  pass if: {exp.rule}",
           f"  columns: {','.join(exp.columns)}", "  keys (defaults):"]
    out += [f"    {k} = {v}" for k, v in sorted(exp.defaults.items())]
    return "\n".join(out) + "\n"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="schrobridge", description="Run bridge and Langevin convergence experiments.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    r = sub.add_parser("run", help="run an experiment from a config file or by name")
    r.add_argument("config", help="config file, or an experiment name for defaults")
    r.add_argument("overrides", nargs="*", metavar="key=value")
    ls = sub.add_parser("list", help="list experiments")
    ls.add_argument("--machine", action="store_true", help="key=value output")
    ls.add_argument("--filter", default=None, help="substring of the experiment name")
    d = sub.add_parser("describe", help="show an experiment's claim, keys and CSV columns")
    d.add_argument("experiment")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "list":
        sys.stdout.write(list_experiments(args.machine, args.filter))
        return EXIT_PASS
    if args.command == "describe":
        if args.experiment not in EXPERIMENTS:
            print(f"unknown experiment {args.experiment!r}", file=sys.stderr)
            parser.print_usage(sys.stderr)
            return EXIT_CONFIG
        sys.stdout.write(describe(args.experiment))
        return EXIT_PASS
    try:
        if os.path.isfile(args.config):
            with open(args.config, encoding="utf-8") as fh:
                raw = parse_config_text(fh.read())
        elif args.config in EXPERIMENTS:
            raw = {"experiment": args.config}
        else:
            parser.print_usage(sys.stderr)
            print(f"no config file or experiment named {args.config!r}", file=sys.stderr)
            return EXIT_CONFIG
        raw.update(parse_config_text("\n".join(args.overrides)))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    with warnings.catch_warnings():
        warnings.simplefilter("default")
        return run_config(raw)


if __name__ == "__main__":
    sys.exit(main())
