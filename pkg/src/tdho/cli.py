"""Command-line front end.

Every subcommand reads a key=value config (``--config FILE``), applies
``--set key=value`` overrides, validates everything before computing and
writes CSV or JSON.  The exit code is 0 iff every certificate passes,
1 if a certificate fails and 2 for a rejected config.
"""

from __future__ import annotations

import argparse
import inspect
import math
import sys
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .errors import DomainError, IntegrationError, ParameterError, QuadratureError, \
    RefinementRequired
from .frequency import PROFILE_KINDS, profile_from_config
from .io import write_csv, write_json

PROFILE_KEYS = {"profile", "discontinuities"} | {
    p for f in PROFILE_KINDS.values() for p in inspect.signature(f).parameters}

COMMON = {"out": "-", "format": "csv", "tol": "1e-11"}

# per subcommand: key -> default
COMMANDS = {
    "solve": {"t0": "0", "t1": "30", "q0": "1", "p0": "0", "h": "1", "points_per_unit": "64"},
    "zeros": {"t0": "0", "t1": "20", "q0": "1", "p0": "0", "refined": "1"},
    "floquet-map": {"alpha": "2", "eta_min": "0", "eta_max": "0.3", "omega_min": "0.7",
                    "omega_max": "1.3", "grid_n": "64", "boundary_out": "",
                    "resonances": "3"},
    "adiabatic": {"epsilons": "0.2,0.1,0.05,0.025", "k": "", "phases": "16"},
    "trace-check": {"mu_tol": "1e-7"},
    "ermakov-check": {"t0": "0", "t1": "30", "drift_tol": "1e-8"},
}

DEFAULT_PROFILE = {"solve": "mathieu", "zeros": "mathieu", "floquet-map": "mathieu",
                   "adiabatic": "spline_ramp", "trace-check": "mathieu",
                   "ermakov-check": "mathieu"}

INT_KEYS = {"h", "grid_n", "points_per_unit", "refined", "phases", "resonances", "k"}
STR_KEYS = {"out", "format", "boundary_out", "epsilons", "profile", "discontinuities", "k"}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str
    values: dict = field(default_factory=dict)

    def profile_params(self):
        return {k: v for k, v in self.values.items() if k in PROFILE_KEYS and v != ""}

    def get(self, key):
        return self.values[key]

    def f(self, key):
        return float(self.values[key])

    def i(self, key):
        return int(self.values[key])


def parse_kv_lines(lines, source):
    out = {}
    for n, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{n}: expected key=value, got {raw.strip()!r}")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def build_config(command, config_path=None, overrides=()):
    vals = {**COMMON, **COMMANDS[command], "profile": DEFAULT_PROFILE[command]}
    if config_path:
        try:
            with open(config_path) as fh:
                vals.update(parse_kv_lines(fh, config_path))
        except OSError as exc:
            raise ConfigError(f"cannot read config {config_path}: {exc.strerror}") from None
    vals.update(parse_kv_lines(overrides, "--set"))
    cfg = RunConfig(command, vals)
    validate(cfg)
    return cfg


def validate(cfg: RunConfig):
    allowed = set(COMMON) | set(COMMANDS[cfg.command]) | PROFILE_KEYS
    unknown = sorted(set(cfg.values) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) for {cfg.command}: {', '.join(unknown)}")
    for k, v in cfg.values.items():
        if k in STR_KEYS or v == "":
            continue
        try:
            x = int(v) if k in INT_KEYS else float(v)
        except ValueError:
            raise ConfigError(f"{k}={v!r} is not a number") from None
        if k not in INT_KEYS and not math.isfinite(x):
            raise ConfigError(f"{k} must be finite")
    if cfg.values["format"] not in ("csv", "json"):
        raise ConfigError("format must be csv or json")
    if not 0 < cfg.f("tol") < 1e-3:
        raise ConfigError("tol must lie in (0, 1e-3)")
    if cfg.command == "adiabatic":
        try:
            eps = [float(x) for x in cfg.values["epsilons"].split(",") if x.strip()]
        except ValueError:
            raise ConfigError("epsilons must be a comma-separated list of numbers") from None
        if len(eps) < 4 or min(eps) <= 0 or max(eps) / min(eps) < 8 - 1e-12:
            raise ConfigError("need at least 4 positive epsilons spanning a factor >= 8")
    if "t0" in cfg.values and "t1" in cfg.values and not cfg.f("t1") > cfg.f("t0"):
        raise ConfigError("need t1 > t0")
    if cfg.command == "solve" and cfg.i("h") < 0:
        raise ConfigError("h must be >= 0")
    if cfg.command == "floquet-map":
        if cfg.i("grid_n") < 2:
            raise ConfigError("grid_n must be >= 2")
        if not cfg.f("alpha") > 0:
            raise ConfigError("alpha must be positive")
    try:
        prof = profile_from_config(cfg.profile_params())
    except (ParameterError, DomainError, TypeError, ValueError) as exc:
        raise ConfigError(f"profile: {exc}") from None
    if cfg.command in ("trace-check",) and prof.period is None:
        raise ConfigError("trace-check needs a periodic profile")
    cfg.values["_profile"] = prof


def _emit(cfg, columns, schema, meta):
    path = cfg.get("out")
    if cfg.get("format") == "json":
        payload = {**meta, "columns": {k: list(np.asarray(v).tolist()) for k, v in columns.items()}}
        text = write_json(path, payload, schema)
    else:
        text = write_csv(path, columns, schema, meta)
    if path in ("-", None, ""):
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


# ---------------------------------------------------------------------------
# subcommands

def cmd_solve(cfg: RunConfig):
    from .angle_action import approx_tilde, picard_piecewise, to_angle_action
    from .oracle import PhaseState, integrate_qp

    prof = cfg.values["_profile"]
    t0, t1, tol, h = cfg.f("t0"), cfg.f("t1"), cfg.f("tol"), cfg.i("h")
    q0, p0 = cfg.f("q0"), cfg.f("p0")
    st = to_angle_action(PhaseState(t0, q0, p0), prof.one_sided(t0, +1)[0])
    pw = picard_piecewise(prof, st.psi, st.I, t0, t1, max(h, 1), cfg.i("points_per_unit"))
    grid = np.concatenate([s.grid if k == 0 else s.grid[1:] for k, s in enumerate(pw.series)])
    cat = lambda parts: np.concatenate([p if k == 0 else p[1:] for k, p in enumerate(parts)])  # noqa: E731
    psi_h, I_h = cat(pw.psi(h)), cat(pw.I(h))
    phi = cat([s.phi for s in pw.series])
    I_1 = cat(pw.I(1))
    psi_bound = cat([s.psi_bound(h) for s in pw.series])
    logI_bound = cat([s.log_I_bound(h) for s in pw.series])

    tr = integrate_qp(prof, q0, p0, t0, t1, tol)
    q, p = tr.q(grid), tr.p(grid)
    w = np.asarray(prof.value(grid), float) * np.ones_like(grid)
    I = (p * p + w * w * q * q) / (2 * w)  # noqa: E741
    psi = np.unwrap(np.arctan2(w * q, p))
    psi += 2 * math.pi * np.round((psi_h[0] - psi[0]) / (2 * math.pi))
    # the hat approximant: zeroth-order phase with the first-order action
    q_hat = np.sqrt(2 * I_1 / w) * np.sin(phi)
    q_zero = np.sqrt(2 * st.I / w) * np.sin(phi)
    q_tilde = approx_tilde(prof, st.psi, st.I, t0, grid).q

    # jump instants hold left limits of the iterates; compare away from them
    finite = np.isfinite(psi_bound) & ~np.isin(grid, pw.jumps)
    # oracle global error grows with elapsed time
    slack = (10 * tol * (1 + np.abs(grid - t0)))[finite]
    psi_ok = bool(np.all(np.abs(psi - psi_h)[finite] <= psi_bound[finite] + slack))
    I_ok = bool(np.all(np.abs(np.log(I / I_h))[finite] <= logI_bound[finite] + slack))
    cols = {"t": grid, "q": q, "p": p, "psi": psi, "I": I, "q_zeroth": q_zero,
            "q_tilde": q_tilde, "q_hat": q_hat, "I_1": I_1, f"psi_{h}": psi_h,
            f"I_{h}": I_h, "psi_bound": psi_bound, "log_I_bound": logI_bound}
    certs = {"psi_bound": psi_ok, "log_I_bound": I_ok}
    _emit(cfg, cols, "solve/1", {"profile": prof.name, "order": h, "tol": tol,
                                 **{f"cert_{k}": v for k, v in certs.items()}})
    return certs


def cmd_zeros(cfg: RunConfig):
    from .riccati import find_zero_sequence

    prof = cfg.values["_profile"]
    zs = find_zero_sequence(prof, cfg.f("q0"), cfg.f("p0"), cfg.f("t0"), cfg.f("t1"),
                            tol=min(cfg.f("tol"), 1e-12), refined=bool(cfg.i("refined")))
    certs = zs.certificates()
    if not cfg.i("refined"):
        certs.pop("refined_bounds", None)
    if cfg.get("format") == "json":
        _emit(cfg, {"h": zs.indices, "t_h": zs.instants}, "zero-sequence/1", certs)
    else:
        text = zs.to_csv(cfg.get("out"))
        if cfg.get("out") in ("-", None, ""):
            sys.stdout.write(text)
    return certs


def cmd_floquet_map(cfg: RunConfig):
    from .floquet import stability_map

    alpha = cfg.f("alpha")
    n = cfg.i("grid_n")

    def progress(frac):
        print(f"floquet-map: {100 * frac:.0f}%", file=sys.stderr)

    m = stability_map(alpha, (cfg.f("eta_min"), cfg.f("eta_max")),
                      (cfg.f("omega_min"), cfg.f("omega_max")), n, tol=cfg.f("tol"),
                      progress=progress if n * n >= 4096 else None)
    W, E = np.meshgrid(m.omega_bar, m.eta)
    cols = {"omega_bar": W.ravel(), "eta": E.ravel(), "mu": m.mu.ravel(),
            "class": m.classes.ravel(), "analytic_unstable": m.analytic_unstable().ravel()}
    marks = m.resonance_markers(cfg.i("resonances"))
    _emit(cfg, cols, "stability-map/1",
          {"alpha": alpha, "resonances": ";".join("%.17g" % r for r in marks)})
    if cfg.get("boundary_out"):
        m.boundary_csv(cfg.get("boundary_out"))
    det_ok = bool(np.all(np.abs(m.det - 1) < 1e-9))
    return {"det_unit": det_ok, "finite": bool(np.all(np.isfinite(m.mu)))}


def cmd_adiabatic(cfg: RunConfig):
    from .adiabatic import scaling_experiment

    prof = cfg.values["_profile"]
    eps = [float(x) for x in cfg.get("epsilons").split(",") if x.strip()]
    k = cfg.get("k")
    rep = scaling_experiment(prof, int(k) if k != "" else None, eps, n_phases=cfg.i("phases"),
                             tol=cfg.f("tol"))
    if cfg.get("format") == "json":
        text = rep.to_json(cfg.get("out"))
    else:
        text = rep.to_csv(cfg.get("out"))
    if cfg.get("out") in ("-", None, ""):
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    varies = bool(np.any(rep.deltas))
    return {"deltas_positive": bool(np.all(rep.deltas > 0)) if varies else True,
            "slope_finite": math.isfinite(rep.fitted_slope) if varies else True,
            "tail_ok": rep.tail_ok}


def cmd_trace_check(cfg: RunConfig):
    from .floquet import monodromy, mu_leading_order, trace_via_angle_action

    prof = cfg.values["_profile"]
    tol = cfg.f("tol")
    rep = monodromy(prof, tol)
    mu_t = trace_via_angle_action(prof, tol)
    mu0 = mu_leading_order(prof)
    cols = {"mu_monodromy": [rep.mu], "mu_trace": [mu_t], "mu_leading": [mu0],
            "det": [rep.det], "class": [rep.classification]}
    _emit(cfg, cols, "trace-check/1", {"profile": prof.name, "period": rep.period})
    return {"trace_agrees": abs(mu_t - rep.mu) < cfg.f("mu_tol"),
            "det_unit": abs(rep.det - 1) < 1e-9}


def cmd_ermakov_check(cfg: RunConfig):
    from .linear_systems import ermakov_check, fundamental_matrix

    prof = cfg.values["_profile"]
    t0, t1 = cfg.f("t0"), cfg.f("t1")
    fund = fundamental_matrix(prof, np.linspace(t0, t1, 2001), t0=t0, tol=cfg.f("tol"))
    rep = ermakov_check(fund)
    cols = {"rho_min": [rep.rho_min], "residual_analytic": [rep.residual_analytic],
            "residual_fd": [rep.residual_fd], "invariant_drift": [rep.invariant_drift],
            "I_q1": [rep.fundamental_I[0]], "I_q2": [rep.fundamental_I[1]],
            "general_solution_residual": [rep.general_solution_residual],
            "wronskian_drift": [fund.wronskian_drift]}
    _emit(cfg, cols, "ermakov-check/1", {"profile": prof.name})
    return {"ermakov": rep.invariant_drift < cfg.f("drift_tol") and rep.ok,
            "wronskian": fund.wronskian_drift < 1e-9}


HANDLERS = {"solve": cmd_solve, "zeros": cmd_zeros, "floquet-map": cmd_floquet_map,
            "adiabatic": cmd_adiabatic, "trace-check": cmd_trace_check,
            "ermakov-check": cmd_ermakov_check}

HELP = {
    "solve": "oracle solution, Picard approximants and certified bounds",
    "zeros": "zeros of q and p with gap-bound certificates",
    "floquet-map": "Mathieu stability map in (omega_bar, eta)",
    "adiabatic": "Delta I scaling experiment over epsilon",
    "trace-check": "monodromy trace against the angle-action trace formula",
    "ermakov-check": "Ermakov invariant and Wronskian checks",
}


def _parser():
    ap = argparse.ArgumentParser(prog="tdho", description="Time-dependent harmonic oscillator "
                                 "experiments. Configs are key=value files; every key can be "
                                 "overridden with --set key=value.")
    ap.add_argument("--version", action="version", version=f"tdho {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, keys in COMMANDS.items():
        defaults = ", ".join(f"{k}={v}" for k, v in {**COMMON, **keys}.items())
        sp = sub.add_parser(name, help=HELP[name],
                            description=f"{HELP[name]}. Keys (defaults): {defaults}; "
                                        f"profile={DEFAULT_PROFILE[name]} plus its parameters.")
        sp.add_argument("--config", "-c", help="key=value config file")
        sp.add_argument("--set", "-s", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config value (repeatable)")
        sp.add_argument("--out", "-o", help="output path ('-' for stdout)")
        sp.add_argument("--format", choices=("csv", "json"), help="output format")
    return ap


def main(argv=None):
    args = _parser().parse_args(argv)
    overrides = list(args.set)
    if args.out is not None:
        overrides.append(f"out={args.out}")
    if args.format is not None:
        overrides.append(f"format={args.format}")
    try:
        cfg = build_config(args.command, args.config, overrides)
    except ConfigError as exc:
        print(f"tdho: config error: {exc}", file=sys.stderr)
        return 2
    try:
        certs = HANDLERS[args.command](cfg)
    except (DomainError, ParameterError) as exc:
        print(f"tdho: {exc}", file=sys.stderr)
        return 2
    except (IntegrationError, QuadratureError, RefinementRequired) as exc:
        print(f"tdho: numerical failure: {exc}", file=sys.stderr)
        return 1
    failed = [k for k, v in certs.items() if not v]
    for k in failed:
        print(f"tdho: certificate failed: {k}", file=sys.stderr)
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
