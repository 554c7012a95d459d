"""Command-line driver: single runs, parameter sweeps and figure data as CSV.

Usage::

    photon-src simulate --config run.cfg --out results/
    photon-src sweep    --config sweep.cfg --out results/ [--numeric] [--points N]
    photon-src fig2     [--config base.cfg] --out results/ [--points N]
    photon-src figC     [--config map.cfg] --out results/ [--points N]

The config file is flat UTF-8 ``key = value``, one pair per line, ``#``
starting a comment. Exit codes: 0 success, 2 configuration error, 3
numerical failure. ``PHOTON_SRC_THREADS`` caps the number of worker
processes used for sweeps (``1`` runs everything in-process).
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from .closedform import (
    EmissionNotReachedError,
    emission_time,
    extended_decay,
    lambda_si,
    lambda_si_bound,
    p_si_total_rre,
    purity_fidelity,
    ratio_map,
    ratio_threshold,
)
from .effective import SingularityError
from .lindblad import (
    IntegrationError,
    IntegratorConfig,
    PopulationThreshold,
    emission_time_numeric,
    evolve,
    photon_flux,
)
from .photonics import build_record, purity_fidelity_numeric, temporal_state
from .qmodel import (
    LevelScheme,
    LinearPulse,
    ParameterError,
    SystemParams,
    TabulatedPulse,
    basis_labels,
    optimal_kappa_ex,
)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

PARAM_KEYS = tuple(f.name for f in fields(SystemParams))
PULSE_KEYS = ("omega0", "t_end")
OTHER_KEYS = (
    "scheme", "pulse", "pulse_file", "rtol", "atol", "epsilon", "t_max", "threshold", "n_t",
    "sweep_param", "sweep_values", "sweep_start", "sweep_stop", "sweep_points", "sweep_scale",
    "omega0_values", "omega2_values",
    "g_min", "g_max", "omega2_min", "omega2_max", "kappa_ex_over_gamma", "kappa_in_over_gamma",
)
KNOWN_KEYS = frozenset(PARAM_KEYS + PULSE_KEYS + OTHER_KEYS)

# Fig. 2 baseline: gamma_u = 0.1, gamma_o = kappa_in = 0.01, kappa_ex optimal, zero detunings.
BASELINE = {"kappa_ex": "optimal", "kappa_in": "0.01", "gamma_u": "0.1", "gamma_o": "0.01",
            "omega2": "3.2", "omega0": "0.07", "scheme": "four"}
FIG2_OMEGA0 = (0.01, 0.04, 0.07)
THREE_LEVEL_OMEGA0 = 0.07


class ConfigError(ValueError):
    """Unreadable or invalid configuration."""


def _fmt(x) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.8e}"


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) if not isinstance(v, str) else v for v in row])


# --------------------------------------------------------------------------- config

def parse_config_text(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines; unknown keys and malformed lines raise :class:`ConfigError`."""
    out = {}
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected key = value, got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in KNOWN_KEYS:
            raise ConfigError(f"line {n}: unknown key {key!r}")
        if not value:
            raise ConfigError(f"line {n}: key {key!r} has no value")
        out[key] = value
    return out


def read_config(path) -> dict[str, str]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config_text(text)


def _float(cfg: dict, key: str, default=None) -> float:
    if key not in cfg:
        if default is None:
            raise ConfigError(f"missing key {key!r}")
        return float(default)
    try:
        return float(cfg[key])
    except ValueError:
        raise ConfigError(f"key {key!r}: not a number: {cfg[key]!r}") from None


def _float_list(cfg: dict, key: str) -> list[float]:
    try:
        return [float(v) for v in cfg[key].split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"key {key!r}: expected comma-separated numbers") from None


@dataclass(frozen=True)
class RunConfig:
    """Resolved configuration; ``kappa_ex_optimal`` re-derives ``kappa_ex`` for every sweep point."""

    scheme: LevelScheme
    values: dict
    kappa_ex_optimal: bool
    pulse_kind: str
    pulse_data: tuple | None
    rtol: float
    atol: float
    epsilon: float
    t_max: float | None
    threshold: float
    n_t: int
    raw: dict = field(default_factory=dict, compare=False)

    def params(self, **overrides) -> SystemParams:
        vals = dict(self.values)
        vals.update({k: v for k, v in overrides.items() if k in PARAM_KEYS})
        if self.kappa_ex_optimal and "kappa_ex" not in overrides:
            vals["kappa_ex"] = optimal_kappa_ex(vals["g"], vals["kappa_in"],
                                                vals["gamma_u"] + vals["gamma_o"])
        p = SystemParams(**vals)
        p.check(self.scheme)
        return p

    def pulse(self, **overrides):
        t_end = overrides.get("t_end", self.values_pulse["t_end"])
        if self.pulse_kind == "linear":
            return LinearPulse(overrides.get("omega0", self.values_pulse["omega0"]), t_end)
        times, amps = self.pulse_data
        scale = overrides.get("omega0", 1.0)
        return TabulatedPulse(times, scale * amps, None if math.isinf(t_end) else t_end)

    @property
    def values_pulse(self) -> dict:
        return {"omega0": _float(self.raw, "omega0", 0.07), "t_end": _float(self.raw, "t_end", math.inf)}

    def integrator(self) -> IntegratorConfig:
        return IntegratorConfig(rtol=self.rtol, atol=self.atol,
                                t_end_policy=PopulationThreshold(self.epsilon, self.t_max))


def _read_pulse_file(path: str):
    try:
        data = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"pulse_file {path!r}: {exc}") from None
    if data.shape[1] not in (2, 3):
        raise ConfigError("pulse_file needs columns t, re[, im]")
    amps = data[:, 1] + (1j * data[:, 2] if data.shape[1] == 3 else 0.0)
    return data[:, 0], amps


def resolve_config(raw: dict[str, str]) -> RunConfig:
    cfg = dict(BASELINE)
    cfg.update(raw)
    try:
        scheme = LevelScheme.parse(cfg["scheme"])
    except ValueError as exc:
        raise ConfigError(f"key 'scheme': {exc}") from None
    optimal = cfg["kappa_ex"].strip().lower() == "optimal"
    values = {}
    for key in PARAM_KEYS:
        if key == "kappa_ex" and optimal:
            values[key] = 0.0
            continue
        default = {"g": 1.0}.get(key, 0.0)
        values[key] = _float(cfg, key, default)
    if scheme is LevelScheme.THREE_LEVEL and "omega2" not in raw:
        values["omega2"] = 0.0
    kind = cfg.get("pulse", "linear").lower()
    if kind not in ("linear", "tabulated"):
        raise ConfigError(f"key 'pulse': expected linear or tabulated, got {kind!r}")
    data = None
    if kind == "tabulated":
        if "pulse_file" not in cfg:
            raise ConfigError("key 'pulse_file' is required for a tabulated pulse")
        data = _read_pulse_file(cfg["pulse_file"])
    n_t = int(_float(cfg, "n_t", 3000))
    rc = RunConfig(scheme=scheme, values=values, kappa_ex_optimal=optimal, pulse_kind=kind,
                   pulse_data=data, rtol=_float(cfg, "rtol", 1e-8), atol=_float(cfg, "atol", 1e-10),
                   epsilon=_float(cfg, "epsilon", 1e-6),
                   t_max=_float(cfg, "t_max") if "t_max" in cfg else None,
                   threshold=_float(cfg, "threshold", 0.99), n_t=n_t, raw=cfg)
    try:
        rc.params()
        rc.pulse()
        rc.integrator()
    except ParameterError as exc:
        raise ConfigError(str(exc)) from None
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return rc


# --------------------------------------------------------------------------- rows

SUMMARY_COLUMNS = ("P_si", "P_total", "P_re", "R_re", "D_S", "F_S", "lambda_si",
                   "lambda_si_bound", "t_em")
FOUR_LEVEL_COLUMNS = ("P_pure", "decay_trace_bound")
NUMERIC_COLUMNS = ("P_si_num", "P_total_num", "P_re_num", "R_re_num", "t_em_num",
                   "D_S_num", "F_S_num")
DEVIATIONS = (("P_total", "P_total_num"), ("P_re", "P_re_num"), ("t_em", "t_em_num"),
              ("D_S", "D_S_num"), ("F_S", "F_S_num"))


def closed_row(params: SystemParams, scheme: LevelScheme, pulse, threshold: float = 0.99) -> dict:
    """Closed-form figures of merit.

    With ``gamma_e > 0`` the four-level ``P_total`` and ``R_re`` come from the
    ``gamma_o -> gamma_o'`` substitution, the only closed form available there.
    """
    row = {}
    if scheme is LevelScheme.FOUR_LEVEL and params.gamma_e > 0:
        ext = extended_decay(params)
        p_total, r_re = ext.P_total, ext.R_re
        p_si = (1.0 - r_re) * p_total
    else:
        p_si, p_total, r_re = p_si_total_rre(params, scheme)
    d_s, f_s = purity_fidelity(min(max(r_re, 0.0), 1.0))
    lam = lambda_si(params, scheme)
    try:
        t_em = emission_time(params, scheme, pulse, threshold) if lam > 0 else math.inf
    except EmissionNotReachedError:
        t_em = math.inf
    row.update(P_si=p_si, P_total=p_total, P_re=p_total - p_si, R_re=r_re, D_S=d_s, F_S=f_s,
               lambda_si=lam,
               lambda_si_bound=lambda_si_bound(params, scheme) if params.gamma_u > 0 else math.inf,
               t_em=t_em)
    if scheme is LevelScheme.FOUR_LEVEL:
        ext = extended_decay(params)
        row.update(P_pure=ext.P_pure, decay_trace_bound=ext.decay_trace_bound)
    return row


def numeric_row(params: SystemParams, scheme: LevelScheme, pulse, config: IntegratorConfig,
                threshold: float = 0.99, n_t: int = 3000, with_record: bool = True) -> dict:
    """Master-equation and photon-record counterparts of :func:`closed_row`."""
    full = evolve(params, scheme, pulse, config)
    single = evolve(params, scheme, pulse, config, suppressed_recycling={"u"} if params.gamma_u > 0 else set())
    p_total = full.final_emission("ex")
    p_si = single.final_emission("ex")
    try:
        t_em = emission_time_numeric(single, threshold)
    except ValueError:
        t_em = math.nan
    row = dict(P_si_num=p_si, P_total_num=p_total, P_re_num=p_total - p_si,
               R_re_num=(p_total - p_si) / p_total if p_total > 0 else math.nan, t_em_num=t_em,
               D_S_num=math.nan, F_S_num=math.nan)
    if with_record:
        rec = build_record(params, scheme, pulse, n_t=n_t)
        row["D_S_num"], row["F_S_num"] = purity_fidelity_numeric(temporal_state(rec))
    return row


def _with_deviations(row: dict) -> dict:
    for a, b in DEVIATIONS:
        if a in row and b in row:
            row[f"dev_{a}"] = abs(row[b] - row[a])
    return row


def _point(task):
    """Worker: one sweep point. ``task`` is picklable."""
    rc, overrides, numeric = task
    params = rc.params(**overrides)
    pulse = rc.pulse(**{k: v for k, v in overrides.items() if k in PULSE_KEYS})
    row = closed_row(params, rc.scheme, pulse, rc.threshold)
    if numeric:
        row.update(numeric_row(params, rc.scheme, pulse, rc.integrator(), rc.threshold, rc.n_t))
    return overrides, _with_deviations(row)


def _workers() -> int:
    env = os.environ.get("PHOTON_SRC_THREADS")
    if env is None:
        return os.cpu_count() or 1
    try:
        n = int(env)
    except ValueError:
        raise ConfigError(f"PHOTON_SRC_THREADS must be a positive integer, got {env!r}") from None
    if n < 1:
        raise ConfigError(f"PHOTON_SRC_THREADS must be a positive integer, got {env!r}")
    return n


def run_points(tasks: list) -> list:
    n = min(_workers(), len(tasks))
    if n <= 1:
        return [_point(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(_point, tasks))


# --------------------------------------------------------------------------- commands

def cmd_simulate(rc: RunConfig, out: Path, args) -> None:
    params = rc.params()
    pulse = rc.pulse()
    full = evolve(params, rc.scheme, pulse, rc.integrator())
    t, flux = photon_flux(full)
    labels = basis_labels(rc.scheme)
    pops = np.column_stack([full.population(lab) for lab in labels])
    write_csv(out / "populations.csv", ["t"] + [f"rho_{lab}" for lab in labels] + ["flux"],
              np.column_stack([t, pops, flux]))

    rec = build_record(params, rc.scheme, pulse, n_t=rc.n_t)
    write_csv(out / "record.csv", ["t", "re_psi0", "im_psi0"],
              np.column_stack([rec.t, rec.psi0.real, rec.psi0.imag]))

    row = closed_row(params, rc.scheme, pulse, rc.threshold)
    row.update(numeric_row(params, rc.scheme, pulse, rc.integrator(), rc.threshold, rc.n_t))
    _with_deviations(row)
    items = [("kappa_ex", params.kappa_ex), ("omega2", params.omega2)] + list(row.items())
    write_csv(out / "summary.csv", ["quantity", "value"], [(k, v) for k, v in items])
    for w in rec.warnings:
        print(f"warning: {w}", file=sys.stderr)


def sweep_values(rc: RunConfig, points: int | None) -> tuple[str, list[float]]:
    cfg = rc.raw
    name = cfg.get("sweep_param")
    if name is None:
        raise ConfigError("missing key 'sweep_param'")
    if name not in PARAM_KEYS and name not in PULSE_KEYS:
        raise ConfigError(f"key 'sweep_param': unknown parameter {name!r}")
    if name == "kappa_ex" and rc.kappa_ex_optimal:
        raise ConfigError("cannot sweep kappa_ex while kappa_ex = optimal")
    if "sweep_values" in cfg:
        vals = _float_list(cfg, "sweep_values")
    else:
        n = points or int(_float(cfg, "sweep_points", 11))
        a, b = _float(cfg, "sweep_start"), _float(cfg, "sweep_stop")
        scale = cfg.get("sweep_scale", "linear").lower()
        if n < 1:
            raise ConfigError("sweep_points must be >= 1")
        if scale == "log":
            if a <= 0 or b <= 0:
                raise ConfigError("log sweep needs positive sweep_start and sweep_stop")
            vals = list(np.geomspace(a, b, n))
        elif scale == "linear":
            vals = list(np.linspace(a, b, n))
        else:
            raise ConfigError(f"key 'sweep_scale': expected linear or log, got {scale!r}")
    if not vals:
        raise ConfigError("sweep has no points")
    for v in vals:
        try:
            rc.params(**{name: v})
            rc.pulse(**{name: v} if name in PULSE_KEYS else {})
        except ParameterError as exc:
            raise ConfigError(f"sweep value {name}={v!r}: {exc}") from None
    return name, sorted(float(v) for v in vals)


def _row_columns(rc: RunConfig, numeric: bool) -> list[str]:
    cols = list(SUMMARY_COLUMNS)
    if rc.scheme is LevelScheme.FOUR_LEVEL:
        cols += FOUR_LEVEL_COLUMNS
    if numeric:
        cols += list(NUMERIC_COLUMNS) + [f"dev_{a}" for a, _ in DEVIATIONS]
    return cols


def cmd_sweep(rc: RunConfig, out: Path, args) -> None:
    name, vals = sweep_values(rc, args.points)
    results = run_points([(rc, {name: v}, args.numeric) for v in vals])
    results.sort(key=lambda r: r[0][name])
    cols = _row_columns(rc, args.numeric)
    write_csv(out / "sweep.csv", [name] + cols,
              [[ov[name]] + [row[c] for c in cols] for ov, row in results])


def fig2_omega2_grid(points: int | None, params: SystemParams) -> list[float]:
    """Default: 0.5..10 in steps of 0.5 plus 0.75, 1.25, 3.2 and the ratio threshold."""
    threshold = params.g ** 2 / params.kappa + params.gamma_o
    if points is None:
        grid = set(np.round(np.arange(0.5, 10.0 + 1e-9, 0.5), 12))
        grid |= {0.75, 1.25, 3.2, threshold}
        return sorted(float(v) for v in grid)
    if points < 2:
        raise ConfigError("--points must be >= 2 for fig2")
    return [float(v) for v in np.linspace(0.5, 10.0, points)]


def cmd_fig2(rc: RunConfig, out: Path, args) -> None:
    if rc.scheme is not LevelScheme.FOUR_LEVEL:
        raise ConfigError("fig2 needs scheme = four")
    base = rc.params()
    if "omega2_values" in rc.raw:
        om2 = sorted(_float_list(rc.raw, "omega2_values"))
    else:
        om2 = fig2_omega2_grid(args.points, base)
    om0 = sorted(_float_list(rc.raw, "omega0_values")) if "omega0_values" in rc.raw else list(FIG2_OMEGA0)
    print(f"kappa_ex = {_fmt(base.kappa_ex)}")
    tasks = [(rc, {"omega2": a, "omega0": b}, True) for b in om0 for a in om2]
    results = run_points(tasks)
    results.sort(key=lambda r: (r[0]["omega0"], r[0]["omega2"]))

    def rows(*keys):
        return [[ov["omega0"], ov["omega2"]] + [row[k] for k in keys] for ov, row in results]

    head = ["omega0", "omega2"]
    write_csv(out / "fig2a.csv", head + ["P_re_analytic", "P_re_numeric", "dev_P_re"],
              rows("P_re", "P_re_num", "dev_P_re"))
    write_csv(out / "fig2b.csv", head + ["P_total_analytic", "P_total_numeric", "dev_P_total"],
              rows("P_total", "P_total_num", "dev_P_total"))
    write_csv(out / "fig2c.csv", head + ["t_em_analytic", "t_em_numeric", "dev_t_em"],
              rows("t_em", "t_em_num", "dev_t_em"))

    three = SystemParams(kappa_ex=base.kappa_ex, kappa_in=base.kappa_in, gamma_u=base.gamma_u,
                         gamma_o=base.gamma_o, g=base.g, delta_e=base.delta_e)
    p_si3, p_tot3, r_re3 = p_si_total_rre(three, LevelScheme.THREE_LEVEL)
    t_em3 = emission_time(three, LevelScheme.THREE_LEVEL, LinearPulse(THREE_LEVEL_OMEGA0), rc.threshold)
    write_csv(out / "fig2_constants.csv", ["quantity", "value"], [
        ("kappa_ex", base.kappa_ex), ("omega0_three_level", THREE_LEVEL_OMEGA0),
        ("P_si_three_level", p_si3), ("P_total_three_level", p_tot3),
        ("P_re_three_level", p_tot3 - p_si3), ("R_re_three_level", r_re3),
        ("t_em_three_level", t_em3), ("omega2_threshold", base.g ** 2 / base.kappa + base.gamma_o),
    ])


def cmd_figC(rc: RunConfig, out: Path, args) -> None:
    cfg = rc.raw
    n = args.points or 50
    if n < 2:
        raise ConfigError("--points must be >= 2 for figC")
    kex = _float(cfg, "kappa_ex_over_gamma", 0.99)
    kin = _float(cfg, "kappa_in_over_gamma", 0.01)
    g_lo, g_hi = _float(cfg, "g_min", 0.1), _float(cfg, "g_max", 10.0)
    o_lo, o_hi = _float(cfg, "omega2_min", 0.1), _float(cfg, "omega2_max", 1000.0)
    if min(g_lo, g_hi, o_lo, o_hi, kex) <= 0 or kin < 0 or g_lo >= g_hi or o_lo >= o_hi:
        raise ConfigError("figC ranges must be positive and increasing")
    g = np.geomspace(g_lo, g_hi, n)
    om = np.geomspace(o_lo, o_hi, n)
    m = ratio_map(g, om, kex, kin)
    rows = [(g[i], om[j], m.ratio[i, j], m.r_re_four[i, j], m.r_re_three[i, j])
            for i in range(n) for j in range(n)]
    write_csv(out / "ratio_map.csv",
              ["g_over_gamma", "omega2_over_gamma", "ratio", "R_re_four", "R_re_three"], rows)

    contour = []
    for gi in g:
        def f(x):
            return float(ratio_map(gi, math.exp(x), kex, kin).ratio[0, 0]) - 1.0

        lo, hi = math.log(o_lo), math.log(o_hi)
        x = brentq(f, lo, hi, xtol=1e-14) if f(lo) > 0 > f(hi) else math.nan
        contour.append((gi, math.exp(x), float(ratio_threshold(gi, kex, kin))))
    write_csv(out / "ratio_contour.csv",
              ["g_over_gamma", "omega2_over_gamma", "omega2_threshold"], contour)


COMMANDS = {"simulate": cmd_simulate, "sweep": cmd_sweep, "fig2": cmd_fig2, "figC": cmd_figC}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="photon-src", description=__doc__.split("\n\n")[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", help="flat key = value file (optional for fig2 and figC)")
    ap.add_argument("--out", required=True, help="output directory")
    ap.add_argument("--numeric", action="store_true",
                    help="sweep: add master-equation and photon-record columns")
    ap.add_argument("--points", type=int, default=None, help="override the grid size")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.config is None and args.command in ("simulate", "sweep"):
            raise ConfigError(f"{args.command} needs --config")
        raw = read_config(args.config) if args.config else {}
        rc = resolve_config(raw)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](rc, out, args)
    except (ConfigError, ParameterError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IntegrationError, SingularityError, EmissionNotReachedError, ArithmeticError,
            np.linalg.LinAlgError, ValueError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
