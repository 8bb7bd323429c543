"""Command-line interface: experiment orchestration and CSV emission.

Configuration is a flat ``key=value`` text file whose keys are the long
option names; command-line flags override file values.  Every CSV artifact
starts with a provenance header (``#`` comment lines echoing the resolved
configuration and seed) followed by a deterministic body: identical
configuration and seed produce byte-identical bodies, with the timestamp
confined to its own comment line.

Exit codes: 0 success, 2 configuration error, 3 numerical failure (the
message carries the originating error class name).
"""

from __future__ import annotations

import argparse
import dataclasses
import math
import os
import sys
import tempfile
import time
from itertools import product

import numpy as np

from . import __version__
from .approx import blinking_rates, darkstate_perturbation, \
    fi_blinking_approx, threelevel_spectrum, wtd_blinking_ansatz
from .errors import AnsatzInvalid, InvalidEfficiency, InvalidParams, \
    IonsenseError, RegimeViolation, UnknownPreset
from .estimate import estimator_stats, mle_fit, repeat_mle
from .fisher import fi_monte_carlo, fi_rate_integral, qfi_rate, \
    qfi_time_curve
from .generators import lindblad_superop, nojump_superop, spectrum_nojump, \
    steady_state
from .model import GAMMA_SI, ModelParams, build_model, preset
from .renewal import WtdCache, build_wtd, sample_records, save_records

_CONFIG_ERRORS = (InvalidParams, UnknownPreset, InvalidEfficiency)

# option name -> value parser, used for both flags and config-file entries
_FLOAT_KEYS = ("omega-e", "omega-d", "omega-u", "delta-u", "gamma-g",
               "gamma-u", "gamma-dephase", "eta-g", "eta-u",
               "omega-d-ratio", "tau-max", "window", "fd-step",
               "grid-lo", "grid-hi")
_INT_KEYS = ("levels", "points", "seed", "n-records", "n-samples",
             "repeats", "grid-points")
_STR_KEYS = ("preset", "units", "output", "command", "with-approx")
_LIST_KEYS = ("eta-g-list", "delta-u-list", "gamma-dephase-list",
              "omega-d-ratio-list")


def _parse_list(text: str) -> list[float]:
    return [float(item) for item in text.split(",") if item.strip()]


def _coerce(key: str, raw: str):
    if key in _FLOAT_KEYS:
        return float(raw)
    if key in _INT_KEYS:
        return int(raw)
    if key in _LIST_KEYS:
        return _parse_list(raw)
    if key in _STR_KEYS:
        return raw
    raise ValueError(f"unknown configuration key {key!r}")


def load_config(path: str) -> dict:
    """Flat key=value file; '#' starts a comment, keys use '-' or '_'."""
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value")
            key, raw = (part.strip() for part in line.split("=", 1))
            key = key.replace("_", "-")
            out[key] = _coerce(key, raw)
    return out


def resolve_params(opts: dict) -> ModelParams:
    """Build ModelParams from a preset plus overrides, or from explicit values."""
    if opts.get("omega-d") is not None and opts.get("omega-d-ratio") is not None:
        raise InvalidParams("give either omega-d or omega-d-ratio, not both")
    if opts.get("preset"):
        p = preset(opts["preset"], opts.get("omega-d-ratio"))
    else:
        if opts.get("omega-e") is None:
            raise InvalidParams("either --preset or --omega-e is required")
        base = {"omega_e": opts["omega-e"], "omega_d": 0.0}
        p = ModelParams(**base)
    overrides = {}
    for key, attr in (("omega-e", "omega_e"), ("omega-d", "omega_d"),
                      ("omega-u", "omega_u"), ("delta-u", "delta_u"),
                      ("gamma-g", "gamma_g"), ("gamma-u", "gamma_u"),
                      ("gamma-dephase", "gamma_deph"), ("eta-g", "eta_g"),
                      ("eta-u", "eta_u"), ("levels", "level_count")):
        if opts.get(key) is not None:
            overrides[attr] = opts[key]
    if not opts.get("preset") and opts.get("omega-d-ratio") is not None:
        overrides["omega_d"] = opts["omega-d-ratio"] * overrides.get(
            "omega_e", p.omega_e)
    if overrides:
        p = p.replace(**overrides)
    if p.omega_d == 0.0 and opts.get("omega-d") is None \
            and opts.get("omega-d-ratio") is None:
        raise InvalidParams("omega-d (or omega-d-ratio) is required")
    return p


# ---------------------------------------------------------------------------
# unit conversion at reporting time

def _unit_factor(kind: str, mode: str) -> float:
    """Multiplier turning a gamma-unit value into the reporting unit.

    time -> s; rate/frequency/density -> rad/s; fi -> 1/(rad/s)^2;
    fi_rate -> s/rad^2.
    """
    if mode == "gamma" or kind == "plain":
        return 1.0
    gamma = GAMMA_SI[mode]
    return {"time": 1.0 / gamma, "rate": gamma, "fi": 1.0 / gamma**2,
            "fi_rate": 1.0 / gamma}[kind]


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf"
        return repr(value)  # shortest round-trip representation
    return str(value)


def write_csv(path: str, columns: list[str], rows: list[list],
              provenance: list[str]) -> None:
    """Atomic CSV write: provenance comments, then header row, then body."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            for line in provenance:
                fh.write(f"# {line}\n")
            fh.write(f"# timestamp: {time.strftime('%Y-%m-%dT%H:%M:%S%z')}\n")
            fh.write(",".join(columns) + "\r\n")
            for row in rows:
                fh.write(",".join(_fmt(v) for v in row) + "\r\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _provenance(command: str, opts: dict) -> list[str]:
    echo = " ".join(f"{k}={opts[k]}" for k in sorted(opts)
                    if opts[k] is not None)
    return [f"ionsense {__version__}", f"command: {command}",
            f"config: {echo}"]


# ---------------------------------------------------------------------------
# command implementations; each returns (columns, rows)

def _cmd_wtd(p: ModelParams, opts: dict):
    mode = opts["units"]
    tbl = build_wtd(p, tau_max=opts.get("tau-max"),
                    points=opts.get("points") or 400)
    ft, fr = _unit_factor("time", mode), _unit_factor("rate", mode)
    columns = ["tau", "w", "p0"]
    approx_kind = opts.get("with-approx") or "none"
    approx_vals = None
    if approx_kind == "blinking":
        approx_vals = wtd_blinking_ansatz(blinking_rates(p), tbl.tau_grid)
        columns.append("w_approx")
    elif approx_kind != "none":
        raise InvalidParams(f"unknown approximation overlay {approx_kind!r}")
    rows = []
    for i, tau in enumerate(tbl.tau_grid):
        row = [tau * ft, tbl.w_values[i] * fr, tbl.p0_values[i]]
        if approx_vals is not None:
            row.append(approx_vals[i] * fr)
        rows.append(row)
    return columns, rows


def _cmd_p0(p: ModelParams, opts: dict):
    tbl = build_wtd(p, tau_max=opts.get("tau-max"),
                    points=opts.get("points") or 400)
    ft = _unit_factor("time", opts["units"])
    return ["tau", "p0"], [[tau * ft, val] for tau, val
                           in zip(tbl.tau_grid, tbl.p0_values)]


def _cmd_spectrum(p: ModelParams, opts: dict):
    L0 = nojump_superop(build_model(p), p.eta_g, 0.0)
    with_deriv = bool(opts.get("fd-step"))
    modes = spectrum_nojump(L0, params=p if with_deriv else None,
                            fd_step=opts.get("fd-step") or 1e-3)
    fr = _unit_factor("rate", opts["units"])
    rows = []
    for i, m in enumerate(modes):
        row = [i, m.eigenvalue.real * fr, m.eigenvalue.imag * fr]
        if m.d_theta is not None:
            row += [m.d_theta.real, m.d_theta.imag]
        else:
            row += [math.nan, math.nan]
        rows.append(row)
    return ["index", "re", "im", "d_re", "d_im"], rows


def _cmd_steady(p: ModelParams, opts: dict):
    info = steady_state(lindblad_superop(build_model(p)),
                        eta_g=p.eta_g, gamma_g=p.gamma_g)
    fr = _unit_factor("rate", opts["units"])
    pops = [info.rho_ss[i, i].real for i in range(p.level_count)]
    pops += [math.nan] * (4 - len(pops))
    row = pops + [info.ee_population, info.detection_rate * fr]
    return ["pop_g", "pop_e", "pop_d", "pop_u", "ee_population",
            "detection_rate"], [row]


def _fisher_row(est, mode: str) -> list:
    kind = "fi_rate" if math.isinf(est.time) else "fi"
    return [est.method, est.theta, math.nan, est.time
            * (_unit_factor("time", mode) if math.isfinite(est.time) else 1.0),
            est.value * _unit_factor(kind, mode),
            est.std_error if est.std_error is not None else math.nan,
            est.n_samples if est.n_samples is not None else 0,
            est.fd_step]


_FISHER_COLUMNS = ["method", "theta", "eta_g", "t", "value", "std_error",
                   "n_samples", "fd_step"]


def _cmd_fisher_rate(p: ModelParams, opts: dict):
    est = fi_rate_integral(p, fd_step=opts.get("fd-step") or 1e-3)
    row = _fisher_row(est, opts["units"])
    row[2] = p.eta_g
    return _FISHER_COLUMNS, [row]


def _cmd_fisher_mc(p: ModelParams, opts: dict):
    est = fi_monte_carlo(p, t=opts["window"], n=opts.get("n-samples") or 1000,
                         seed=opts["seed"],
                         fd_step=opts.get("fd-step") or 1e-3)
    row = _fisher_row(est, opts["units"])
    row[2] = p.eta_g
    return _FISHER_COLUMNS, [row]


def _cmd_qfi(p: ModelParams, opts: dict):
    fd = opts.get("fd-step") or 1e-3
    t_grid = np.geomspace(1.0, 1e8, opts.get("points") or 80)
    curve = qfi_time_curve(p, t_grid, fd)
    mode = opts["units"]
    rows = []
    for t, val in zip(t_grid, curve):
        rows.append(["qfi_twosided", p.omega_d, p.eta_g,
                     t * _unit_factor("time", mode),
                     val * _unit_factor("fi", mode), math.nan, 0, fd])
    rate = qfi_rate(p, fd_step=fd, t_grid=t_grid)
    row = _fisher_row(rate, mode)
    row[2] = p.eta_g
    rows.append(row)
    return _FISHER_COLUMNS, rows


def _cmd_approx(p: ModelParams, opts: dict):
    fr = _unit_factor("rate", opts["units"])
    ft = _unit_factor("time", opts["units"])
    fir = _unit_factor("fi_rate", opts["units"])
    rows = []
    if p.level_count == 4 and p.delta_u != 0.0:
        try:
            r = blinking_rates(p)
            fi = fi_blinking_approx(p)
            rows += [["gamma1", r.gamma1 * fr, 1],
                     ["gamma2", r.gamma2 * fr, 1],
                     ["p_weight", r.p_weight, 1],
                     ["t_cross", r.t_cross * ft, 1],
                     ["fi_rate_tail_approx", fi.rate * fir, 1],
                     ["fi_rate_upper_bound", fi.upper_bound * fir, 1]]
        except AnsatzInvalid:
            rows += [[name, math.nan, 0] for name in
                     ("gamma1", "gamma2", "p_weight", "t_cross",
                      "fi_rate_tail_approx", "fi_rate_upper_bound")]
    if p.level_count == 4 and p.delta_u == 0.0:
        try:
            pt = darkstate_perturbation(p)
            rows += [["omega_mod", pt.omega_mod * fr, 1],
                     ["dark_decay_2nd_order",
                      2 * abs(pt.lambda_2nd.imag) * p.omega_d**2 * fr, 1],
                     ["x", pt.x, 1]]
        except RegimeViolation:
            rows += [[name, math.nan, 0] for name in
                     ("omega_mod", "dark_decay_2nd_order", "x")]
    if p.level_count == 3:
        try:
            spec = threelevel_spectrum(p)
            rows += [["lambda_d_decay",
                      2 * abs(spec.lambda_d2.imag) * p.omega_d**2 * fr, 1],
                     ["gamma_bar", spec.gamma_bar * fr, 1],
                     ["x", spec.x, 1]]
        except RegimeViolation:
            rows += [[name, math.nan, 0] for name in
                     ("lambda_d_decay", "gamma_bar", "x")]
    return ["quantity", "value", "valid"], rows


def _cmd_sample(p: ModelParams, opts: dict, path: str) -> None:
    records = sample_records(p, opts["window"], opts.get("n-records") or 1,
                             opts["seed"])
    records = [dataclasses.replace(r, seed=opts["seed"]) for r in records]
    save_records(records, path)


def _cmd_estimate(p: ModelParams, opts: dict):
    n_records = opts.get("n-records") or 1
    repeats = opts.get("repeats") or 1
    grid = None
    if opts.get("grid-lo") is not None:
        grid = (opts["grid-lo"], opts["grid-hi"], opts.get("grid-points") or 41)
    cache = WtdCache(p, points=64)
    results = repeat_mle(p, t=opts["window"], n_records=n_records,
                         n_repeats=repeats, master_seed=opts["seed"],
                         grid=grid, cache=cache)
    rows = []
    for i, r in enumerate(results):
        rows.append([i, r.n_records, r.window, p.eta_g, p.omega_d,
                     r.theta_hat, r.loglik_at_opt, int(r.converged)])
    columns = ["experiment", "n_records", "t", "eta_g", "theta_true",
               "theta_hat", "loglik", "converged"]
    summary = None
    converged = [r for r in results if r.converged]
    if len(converged) >= 100:
        fi = fi_rate_integral(p, fd_step=opts.get("fd-step") or 1e-3)
        stats = estimator_stats(converged, p.omega_d, fi)
        summary = (["variance", "mse", "bias", "crb", "ratio_to_crb",
                    "n_repeats", "non_converged_fraction"],
                   [[stats.variance, stats.mse, stats.bias, stats.crb,
                     stats.ratio_to_crb, stats.n_repeats,
                     1.0 - len(converged) / len(results)]])
    return columns, rows, summary


_SWEEPABLE = {"fisher-rate": _cmd_fisher_rate, "qfi": _cmd_qfi,
              "steady": _cmd_steady, "approx": _cmd_approx}


def _cmd_sweep(p: ModelParams, opts: dict):
    inner_name = opts.get("command")
    if inner_name not in _SWEEPABLE:
        raise InvalidParams(
            f"sweep supports {sorted(_SWEEPABLE)}, not {inner_name!r}")
    inner = _SWEEPABLE[inner_name]
    axes = [("eta_g", opts.get("eta-g-list")),
            ("delta_u", opts.get("delta-u-list")),
            ("gamma_deph", opts.get("gamma-dephase-list")),
            ("omega_d_ratio", opts.get("omega-d-ratio-list"))]
    axes = [(name, values) for name, values in axes if values]
    if not axes:
        raise InvalidParams("sweep needs at least one non-empty list "
                            "(eta-g-list, delta-u-list, gamma-dephase-list, "
                            "omega-d-ratio-list)")
    columns = None
    rows = []
    for combo in product(*(values for _, values in axes)):
        q = p
        for (name, _), value in zip(axes, combo):
            if name == "omega_d_ratio":
                q = q.replace(omega_d=value * q.omega_e)
            else:
                q = q.replace(**{name: value})
        inner_cols, inner_rows = inner(q, opts)
        if columns is None:
            columns = [f"sweep_{name}" for name, _ in axes] + inner_cols
        for row in inner_rows:
            rows.append(list(combo) + row)
    return columns, rows


# ---------------------------------------------------------------------------

_COLUMN_DOCS = {
    "wtd": "tau (waiting time), w (density), p0 (survival), w_approx "
           "(two-exponential overlay, with --with-approx blinking)",
    "p0": "tau (waiting time), p0 (no-detection probability)",
    "spectrum": "index (ascending |Re|), re/im (eigenvalue), d_re/d_im "
                "(derivative wrt omega_d when --fd-step is given, else nan)",
    "steady": "pop_g/pop_e/pop_d/pop_u (stationary populations), "
              "ee_population, detection_rate",
    "fisher-rate": "method, theta, eta_g, t (inf for rates), value, "
                   "std_error, n_samples, fd_step",
    "fisher-mc": "method, theta, eta_g, t, value, std_error, n_samples, "
                 "fd_step",
    "qfi": "method, theta, eta_g, t, value (bound at t; last row is the "
           "asymptotic rate with t=inf), std_error, n_samples, fd_step",
    "sample": "record file: 'window=<t> seed=<s> n=<N>' header, one waiting "
              "time per line, then 'tail=<t>'",
    "estimate": "experiment, n_records, t, eta_g, theta_true, theta_hat, "
                "loglik, converged; summary CSV: variance, mse, bias, crb, "
                "ratio_to_crb, n_repeats, non_converged_fraction",
    "approx": "quantity, value, valid (0 when the regime precondition "
              "fails)",
    "sweep": "swept axes (eta_g, delta_u, gamma_deph, omega_d_ratio) "
             "followed by the inner command's columns",
}

_NEEDS_SEED = {"sample", "fisher-mc", "estimate"}


def _add_model_arguments(sub: argparse.ArgumentParser) -> None:
    g = sub.add_argument_group("model")
    g.add_argument("--preset", help="setup1 | setup2 | setup1-fig3 | "
                                    "setup2-fig5 | threelevel")
    g.add_argument("--omega-d-ratio", type=float,
                   help="omega_d / omega_e (with a preset or --omega-e)")
    for name in ("omega-e", "omega-d", "omega-u", "delta-u", "gamma-g",
                 "gamma-u", "gamma-dephase", "eta-g", "eta-u"):
        g.add_argument(f"--{name}", type=float)
    g.add_argument("--levels", type=int, choices=(3, 4))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ionsense",
        description="Photon-counting renewal statistics, information bounds, "
                    "and maximum-likelihood estimation for monitored "
                    "few-level emitters.")
    parser.add_argument("--version", action="version",
                        version=f"ionsense {__version__}")
    subs = parser.add_subparsers(dest="subcommand", required=True)
    specs = {
        "wtd": "tabulate the waiting-time density and survival probability",
        "p0": "tabulate the no-detection probability",
        "spectrum": "eigenvalues of the no-jump generator",
        "steady": "stationary state and detection rate",
        "fisher-rate": "asymptotic record information rate (integral formula)",
        "fisher-mc": "finite-time record information (Monte Carlo)",
        "qfi": "joint system-environment information bound vs time",
        "sample": "draw emission records",
        "estimate": "repeated maximum-likelihood experiments",
        "approx": "closed-form rates and frequencies with validity flags",
        "sweep": "run a sweepable command over parameter lists",
    }
    for name, help_text in specs.items():
        sub = subs.add_parser(
            name, help=help_text,
            epilog=f"CSV columns: {_COLUMN_DOCS[name]}",
            formatter_class=argparse.RawDescriptionHelpFormatter)
        _add_model_arguments(sub)
        sub.add_argument("--config", help="key=value configuration file "
                                          "(flags override)")
        sub.add_argument("--output", help="output path (default: "
                                          "$IONSENSE_OUTPUT_DIR/<command>.csv)")
        sub.add_argument("--units", choices=("gamma", "SI-Sr", "SI-Ca"),
                         help="reporting units (default gamma)")
        sub.add_argument("--fd-step", type=float,
                         help="relative finite-difference step in omega_d")
        if name in ("wtd", "p0", "qfi"):
            sub.add_argument("--tau-max", type=float)
            sub.add_argument("--points", type=int)
        if name == "wtd":
            sub.add_argument("--with-approx", choices=("none", "blinking"))
        if name in ("fisher-mc", "sample", "estimate"):
            sub.add_argument("--window", type=float,
                             help="observation window t")
            sub.add_argument("--seed", type=int)
        if name == "fisher-mc":
            sub.add_argument("--n-samples", type=int)
        if name in ("sample", "estimate"):
            sub.add_argument("--n-records", type=int)
        if name == "estimate":
            sub.add_argument("--repeats", type=int)
            sub.add_argument("--grid-lo", type=float)
            sub.add_argument("--grid-hi", type=float)
            sub.add_argument("--grid-points", type=int)
        if name == "sweep":
            sub.add_argument("--command", help="inner command: "
                                               "fisher-rate | qfi | steady | approx")
            for axis in _LIST_KEYS:
                sub.add_argument(f"--{axis}", type=_parse_list,
                                 metavar="V1,V2,...")
    return parser


def _resolve_options(args: argparse.Namespace) -> dict:
    opts = {}
    if getattr(args, "config", None):
        opts.update(load_config(args.config))
    for key, value in vars(args).items():
        if key in ("subcommand", "config") or value is None:
            continue
        opts[key.replace("_", "-")] = value
    opts.setdefault("units", "gamma")
    return opts


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    command = args.subcommand
    try:
        opts = _resolve_options(args)
        if command in _NEEDS_SEED and opts.get("seed") is None:
            parser.error(f"--seed is required for {command}")
        if command in ("fisher-mc", "sample", "estimate") \
                and opts.get("window") is None:
            parser.error(f"--window is required for {command}")

        default_name = f"{command}.{'txt' if command == 'sample' else 'csv'}"
        out = opts.get("output") or os.path.join(
            os.environ.get("IONSENSE_OUTPUT_DIR", "."), default_name)
        provenance = _provenance(command, opts)

        p = resolve_params(opts)
        if command == "sample":
            _cmd_sample(p, opts, out)
            print(out)
            return 0
        if command == "estimate":
            columns, rows, summary = _cmd_estimate(p, opts)
            write_csv(out, columns, rows, provenance)
            if summary is not None:
                stem, ext = os.path.splitext(out)
                write_csv(f"{stem}_summary{ext}", summary[0], summary[1],
                          provenance)
            print(out)
            return 0
        handler = {"wtd": _cmd_wtd, "p0": _cmd_p0, "spectrum": _cmd_spectrum,
                   "steady": _cmd_steady, "fisher-rate": _cmd_fisher_rate,
                   "fisher-mc": _cmd_fisher_mc, "qfi": _cmd_qfi,
                   "approx": _cmd_approx, "sweep": _cmd_sweep}[command]
        columns, rows = handler(p, opts)
        write_csv(out, columns, rows, provenance)
        print(out)
        return 0
    except _CONFIG_ERRORS as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except IonsenseError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
