"""Command-line runner for estimation and validation jobs.

Four subcommands:

* ``estimate``: build an operator from a config file, estimate its smoothed
  spectral density, write a CSV curve (lambda, density, stderr, n_samples)
  plus a JSON summary.
* ``validate``: same run, then compare against the analytic smoothed truth
  for the configured ensemble; writes a JSON report and exits 1 on failure.
* ``spectrum``: write the ensemble's analytic spectrum (no estimation).
* ``index-curve``: sweep mixture weights and write theoretical versus
  estimated index fractions with bootstrap bands.

Config files are flat ``key = value`` text; ``#`` starts a comment.  Any
key can be overridden on the command line with ``--set key=value``; the
``--seed`` and ``--threads`` flags override their keys, and the
SPECDEN_THREADS environment variable supplies a default thread count when
``--threads`` is absent.  Unknown keys are rejected, and nothing is written
until the whole config has been validated.  Floats are serialized with 17
significant digits so that repeated runs with one config are comparable
byte for byte.

Exit codes: 0 success, 1 validation failure (or a run that produced no
usable probes), 2 config error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from .ensembles import (
    AnalyticSpectrum,
    KneserSpec,
    MixtureSpec,
    WishartSpec,
    kneser_operator,
    kneser_spectrum,
    mixture_sample,
    smoothed_truth,
    wigner_sample,
    wigner_spectrum,
    wishart_sample,
    wishart_spectrum,
    ww_index,
)
from .operators import NoiseModel, estimate_operator_norm, rescale, with_noise
from .pipeline import (
    RunConfig,
    bootstrap_ci,
    chebyshev_grid,
    estimate_density,
    integrate_curve,
    uniform_grid,
)
from .traces import ControlVariate

__all__ = ["main", "ConfigError", "load_config"]

THREADS_ENV = "SPECDEN_THREADS"


class ConfigError(Exception):
    """Raised for any problem with the job configuration."""


# ---- config schema ----------------------------------------------------

def _int(s):
    try:
        return int(s)
    except ValueError:
        raise ConfigError(f"expected an integer, got {s!r}")


def _float(s):
    try:
        return float(s)
    except ValueError:
        raise ConfigError(f"expected a number, got {s!r}")


def _pos_int(s):
    v = _int(s)
    if v < 1:
        raise ConfigError(f"expected a positive integer, got {s!r}")
    return v


def _choice(*options):
    def parse(s):
        if s not in options:
            raise ConfigError(f"expected one of {options}, got {s!r}")
        return s
    return parse


def _float_or(*words):
    def parse(s):
        if s in words:
            return s
        return _float(s)
    return parse


def _float_list(s):
    items = [t for t in s.replace(",", " ").split() if t]
    if not items:
        raise ConfigError("expected a list of numbers")
    return [_float(t) for t in items]


# key -> (parser, default); a None default means "optional, maybe required
# by a particular command"
SCHEMA = {
    "ensemble": (_choice("kneser", "wigner", "wishart", "mixture", "diagonal"), None),
    "n": (_pos_int, None),
    "k": (_pos_int, None),
    "dim": (_pos_int, None),
    "phi": (_float, None),
    "n_cols": (_pos_int, None),
    "sigma2": (_float, 1.0),
    "gamma": (_float, None),
    "gammas": (_float_list, None),
    "eigenvalues": (_float_list, None),
    "noise": (_choice("none", "additive", "multiplicative"), "none"),
    "noise_variance": (_float_or("auto"), "auto"),
    "rescale": (_float_or("auto", "none"), "auto"),
    "rescale_margin": (_float, 0.05),
    "power_iters": (_pos_int, 100),
    "kappa": (_float, None),
    "grid": (_choice("chebyshev", "uniform"), "chebyshev"),
    "grid_points": (_pos_int, 200),
    "grid_lo": (_float, -0.99),
    "grid_hi": (_float, 0.99),
    "n_probes": (_pos_int, None),
    "n_indices_per_probe": (_pos_int, 1000),
    "mode": (_choice("faithful_per_lambda", "shared_moments"), "faithful_per_lambda"),
    "probe_distribution": (_choice("gaussian", "rademacher"), "gaussian"),
    "tail_tol": (_float, 1e-12),
    "cv": (_choice("none", "identity"), "none"),
    "cv_c": (_float, None),
    "cv_alpha": (_float, 1.0),
    "seed": (_int, None),
    "sample_seed": (_int, None),
    "threads": (_pos_int, None),
    "max_z": (_float, 4.0),
    "max_iae": (_float, 0.05),
    "n_boot": (_pos_int, 1000),
    "boot_level": (_float, 0.95),
}


def _parse_lines(lines, source):
    pairs = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key = value")
        key, _, value = line.partition("=")
        pairs.append((key.strip(), value.strip()))
    return pairs


def load_config(path, overrides=()):
    """Parse a config file plus ``key=value`` override strings.

    Returns a dict covering every schema key, with defaults filled in.
    """
    try:
        with open(path) as fh:
            pairs = _parse_lines(fh, path)
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}")
    for item in overrides:
        pairs.extend(_parse_lines([item], "--set"))
    seen = {}
    for key, value in pairs:
        if key not in SCHEMA:
            raise ConfigError(f"unknown config key {key!r}")
        parser, _ = SCHEMA[key]
        try:
            seen[key] = parser(value)
        except ConfigError as exc:
            raise ConfigError(f"key {key!r}: {exc}")
    cfg = {key: default for key, (_, default) in SCHEMA.items()}
    cfg.update(seen)
    return cfg


def _need(cfg, key, why):
    if cfg[key] is None:
        raise ConfigError(f"key {key!r} is required {why}")
    return cfg[key]


# ---- operator construction -------------------------------------------

def _noise_model(cfg, dim):
    kind = cfg["noise"]
    if kind == "none":
        return NoiseModel.exact()
    variance = cfg["noise_variance"]
    if variance == "auto":
        variance = 1.0 / dim**2 if kind == "additive" else 100.0 / dim**2
    if variance < 0:
        raise ConfigError("noise_variance must be nonnegative")
    if kind == "additive":
        return NoiseModel.additive(variance)
    return NoiseModel.multiplicative(variance)


def _analytic_spectrum(cfg):
    """Analytic spectrum of the configured ensemble, or None (mixture)."""
    ens = _need(cfg, "ensemble", "to choose an ensemble")
    if ens == "kneser":
        spec = KneserSpec(_need(cfg, "n", "for kneser"), _need(cfg, "k", "for kneser"))
        return kneser_spectrum(spec)
    if ens == "wigner":
        return wigner_spectrum()
    if ens == "wishart":
        return wishart_spectrum(_wishart_spec(cfg))
    if ens == "diagonal":
        values = np.asarray(_need(cfg, "eigenvalues", "for diagonal"), dtype=np.float64)
        return AnalyticSpectrum.discrete(values, np.ones(len(values), dtype=np.int64))
    return None


def _wishart_spec(cfg):
    dim = _need(cfg, "dim", "for wishart")
    if cfg["n_cols"] is not None:
        return WishartSpec(dim, cfg["n_cols"], cfg["sigma2"])
    phi = _need(cfg, "phi", "for wishart (or give n_cols)")
    return WishartSpec.from_phi(dim, phi, cfg["sigma2"])


def _sample_rng(cfg, spawn=None):
    seed = cfg["sample_seed"] if cfg["sample_seed"] is not None else cfg["seed"]
    if seed is None:
        raise ConfigError("a seed (or sample_seed) is required to sample an ensemble")
    ss = np.random.SeedSequence(seed)
    if spawn is not None:
        ss = ss.spawn(spawn[1])[spawn[0]]
    return np.random.default_rng(ss)


def _raw_operator(cfg, rng=None):
    """Operator before rescaling, plus its known norm bound (or None)."""
    ens = cfg["ensemble"]
    if ens == "kneser":
        spec = KneserSpec(_need(cfg, "n", "for kneser"), _need(cfg, "k", "for kneser"))
        noise = _noise_model(cfg, spec.dim)
        return kneser_operator(spec, noise), float(spec.degree)
    if ens == "diagonal":
        values = np.asarray(_need(cfg, "eigenvalues", "for diagonal"), dtype=np.float64)
        bound = float(np.max(np.abs(values))) if np.any(values) else 0.0
        noise = _noise_model(cfg, len(values))
        return with_noise(np.diag(values), noise, norm_bound=bound or None), bound or None
    dim = _need(cfg, "dim", f"for {ens}")
    if rng is None:
        rng = _sample_rng(cfg)
    if ens == "wigner":
        matrix = wigner_sample(dim, rng)
    elif ens == "wishart":
        matrix = wishart_sample(_wishart_spec(cfg), rng)
    else:
        spec = MixtureSpec(_need(cfg, "gamma", "for mixture"),
                           _need(cfg, "phi", "for mixture"))
        matrix = mixture_sample(spec, dim, rng)
    return with_noise(matrix, _noise_model(cfg, dim)), None


def _prepared_operator(cfg, rng=None):
    """Build, then rescale per config.  Returns (operator, info dict)."""
    op, known_bound = _raw_operator(cfg, rng)
    choice = cfg["rescale"]
    info = {"dim": op.dim, "noise": cfg["noise"]}
    if choice == "none":
        info["divisor"] = op.divisor
        return op, info
    if choice == "auto":
        if known_bound is not None:
            bound = known_bound
        else:
            norm_rng = np.random.default_rng(
                np.random.SeedSequence((0x5F3C, cfg["seed"] or 0)))
            bound = estimate_operator_norm(op, iters=cfg["power_iters"], rng=norm_rng)
    else:
        bound = float(choice)
    if bound <= 0:
        raise ConfigError("rescale bound must be positive")
    margin = cfg["rescale_margin"]
    if margin < 0:
        raise ConfigError("rescale_margin must be nonnegative")
    scaled = rescale(op, bound, margin=margin * bound)
    info["divisor"] = scaled.divisor
    info["norm_bound_used"] = bound
    return scaled, info


# ---- run configuration ------------------------------------------------

def _grid(cfg):
    if cfg["grid"] == "chebyshev":
        return chebyshev_grid(cfg["grid_points"])
    return uniform_grid(cfg["grid_points"], cfg["grid_lo"], cfg["grid_hi"])


def _control_variate(cfg):
    if cfg["cv"] == "none":
        return None
    c = _need(cfg, "cv_c", "when cv = identity")
    return ControlVariate.scaled_identity(cfg["cv_alpha"], c)


def _run_config(cfg, threads, seed=None):
    try:
        return RunConfig(
            kappa=_need(cfg, "kappa", "for estimation"),
            grid=_grid(cfg),
            n_probes=_need(cfg, "n_probes", "for estimation"),
            n_indices_per_probe=cfg["n_indices_per_probe"],
            seed=seed if seed is not None else cfg["seed"],
            tail_tol=cfg["tail_tol"],
            mode=cfg["mode"],
            probe_distribution=cfg["probe_distribution"],
            control_variate=_control_variate(cfg),
            n_workers=threads,
        )
    except ValueError as exc:
        raise ConfigError(str(exc))


# ---- output helpers ---------------------------------------------------

def _g17(x):
    return "%.17g" % float(x)


def _write_text(path, text):
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _jsonable(value):
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else repr(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value]
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    return value


def _write_json(path, payload):
    _write_text(path, json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")


def _summary_path(out):
    base, _ = os.path.splitext(out)
    return base + ".summary.json"


def _density_csv(est):
    lines = ["lambda,density,stderr,n_samples"]
    for lam, den, err, n in zip(est.lambdas, est.density, est.stderr,
                                est.n_samples):
        lines.append(f"{_g17(lam)},{_g17(den)},{_g17(err)},{int(n)}")
    return "\n".join(lines) + "\n"


def _summary(cfg, est, info, threads):
    return {
        "ensemble": cfg["ensemble"],
        "dim": info["dim"],
        "noise": info["noise"],
        "divisor": info["divisor"],
        "kappa": est.config.kappa,
        "grid": {
            "kind": cfg["grid"],
            "points": len(est.lambdas),
            "lo": float(est.lambdas[0]),
            "hi": float(est.lambdas[-1]),
        },
        "n_probes": est.config.n_probes,
        "n_probes_used": int(est.n_samples[0]),
        "n_indices_per_probe": est.config.n_indices_per_probe,
        "k_max": est.k_max,
        "tail_tol": est.config.tail_tol,
        "mode": est.config.mode,
        "overflow_count": est.overflow_count,
        "normalizer_max": float(est.normalizers.max()),
        "seed": est.config.seed,
        "threads": threads,
        "wall_time": est.wall_time,
    }


# ---- subcommands ------------------------------------------------------

def _cmd_estimate(cfg, args, threads):
    _need(cfg, "seed", "for estimate")
    op, info = _prepared_operator(cfg)
    runcfg = _run_config(cfg, threads)
    try:
        est = estimate_density(op, runcfg)
    except RuntimeError as exc:
        print(f"estimation failed: {exc}", file=sys.stderr)
        return 1
    summary = _summary(cfg, est, info, threads)
    if args.format == "json":
        out = args.out or "estimate.json"
        payload = dict(summary)
        payload["curve"] = {
            "lambda": est.lambdas,
            "density": est.density,
            "stderr": est.stderr,
            "n_samples": est.n_samples,
        }
        _write_json(out, payload)
    else:
        out = args.out or "estimate.csv"
        _write_text(out, _density_csv(est))
        _write_json(_summary_path(out), summary)
    return 0


def _cmd_validate(cfg, args, threads):
    _need(cfg, "seed", "for validate")
    spectrum = _analytic_spectrum(cfg)
    if spectrum is None:
        raise ConfigError(
            "the mixture ensemble has no closed-form smoothed truth; "
            "use index-curve for it")
    op, info = _prepared_operator(cfg)
    runcfg = _run_config(cfg, threads)
    try:
        est = estimate_density(op, runcfg)
    except RuntimeError as exc:
        print(f"estimation failed: {exc}", file=sys.stderr)
        return 1
    truth = smoothed_truth(spectrum.rescaled(info["divisor"]), runcfg.kappa,
                           est.lambdas)
    diff = est.density - truth
    z = diff / np.maximum(est.stderr, 1e-300)
    max_abs_z = float(np.max(np.abs(z)))
    iae = integrate_curve(est.lambdas, np.abs(diff))
    z_ok = max_abs_z <= cfg["max_z"]
    iae_ok = iae <= cfg["max_iae"]
    report = _summary(cfg, est, info, threads)
    report.update({
        "max_abs_z": max_abs_z,
        "iae": iae,
        "max_z_threshold": cfg["max_z"],
        "max_iae_threshold": cfg["max_iae"],
        "z_pass": z_ok,
        "iae_pass": iae_ok,
        "pass": z_ok and iae_ok,
    })
    _write_json(args.out or "validate.json", report)
    verdict = "PASS" if report["pass"] else "FAIL"
    print(f"{verdict} max|z| = {max_abs_z:.3f} (<= {cfg['max_z']:g}), "
          f"iae = {iae:.4f} (<= {cfg['max_iae']:g})")
    return 0 if report["pass"] else 1


def _cmd_spectrum(cfg, args):
    spectrum = _analytic_spectrum(cfg)
    if spectrum is None:
        raise ConfigError("the mixture ensemble has no analytic spectrum here")
    if spectrum.kind == "discrete":
        order = np.argsort(spectrum.values)
        lines = ["eigenvalue,multiplicity"]
        for i in order:
            lines.append(f"{_g17(spectrum.values[i])},{int(spectrum.multiplicities[i])}")
        payload = {
            "kind": "discrete",
            "dim": spectrum.dim,
            "distinct_eigenvalues": len(spectrum.values),
        }
    else:
        lo, hi = spectrum.support
        xs = np.linspace(lo, hi, cfg["grid_points"])
        ys = np.asarray(spectrum.pdf(xs), dtype=np.float64)
        lines = ["lambda,density"]
        for x, y in zip(xs, ys):
            lines.append(f"{_g17(x)},{_g17(y)}")
        payload = {
            "kind": "continuous",
            "support": [lo, hi],
            "atom_mass": spectrum.atom_mass,
            "atom_location": spectrum.atom_location,
        }
    payload["ensemble"] = cfg["ensemble"]
    if args.format == "json":
        payload["rows"] = lines
        _write_json(args.out or "spectrum.json", payload)
    else:
        out = args.out or "spectrum.csv"
        _write_text(out, "\n".join(lines) + "\n")
        _write_json(_summary_path(out), payload)
    return 0


def _cmd_index_curve(cfg, args, threads):
    if cfg["ensemble"] != "mixture":
        raise ConfigError("index-curve requires ensemble = mixture")
    seed = _need(cfg, "seed", "for index-curve")
    gammas = _need(cfg, "gammas", "for index-curve")
    phi = _need(cfg, "phi", "for mixture")
    dim = _need(cfg, "dim", "for mixture")
    _need(cfg, "kappa", "for estimation")
    _need(cfg, "n_probes", "for estimation")
    for g in gammas:
        if not 0.0 <= g <= 1.0:
            raise ConfigError("gammas must lie in [0, 1]")

    rows = []
    n_gamma = len(gammas)
    for i, g in enumerate(gammas):
        spec = MixtureSpec(g, phi)
        theory = ww_index(spec)
        rng = _sample_rng(cfg, spawn=(i, n_gamma))
        sub = dict(cfg)
        sub["gamma"] = g
        op, info = _prepared_operator(sub, rng)
        runcfg = _run_config(sub, threads, seed=seed + i)
        est = estimate_density(op, runcfg)
        # index = spectral mass below zero; rescaling by a positive divisor
        # does not move it
        integrals = integrate_curve(est.lambdas, est.probe_densities, hi=0.0)
        estimate = float(integrals.mean())
        lo, hi = bootstrap_ci(integrals, n_boot=cfg["n_boot"],
                              level=cfg["boot_level"], seed=seed + 7919 * (i + 1))
        rows.append({
            "gamma": g,
            "epsilon": spec.epsilon,
            "alpha_theory": theory,
            "alpha_estimated": estimate,
            "boot_lo": float(lo),
            "boot_hi": float(hi),
            "overflow_count": est.overflow_count,
            "divisor": info["divisor"],
        })

    lines = ["gamma,epsilon,alpha_theory,alpha_estimated,boot_lo,boot_hi"]
    for r in rows:
        lines.append(",".join(_g17(r[c]) for c in
                              ("gamma", "epsilon", "alpha_theory",
                               "alpha_estimated", "boot_lo", "boot_hi")))
    payload = {
        "ensemble": "mixture",
        "phi": phi,
        "dim": dim,
        "kappa": cfg["kappa"],
        "n_probes": cfg["n_probes"],
        "n_boot": cfg["n_boot"],
        "boot_level": cfg["boot_level"],
        "seed": seed,
        "threads": threads,
        "rows": rows,
    }
    if args.format == "json":
        _write_json(args.out or "index_curve.json", payload)
    else:
        out = args.out or "index_curve.csv"
        _write_text(out, "\n".join(lines) + "\n")
        _write_json(_summary_path(out), payload)
    return 0


# ---- entry point ------------------------------------------------------

def _resolve_threads(args, cfg):
    if args.threads is not None:
        if args.threads < 1:
            raise ConfigError("--threads must be positive")
        return args.threads
    if cfg["threads"] is not None:
        return cfg["threads"]
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            value = int(env)
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be an integer, got {env!r}")
        if value < 1:
            raise ConfigError(f"{THREADS_ENV} must be positive")
        return value
    return 1


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="specden",
        description="Smoothed spectral density estimation for large "
                    "implicit matrices.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("estimate", "validate", "spectrum", "index-curve"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="key = value config file")
        p.add_argument("--seed", type=int, default=None,
                       help="override the seed key")
        p.add_argument("--out", default=None, help="output path")
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads (default: config, then "
                            f"{THREADS_ENV}, then 1)")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        p.add_argument("--set", dest="overrides", action="append", default=[],
                       metavar="KEY=VALUE", help="override a config key")
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config, args.overrides)
        if args.seed is not None:
            cfg["seed"] = args.seed
        threads = _resolve_threads(args, cfg)
        _need(cfg, "ensemble", "to choose an ensemble")
        if args.command == "estimate":
            return _cmd_estimate(cfg, args, threads)
        if args.command == "validate":
            return _cmd_validate(cfg, args, threads)
        if args.command == "spectrum":
            return _cmd_spectrum(cfg, args)
        return _cmd_index_curve(cfg, args, threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
