"""Configuration-driven experiment runs with reproducibility manifests.

A run takes a validated JSON config, dispatches to a registered experiment,
writes CSV/JSON artifacts with fixed formatting (so identical config and
seed produce byte-identical files at any thread count), and records a
manifest with the config hash, seed, version, timestamps, and per-artifact
checksums.
"""

from __future__ import annotations

import copy
import datetime
import hashlib
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import rng as _rng
from .capacity import eigentask_decomposition, gram_matrices, ipc_probability_rep, ipc_spectral
from .errors import ConditioningFailure, ConfigValidation, IOFailure, NumericCheckFailure, UnknownExperiment
from .experiments import (
    classify_tails,
    detection_sample_threshold,
    fat_shattering_lower_bound,
    matched_polynomial_sharpness,
    power_basis_demo,
    sample_complexity_curve,
    scan_system_size,
    shift_register_flip_family,
    sweep_exponential_sharpness,
    switching_family,
    switching_subset_class,
    verify_shatter_witness,
)
from .qembed import verification_report
from .reservoir import InputMeasure, InputSequence, build_reservoir, run_exact, sample_trajectories
from .signals import empirical_probabilities, probability_signals


def format_float(x) -> str:
    """17 significant digits: enough to round-trip any float64 exactly."""
    return f"{float(x):.17g}"


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=_json_default)


def config_hash(config: dict) -> str:
    """Hash of the science-relevant config, stable under key reordering.

    Execution-only keys (output directory, thread count) are excluded so
    the same experiment run elsewhere hashes identically.
    """
    scrubbed = {k: v for k, v in config.items() if k not in ("out_dir", "threads")}
    return hashlib.sha256(canonical_json(scrubbed).encode()).hexdigest()


@dataclass
class Artifact:
    """One output file: either a CSV table or a JSON document."""

    name: str
    kind: str  # "csv" | "json"
    payload: dict


@dataclass
class RunManifest:
    config_hash: str
    seed: int
    version: str
    started_utc: str
    finished_utc: str
    runtime_seconds: float
    artifacts: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "config_hash": self.config_hash,
            "seed": self.seed,
            "version": self.version,
            "started_utc": self.started_utc,
            "finished_utc": self.finished_utc,
            "runtime_seconds": self.runtime_seconds,
            "artifacts": self.artifacts,
        }


def write_results(artifacts, out_dir) -> list:
    """Write artifacts with fixed column order and float formatting.

    CSV payloads are ``{"header": [...], "rows": [[...], ...]}``; floats are
    rendered with 17 significant digits so a parse-back reproduces them
    bit-exactly. JSON payloads are dumped with sorted keys.
    """
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        paths = []
        for art in artifacts:
            path = out_dir / art.name
            if art.kind == "csv":
                lines = [",".join(art.payload["header"])]
                for row in art.payload["rows"]:
                    cells = [
                        format_float(c) if isinstance(c, (float, np.floating)) else str(c)
                        for c in row
                    ]
                    lines.append(",".join(cells))
                path.write_text("\n".join(lines) + "\n")
            elif art.kind == "json":
                path.write_text(json.dumps(art.payload, sort_keys=True, indent=1,
                                           default=_json_default) + "\n")
            else:
                raise ValueError(f"unknown artifact kind: {art.kind!r}")
            paths.append(path)
        return paths
    except OSError as exc:
        raise IOFailure(str(exc)) from exc


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


# ---------------------------------------------------------------------------
# experiment runners
# ---------------------------------------------------------------------------

def _run_ipc(params, seed, threads):
    n = params["n"]
    lam = params["lambda"]
    measure = InputMeasure("iid-uniform-binary", 0.0, 1.0, seed=seed)
    res = build_reservoir(shift_register_flip_family(n, lam))
    drives = measure.draw(params["washout"] + params["timesteps"], _rng.stream(seed, 0))
    seq = InputSequence(drives[:, None], washout_length=params["washout"])
    if params["mode"] == "exact":
        signals = probability_signals(run_exact(res, seq))
        trace = ipc_probability_rep(signals)
    else:
        ens = sample_trajectories(res, seq, params["shots"], seed, threads=threads)
        signals = empirical_probabilities(ens)
        trace = None
    decomp = eigentask_decomposition(*gram_matrices(signals))
    spectral = ipc_spectral(decomp)
    report = {
        "n": n,
        "lambda": lam,
        "mode": params["mode"],
        "spectral": spectral.to_dict(),
        "probability_trace": trace.to_dict() if trace else None,
        "retained_rank": decomp.retained_rank,
    }
    sigma_rows = [(int(k), float(s)) for k, s in enumerate(decomp.sigma_sq)]
    return [
        Artifact("ipc_report.json", "json", report),
        Artifact("eigentask_sigma.csv", "csv",
                 {"header": ["k", "sigma_sq"], "rows": sigma_rows}),
    ], True


def _run_scan(params, seed, threads):
    measure = InputMeasure("iid-uniform-binary", 0.0, 1.0, seed=seed)
    curve = scan_system_size(
        shift_register_flip_family,
        range(params["n_min"], params["n_max"] + 1),
        params["lambda"], measure,
        timesteps=params["timesteps"], washout=params["washout"],
        repeats=params["repeats"], seed=seed,
    )
    rows = [
        (int(n), float(m), float(e), float(curve.noise))
        for n, m, e in zip(curve.n_values, curve.ipc_mean, curve.ipc_stderr)
    ]
    fit = {
        "slope_log_ipc_vs_n": curve.slope_n,
        "slope_stderr": curve.slope_n_stderr,
        "slope_log_ipc_vs_log_n": curve.slope_logn,
        "slope_logn_stderr": curve.slope_logn_stderr,
        "subexponential_consistent": curve.subexponential_consistent,
        "lambda": curve.noise,
    }
    return [
        Artifact("scaling_curve.csv", "csv",
                 {"header": ["n", "ipc", "ipc_stderr", "lambda"], "rows": rows}),
        Artifact("scan_fit.json", "json", fit),
    ], True


def _run_switching(params, seed, threads):
    count = params["count"]
    domain = (params["domain_lo"], params["domain_hi"])
    beta = sweep_exponential_sharpness(count, domain, params["target_min_peak"],
                                       params["grid_points"])
    s = matched_polynomial_sharpness(beta, params["match_rule"])
    fam_exp = switching_family("exponential", count, domain, beta, params["grid_points"])
    fam_poly = switching_family("polynomial", count, domain, s, params["grid_points"])
    header = (["u"] + [f"exp_{i}" for i in range(count)]
              + [f"poly_{i}" for i in range(count)])
    rows = [
        tuple([float(u)] + [float(v) for v in fam_exp.signals[:, j]]
              + [float(v) for v in fam_poly.signals[:, j]])
        for j, u in enumerate(fam_exp.grid)
    ]
    report = {
        "count": count,
        "beta": beta,
        "matched_sharpness": s,
        "match_rule": params["match_rule"],
        "exponential_peaks": [float(p) for p in fam_exp.peaks],
        "polynomial_peaks": [float(p) for p in fam_poly.peaks],
        "min_peak_exponential": float(fam_exp.peaks.min()),
        "min_peak_polynomial": float(fam_poly.peaks.min()),
        "peak_gap": float(fam_exp.peaks.min() - fam_poly.peaks.min()),
        "normalization_residual": max(fam_exp.normalization_residual(),
                                      fam_poly.normalization_residual()),
    }
    return [
        Artifact("switching_signals.csv", "csv", {"header": header, "rows": rows}),
        Artifact("switching_report.json", "json", report),
    ], True


def _run_tails(params, seed, threads):
    gen = _rng.stream(seed, 17)
    u = np.linspace(params["u_min"], params["u_max"], params["points"])
    rows = []
    correct = 0
    for case in range(params["draws"]):
        if gen.random() < 0.5:
            true_kind, true_param = "polynomial", float(gen.uniform(1.5, 4.0))
            p = u ** (-true_param)
        else:
            true_kind, true_param = "exponential", float(gen.uniform(0.3, 2.0))
            p = np.exp(-true_param * u)
        p = p * np.exp(params["noise"] * gen.normal(size=u.size))
        fit = classify_tails(u, p)
        correct += fit.classification == true_kind
        rows.append((case, true_kind, float(true_param), fit.classification,
                     float(fit.parameter), float(fit.residual_poly), float(fit.residual_exp)))
    report = {"draws": params["draws"], "accuracy": correct / params["draws"]}
    return [
        Artifact("tail_cases.csv", "csv",
                 {"header": ["case", "true_kind", "true_param", "fit_kind",
                             "fit_param", "residual_poly", "residual_exp"],
                  "rows": rows}),
        Artifact("tails_report.json", "json", report),
    ], report["accuracy"] >= 0.95


def _run_power_basis(params, seed, threads):
    try:
        rep = power_basis_demo(params["n"], params["samples"], seed=seed)
        payload = {
            "n": rep.n,
            "rank": rep.rank,
            "samples": rep.samples,
            "total_capacity": rep.ipc_report.ipc_value,
            "gram_eigenvalue_min": float(rep.gram_eigenvalues[0]),
            "gram_eigenvalue_max": float(rep.gram_eigenvalues[-1]),
            "conditioning_failure": None,
        }
        rows = [(g, float(c)) for g, c in enumerate(rep.ipc_report.components)]
        arts = [
            Artifact("power_basis.json", "json", payload),
            Artifact("power_basis_capacities.csv", "csv",
                     {"header": ["degree", "capacity"], "rows": rows}),
        ]
    except ConditioningFailure as exc:
        arts = [Artifact("power_basis.json", "json",
                         {"n": params["n"], "conditioning_failure": str(exc)})]
    return arts, True


def _run_learnability(params, seed, threads):
    rows = []
    for qi, q in enumerate(params["q_values"]):
        curve = sample_complexity_curve(q, params["m0_grid"], params["trials"],
                                        seed=seed + qi)
        for m0, ex, em, ap, flag in zip(curve.m0_grid, curve.exact_all_zero,
                                        curve.empirical_all_zero,
                                        curve.small_product_approx,
                                        curve.approx_regime):
            rows.append((float(q), int(m0), float(ex), float(em), float(ap), int(flag)))
    growth = []
    for n in range(params["growth_n_min"], params["growth_n_max"] + 1):
        q = n * n / 2.0 ** n
        growth.append({
            "n": n,
            "q": q,
            "m0_needed": detection_sample_threshold(q),
            "reference_ln2_over_q": math.log(2.0) / q,
        })
    report = {"trials": params["trials"], "growth": growth}
    return [
        Artifact("learnability_curve.csv", "csv",
                 {"header": ["q", "m0", "exact_all_zero", "empirical_all_zero",
                             "m0_times_q", "approx_regime"], "rows": rows}),
        Artifact("learnability_report.json", "json", report),
    ], True


def _run_fat_shatter(params, seed, threads):
    beta = sweep_exponential_sharpness(params["count"], (0.0, 1.0),
                                       params["target_min_peak"])
    fam = switching_family("exponential", params["count"], (0.0, 1.0), beta)
    values = switching_subset_class(fam)
    d, witness = fat_shattering_lower_bound(values, params["gamma"],
                                            thresholds=params["threshold"])
    verified = verify_shatter_witness(values, witness) if d > 0 else True
    report = {
        "count": params["count"],
        "gamma": params["gamma"],
        "threshold": params["threshold"],
        "beta": beta,
        "dimension": d,
        "witness_instances": list(witness.instance_indices),
        "witness_thresholds": [float(t) for t in witness.thresholds],
        "witness_assignment": {str(k): int(v) for k, v in witness.assignment.items()},
        "witness_verified": verified,
    }
    return [Artifact("fat_shatter.json", "json", report)], verified and d >= 2


def _run_embed_check(params, seed, threads):
    report = verification_report(tolerance=params["tolerance"],
                                 cases=params["cases"], dt=params["dt"], seed=seed)
    return [Artifact("embed_check.json", "json", report)], bool(report["passed"])


EXPERIMENTS: dict = {
    "ipc": (_run_ipc, {"n": 3, "lambda": 0.1, "timesteps": 1500, "washout": 100,
                       "mode": "exact", "shots": 2000}),
    "scan-n": (_run_scan, {"n_min": 2, "n_max": 8, "lambda": 0.05,
                           "timesteps": 2000, "washout": 100, "repeats": 3}),
    "switching": (_run_switching, {"count": 4, "domain_lo": 0.0, "domain_hi": 1.0,
                                   "target_min_peak": 0.99, "grid_points": 2001,
                                   "match_rule": "decay-scale"}),
    "tails": (_run_tails, {"draws": 100, "u_min": 5.0, "u_max": 50.0,
                           "points": 200, "noise": 0.01}),
    "power-basis": (_run_power_basis, {"n": 3, "samples": 100_000}),
    "learnability": (_run_learnability, {"q_values": [0.01, 0.1],
                                         "m0_grid": [1, 10, 100],
                                         "trials": 10_000,
                                         "growth_n_min": 8, "growth_n_max": 16}),
    "fat-shatter": (_run_fat_shatter, {"count": 4, "gamma": 0.3, "threshold": 0.5,
                                       "target_min_peak": 0.99}),
    "embed-check": (_run_embed_check, {"tolerance": 1e-12, "cases": 100, "dt": 1e-3}),
}

_COMMON_KEYS = {"experiment", "seed", "out_dir", "threads"}


def validate_config(config: dict) -> dict:
    """Merge defaults, reject unknown keys, and return the effective config."""
    if "experiment" not in config:
        raise ConfigValidation("config is missing the 'experiment' key")
    name = config["experiment"]
    if name not in EXPERIMENTS:
        raise UnknownExperiment(f"unknown experiment: {name!r}")
    _, defaults = EXPERIMENTS[name]
    allowed = _COMMON_KEYS | set(defaults)
    for key in config:
        if key not in allowed:
            raise ConfigValidation(f"unknown config key: {key!r}")
    effective = {"experiment": name, "seed": int(config.get("seed", 0)),
                 "threads": int(config.get("threads", 1))}
    if "out_dir" in config:
        effective["out_dir"] = str(config["out_dir"])
    merged = copy.deepcopy(defaults)
    for key, value in config.items():
        if key not in defaults:
            continue
        want = type(defaults[key])
        if want in (int, float) and isinstance(value, (int, float)) \
                and not isinstance(value, bool):
            merged[key] = want(value)
        elif isinstance(value, want):
            merged[key] = value
        else:
            raise ConfigValidation(
                f"config key {key!r} expects {want.__name__}, got {type(value).__name__}"
            )
    effective.update(merged)
    return effective


def run_experiment(config: dict) -> RunManifest:
    """Validate, dispatch, write artifacts plus manifest, return the manifest.

    Raises NumericCheckFailure (after writing everything) when the
    experiment's built-in verification does not pass.
    """
    effective = validate_config(config)
    name = effective["experiment"]
    runner, defaults = EXPERIMENTS[name]
    params = {k: effective[k] for k in defaults}
    out_dir = Path(effective.get("out_dir", "."))
    seed = effective["seed"]
    threads = effective["threads"]

    started = datetime.datetime.now(datetime.timezone.utc)
    t0 = time.perf_counter()
    artifacts, passed = runner(params, seed, threads)
    paths = write_results(artifacts, out_dir)
    finished = datetime.datetime.now(datetime.timezone.utc)

    manifest = RunManifest(
        config_hash=config_hash(effective),
        seed=seed,
        version=f"stochres-{__version__}",
        started_utc=started.isoformat(),
        finished_utc=finished.isoformat(),
        runtime_seconds=time.perf_counter() - t0,
        artifacts=[
            {"path": p.name, "sha256": _sha256(p), "bytes": p.stat().st_size}
            for p in paths
        ],
    )
    try:
        (out_dir / "manifest.json").write_text(
            json.dumps(manifest.to_dict(), sort_keys=True, indent=1,
                       default=_json_default) + "\n"
        )
    except OSError as exc:
        raise IOFailure(str(exc)) from exc
    if not passed:
        raise NumericCheckFailure(f"experiment {name!r} failed its numeric checks")
    return manifest
