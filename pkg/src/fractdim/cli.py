"""Batch driver: experiment configs in, CSV artifacts and manifests out.

The config surface is one JSON document with a versioned schema; unknown
keys are rejected so a typo cannot silently change an experiment.  Every
randomized routine reads the declared seed, so identical (config, seed)
pairs produce byte-identical CSVs for any worker count.  Exit codes:
0 all declared assertions pass, 1 an assertion fails, 2 schema error,
3 precondition violation.
"""

from __future__ import annotations

import argparse
import json
import math
import platform
import sys
import time
from pathlib import Path

import numpy as np

from .errors import FractdimError, PreconditionError, SchemaError
from .ifs import (
    SimilarityIFS,
    TranslationFamily,
    sample_points,
    transversality_exponent,
)
from .measures import (
    BernoulliMeasure,
    LocallyConstantPotential,
    MarkovMeasure,
    encode_word,
    gibbs_from_potential,
    markov_approximation,
    relative_entropy,
)
from .multifractal import SpectrumProblem, T_derivative, solve_T, spectrum_curve
from .dimest import (
    RadiusSchedule,
    box_counting,
    coarse_spectrum,
    correlation_dimension,
    empirical_energy,
)
from .projections import Subspace, ede_check, holder_inverse_check, marstrand_experiment
from .runtime import enumeration_budget, substream

SCHEMA_VERSION = 1

# substream key for config-driven word sampling; module streams stay below 100
_STREAM_CLI_WORDS = 901

_KINDS = ("spectrum", "dimension", "project", "ede", "transversality", "approx", "gibbs")
_NEEDS_IFS = {"spectrum", "dimension", "project", "ede", "transversality"}
_NEEDS_MEASURE = {"spectrum", "dimension", "project", "approx"}


# ---------------------------------------------------------------------------
# CSV dialect: comma, '.' decimal, 17 significant digits, LF, header mandatory


def format_value(v):
    """One CSV cell: doubles at 17 significant digits, ints exact."""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    return str(v)


def write_csv(path, header, rows):
    lines = [",".join(header)]
    for row in rows:
        if len(row) != len(header):
            raise ValueError("row width does not match the header")
        lines.append(",".join(format_value(v) for v in row))
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Schema validation.  Shapes and key sets are checked here (exit 2);
# numeric ranges are the library's preconditions (exit 3).


def _check_keys(obj, path, required, optional=()):
    if not isinstance(obj, dict):
        raise SchemaError(f"{path}: expected an object")
    for key in obj:
        if key not in required and key not in optional:
            raise SchemaError(f"{path}: unknown key '{key}'")
    for key in required:
        if key not in obj:
            raise SchemaError(f"{path}: missing required key '{key}'")


def _number(obj, path):
    if isinstance(obj, bool) or not isinstance(obj, (int, float)):
        raise SchemaError(f"{path}: expected a number")
    return float(obj)


def _integer(obj, path):
    if isinstance(obj, bool) or not isinstance(obj, int):
        raise SchemaError(f"{path}: expected an integer")
    return int(obj)


def _array(obj, path, dtype=float):
    try:
        arr = np.array(obj, dtype=dtype)
    except (TypeError, ValueError):
        raise SchemaError(f"{path}: expected a numeric array")
    if arr.size == 0:
        raise SchemaError(f"{path}: array must be nonempty")
    return arr


_PARAM_KEYS = {
    "spectrum": ((), ("qs", "coarse")),
    "dimension": (("count",), ("sample_tol", "correlation", "box", "energy")),
    "project": (
        ("subspace_dim", "directions", "count"),
        ("tolerance", "max_pairs", "basis"),
    ),
    "ede": (
        ("depth_min", "depth_max", "epsilon"),
        ("words", "samples", "word_length", "tolerance", "holder"),
    ),
    "transversality": (
        ("low", "high", "word_a", "word_b", "r0", "levels", "samples"),
        ("region_low", "region_high"),
    ),
    "approx": (("orders",), ()),
    "gibbs": (("depth", "alphabet", "table"), ("check_depth",)),
}


def _validate_ifs_spec(spec):
    _check_keys(spec, "config.ifs", ("ratios", "translations"), ("rotations", "orthogonal"))
    _array(spec["ratios"], "config.ifs.ratios")
    _array(spec["translations"], "config.ifs.translations")
    if "rotations" in spec and "orthogonal" in spec:
        raise SchemaError("config.ifs: give rotations or orthogonal, not both")
    if "rotations" in spec:
        _array(spec["rotations"], "config.ifs.rotations")
    if "orthogonal" in spec:
        _array(spec["orthogonal"], "config.ifs.orthogonal")


def _validate_measure_spec(spec):
    if not isinstance(spec, dict) or "type" not in spec:
        raise SchemaError("config.measure: expected an object with a 'type' key")
    kind = spec["type"]
    if kind == "bernoulli":
        _check_keys(spec, "config.measure", ("type", "weights"))
        _array(spec["weights"], "config.measure.weights")
    elif kind == "markov":
        _check_keys(spec, "config.measure", ("type", "order", "kernel"))
        _integer(spec["order"], "config.measure.order")
        _array(spec["kernel"], "config.measure.kernel")
    else:
        raise SchemaError(f"config.measure.type: unknown measure type '{kind}'")


def _validate_assertion(item, path, known):
    _check_keys(item, path, ("quantity",), ("name", "value", "tol", "min", "max"))
    quantity = item["quantity"]
    if not isinstance(quantity, str) or quantity not in known:
        raise SchemaError(
            f"{path}.quantity: '{quantity}' is not produced by this experiment"
        )
    pinned = "value" in item or "tol" in item
    bounded = "min" in item or "max" in item
    if pinned == bounded:
        raise SchemaError(f"{path}: give value+tol or min/max bounds, not both")
    if pinned:
        if "value" not in item or "tol" not in item:
            raise SchemaError(f"{path}: value and tol must come together")
        _number(item["value"], f"{path}.value")
        _number(item["tol"], f"{path}.tol")
    else:
        for key in ("min", "max"):
            if key in item:
                _number(item[key], f"{path}.{key}")


def _quantity_names(kind, params):
    """Exact quantity namespace of a run, computable without running it."""
    names = set()
    if kind == "spectrum":
        names |= {
            "T_at_1", "T_at_0", "similarity_dim", "alpha_min", "alpha_max",
            "alpha_peak", "alpha_at_0", "alpha_at_1",
        }
        if "coarse" in params:
            names |= {
                "coarse_peak_alpha", "coarse_peak_f", "coarse_f_at_alpha1",
                "coarse_boxes",
            }
    elif kind == "dimension":
        names |= {"count", "truncation"}
        if "correlation" in params:
            names |= {"correlation", "correlation_stderr"}
        if "box" in params:
            names |= {"box", "box_stderr"}
        if "energy" in params:
            for i in range(len(params["energy"]["exponents"])):
                names |= {f"energy{i}_value", f"energy{i}_diverged"}
    elif kind == "project":
        names |= {
            "predicted", "fraction_within", "below_count", "directions",
            "q05", "q25", "q50", "q75", "q95",
        }
    elif kind == "ede":
        names |= {
            "words", "fraction_passed", "all_passed", "any_overlap",
            "max_worst_exponent", "min_constant",
        }
        if "holder" in params:
            names.add("holder_stabilized")
            for i in range(len(params["holder"]["alphas"])):
                names.add(f"holder{i}_overall")
    elif kind == "transversality":
        names |= {
            "exponent", "k_hat", "degenerate", "constraint_satisfied",
            "samples", "used_bins",
        }
    elif kind == "approx":
        names |= {
            "entropy", "max_identity_residual", "monotone",
            "relative_entropy_first", "relative_entropy_last",
        }
    elif kind == "gibbs":
        names |= {"pressure", "constant", "max_ratio", "min_ratio", "bounds_hold"}
        if params.get("depth") == 1:
            names.add("bernoulli_residual")
    return names


def _validate_params(kind, params):
    required, optional = _PARAM_KEYS[kind]
    _check_keys(params, "config.params", required, optional)
    if kind == "dimension":
        _integer(params["count"], "config.params.count")
        for block in ("correlation", "box"):
            if block in params:
                _check_keys(
                    params[block], f"config.params.{block}",
                    ("levels",), ("r0", "fit_lo", "max_pairs"),
                )
        if "energy" in params:
            _check_keys(
                params["energy"], "config.params.energy",
                ("exponents",), ("max_pairs",),
            )
            _array(params["energy"]["exponents"], "config.params.energy.exponents")
    elif kind == "spectrum":
        if "qs" in params:
            _array(params["qs"], "config.params.qs")
        if "coarse" in params:
            _check_keys(
                params["coarse"], "config.params.coarse",
                ("count", "scale"), ("delta",),
            )
    elif kind == "ede":
        _integer(params["depth_min"], "config.params.depth_min")
        _integer(params["depth_max"], "config.params.depth_max")
        _number(params["epsilon"], "config.params.epsilon")
        if ("words" in params) == ("samples" in params):
            raise SchemaError("config.params: give words or samples, not both")
        if "words" in params:
            for i, w in enumerate(params["words"]):
                _array(w, f"config.params.words[{i}]", dtype=int)
        else:
            _integer(params["samples"], "config.params.samples")
        if "holder" in params:
            _check_keys(
                params["holder"], "config.params.holder",
                ("alphas", "pair_samples"), (),
            )
            _array(params["holder"]["alphas"], "config.params.holder.alphas")
    elif kind == "project":
        _integer(params["subspace_dim"], "config.params.subspace_dim")
        _integer(params["directions"], "config.params.directions")
        _integer(params["count"], "config.params.count")
    elif kind == "transversality":
        for key in ("low", "high", "word_a", "word_b"):
            _array(params[key], f"config.params.{key}")
        _number(params["r0"], "config.params.r0")
        _integer(params["levels"], "config.params.levels")
        _integer(params["samples"], "config.params.samples")
    elif kind == "approx":
        _array(params["orders"], "config.params.orders", dtype=int)
    elif kind == "gibbs":
        _integer(params["depth"], "config.params.depth")
        _integer(params["alphabet"], "config.params.alphabet")
        _array(params["table"], "config.params.table")


def validate_config(cfg):
    _check_keys(
        cfg, "config",
        ("schema", "kind", "seed", "params"),
        ("ifs", "measure", "assert"),
    )
    if cfg["schema"] != SCHEMA_VERSION:
        raise SchemaError(
            f"config.schema: version {cfg['schema']!r} unsupported "
            f"(this build reads {SCHEMA_VERSION})"
        )
    kind = cfg["kind"]
    if kind not in _KINDS:
        raise SchemaError(f"config.kind: unknown experiment kind '{kind}'")
    _integer(cfg["seed"], "config.seed")
    if kind in _NEEDS_IFS:
        if "ifs" not in cfg:
            raise SchemaError(f"config: kind '{kind}' requires an ifs block")
        _validate_ifs_spec(cfg["ifs"])
    needs_measure = kind in _NEEDS_MEASURE or (
        kind == "ede" and "samples" in cfg.get("params", {})
    )
    if needs_measure and "measure" not in cfg:
        raise SchemaError(f"config: kind '{kind}' requires a measure block")
    if "measure" in cfg:
        _validate_measure_spec(cfg["measure"])
        if kind == "spectrum" and cfg["measure"]["type"] != "bernoulli":
            raise SchemaError(
                "config.measure: the structure function needs product weights"
            )
    if not isinstance(cfg["params"], dict):
        raise SchemaError("config.params: expected an object")
    _validate_params(kind, cfg["params"])
    known = _quantity_names(kind, cfg["params"])
    checks = cfg.get("assert", [])
    if not isinstance(checks, list):
        raise SchemaError("config.assert: expected a list")
    for i, item in enumerate(checks):
        _validate_assertion(item, f"config.assert[{i}]", known)
    return cfg


def load_config(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise SchemaError(f"cannot read config: {exc}")
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(
            f"config is not valid JSON at line {exc.lineno}, column {exc.colno}: "
            f"{exc.msg}"
        )
    return validate_config(cfg)


# ---------------------------------------------------------------------------
# Builders: config blocks to library objects.  Range errors surface as the
# library's PreconditionError, giving exit code 3 with the invariant named.


def build_ifs(spec):
    orthogonal = None
    if "rotations" in spec:
        angles = np.array(spec["rotations"], dtype=float).ravel()
        trans = np.atleast_2d(np.array(spec["translations"], dtype=float))
        if trans.shape[1] != 2:
            raise PreconditionError("rotation angles only make sense in the plane")
        orthogonal = np.array(
            [
                [[math.cos(a), -math.sin(a)], [math.sin(a), math.cos(a)]]
                for a in angles
            ]
        )
    elif "orthogonal" in spec:
        orthogonal = np.array(spec["orthogonal"], dtype=float)
    return SimilarityIFS(
        ratios=spec["ratios"],
        translations=spec["translations"],
        orthogonal=orthogonal,
    )


def build_measure(spec):
    if spec["type"] == "bernoulli":
        return BernoulliMeasure(spec["weights"])
    kernel = np.array(spec["kernel"], dtype=float)
    return MarkovMeasure.from_kernel(kernel, order=int(spec["order"]))


# ---------------------------------------------------------------------------
# Runners.  Each returns (artifacts, quantities): artifacts are
# (filename, header, rows) triples, quantities a flat name -> float map.


def _run_spectrum(cfg, workers):
    params = cfg["params"]
    ifs = build_ifs(cfg["ifs"])
    measure = build_measure(cfg["measure"])
    problem = SpectrumProblem(measure.p, ifs.ratios)
    qs = np.array(params["qs"], dtype=float) if "qs" in params else None
    curve = spectrum_curve(problem, qs)
    rows = list(zip(curve.q, curve.T, curve.alpha, curve.f, curve.endpoint.astype(int)))
    artifacts = [("structure.csv", ["q", "T", "alpha", "f", "endpoint"], rows)]
    quantities = {
        "T_at_1": solve_T(problem, 1.0),
        "T_at_0": solve_T(problem, 0.0),
        "similarity_dim": problem.similarity_dim,
        "alpha_min": curve.alpha_min,
        "alpha_max": curve.alpha_max,
        "alpha_peak": curve.alpha_peak,
        "alpha_at_0": -T_derivative(problem, 0.0),
        "alpha_at_1": -T_derivative(problem, 1.0),
    }
    if "coarse" in params:
        block = params["coarse"]
        scale = float(block["scale"])
        delta = float(block.get("delta", 0.05))
        cloud = sample_points(
            ifs, measure, int(block["count"]), tol=scale / 20.0,
            seed=cfg["seed"], workers=workers,
        )
        spec = coarse_spectrum(cloud, scale, delta=delta)
        artifacts.append(
            ("coarse.csv", ["alpha", "f"], list(zip(spec.alpha, spec.f)))
        )
        alpha1 = quantities["alpha_at_1"]
        at1 = int(np.argmin(np.abs(spec.alpha - alpha1)))
        quantities.update(
            coarse_peak_alpha=spec.peak_alpha,
            coarse_peak_f=spec.peak_f,
            coarse_f_at_alpha1=float(spec.f[at1]),
            coarse_boxes=float(spec.occupied),
        )
    return artifacts, quantities


def _fit_schedule(cloud, block):
    spread = float(np.max(cloud.points.max(axis=0) - cloud.points.min(axis=0)))
    r0 = float(block.get("r0", spread / 4.0))
    levels = int(block["levels"])
    return RadiusSchedule(
        r0=r0, levels=levels, fit_lo=int(block.get("fit_lo", 1)), fit_hi=levels
    )


def _run_dimension(cfg, workers):
    params = cfg["params"]
    ifs = build_ifs(cfg["ifs"])
    measure = build_measure(cfg["measure"])
    seed = cfg["seed"]
    cloud = sample_points(
        ifs, measure, int(params["count"]),
        tol=float(params.get("sample_tol", 1e-7)), seed=seed, workers=workers,
    )
    artifacts = []
    quantities = {"count": float(cloud.size), "truncation": cloud.truncation_error}
    if "correlation" in params:
        block = params["correlation"]
        schedule = _fit_schedule(cloud, block)
        est = correlation_dimension(
            cloud, schedule, seed=seed,
            max_pairs=int(block.get("max_pairs", 2_000_000)), workers=workers,
        )
        fitted = np.zeros(est.radii.size, dtype=int)
        fitted[schedule.fit_slice] = 1
        artifacts.append(
            (
                "correlation.csv", ["radius", "correlation", "fitted"],
                list(zip(est.radii, est.profile, fitted)),
            )
        )
        quantities.update(correlation=est.value, correlation_stderr=est.stderr)
    if "box" in params:
        schedule = _fit_schedule(cloud, params["box"])
        est = box_counting(cloud, schedule)
        fitted = np.zeros(est.radii.size, dtype=int)
        fitted[schedule.fit_slice] = 1
        artifacts.append(
            (
                "box.csv", ["radius", "boxes", "fitted"],
                list(zip(est.radii, est.profile.astype(int), fitted)),
            )
        )
        quantities.update(box=est.value, box_stderr=est.stderr)
    if "energy" in params:
        block = params["energy"]
        rows = []
        for i, s in enumerate(np.array(block["exponents"], dtype=float)):
            est = empirical_energy(
                cloud, float(s), seed=seed,
                max_pairs=int(block.get("max_pairs", 2_000_000)), workers=workers,
            )
            rows.append((est.s, est.value, est.half_value, int(est.diverged)))
            quantities[f"energy{i}_value"] = est.value
            quantities[f"energy{i}_diverged"] = float(est.diverged)
        artifacts.append(
            ("energy.csv", ["s", "energy", "half_energy", "diverged"], rows)
        )
    return artifacts, quantities


def _run_project(cfg, workers):
    params = cfg["params"]
    ifs = build_ifs(cfg["ifs"])
    measure = build_measure(cfg["measure"])
    directions = None
    if "basis" in params:
        directions = [Subspace(b) for b in params["basis"]]
    report = marstrand_experiment(
        ifs, measure,
        d=int(params["subspace_dim"]),
        num_directions=int(params["directions"]),
        count=int(params["count"]),
        seed=cfg["seed"],
        tol=float(params.get("tolerance", 0.1)),
        directions=directions,
        max_pairs=int(params.get("max_pairs", 2_000_000)),
        workers=workers,
    )
    within = np.abs(report.estimates - report.predicted) <= report.tolerance
    rows = [
        (j, report.estimates[j], report.stderrs[j], int(within[j]), int(report.below[j]))
        for j in range(report.estimates.size)
    ]
    artifacts = [
        ("directions.csv", ["index", "estimate", "stderr", "within", "below"], rows)
    ]
    q05, q25, q50, q75, q95 = report.quantiles
    quantities = {
        "predicted": report.predicted,
        "fraction_within": report.fraction_within,
        "below_count": float(report.below.sum()),
        "directions": float(report.estimates.size),
        "q05": q05, "q25": q25, "q50": q50, "q75": q75, "q95": q95,
    }
    return artifacts, quantities


def _run_ede(cfg, workers):
    params = cfg["params"]
    ifs = build_ifs(cfg["ifs"])
    seed = cfg["seed"]
    if "words" in params:
        words = [tuple(int(s) for s in w) for w in params["words"]]
    else:
        measure = build_measure(cfg["measure"])
        length = int(params.get("word_length", max(40, int(params["depth_max"]) * 2)))
        rng = substream(seed, _STREAM_CLI_WORDS)
        words = [
            tuple(row)
            for row in measure.sample_batch(int(params["samples"]), length, rng)
        ]
    depths = range(int(params["depth_min"]), int(params["depth_max"]) + 1)
    epsilon = float(params["epsilon"])
    tol = float(params.get("tolerance", 1e-12))
    rows = []
    constants = []
    passed_flags = []
    overlap_flags = []
    worst = []
    for w in words:
        rep = ede_check(ifs, w, depths, epsilon, tol)
        label = "".join(str(s) for s in w[: max(depths)])
        for k in range(rep.depths.size):
            rows.append(
                (label, rep.depths[k], rep.dist_lower[k], rep.diam[k], int(rep.passed[k]))
            )
        constants.append(rep.constant)
        passed_flags.append(rep.all_passed)
        overlap_flags.append(rep.overlap_suspected)
        worst.append(rep.worst_exponent)
    artifacts = [
        ("verdicts.csv", ["word", "depth", "dist_lower", "diam", "passed"], rows)
    ]
    quantities = {
        "words": float(len(words)),
        "fraction_passed": float(np.mean(passed_flags)),
        "all_passed": float(all(passed_flags)),
        "any_overlap": float(any(overlap_flags)),
        "max_worst_exponent": float(np.max(worst)),
        "min_constant": float(np.min(constants)),
    }
    if "holder" in params:
        block = params["holder"]
        measure = build_measure(cfg["measure"])
        rep = holder_inverse_check(
            ifs, measure,
            alphas=np.array(block["alphas"], dtype=float),
            pair_samples=int(block["pair_samples"]),
            seed=seed,
        )
        hrows = []
        for a in range(rep.alphas.size):
            for d in range(rep.depths.size):
                hrows.append(
                    (
                        rep.alphas[a], rep.depths[d], rep.worst[a, d],
                        rep.skipped[d], rep.pairs[d],
                    )
                )
        artifacts.append(
            ("holder.csv", ["alpha", "depth", "worst", "skipped", "pairs"], hrows)
        )
        stable = rep.stabilized()
        quantities["holder_stabilized"] = float(np.all(stable))
        for i in range(rep.alphas.size):
            quantities[f"holder{i}_overall"] = float(rep.overall[i])
    return artifacts, quantities


def _run_transversality(cfg, workers):
    params = cfg["params"]
    ifs = build_ifs(cfg["ifs"])
    family = TranslationFamily(
        ifs,
        low=np.array(params["low"], dtype=float),
        high=np.array(params["high"], dtype=float),
        region_low=(
            np.array(params["region_low"], dtype=float)
            if "region_low" in params else None
        ),
        region_high=(
            np.array(params["region_high"], dtype=float)
            if "region_high" in params else None
        ),
    )
    radii = float(params["r0"]) * 0.5 ** np.arange(int(params["levels"]) + 1)
    res = transversality_exponent(
        family,
        tuple(int(s) for s in params["word_a"]),
        tuple(int(s) for s in params["word_b"]),
        radii,
        param_samples=int(params["samples"]),
        seed=cfg["seed"],
        workers=workers,
    )
    rows = list(zip(res.radii, res.measures, res.hits, res.used.astype(int)))
    artifacts = [("decay.csv", ["radius", "measure", "hits", "used"], rows)]
    quantities = {
        "exponent": res.exponent,
        "k_hat": res.k_hat,
        "degenerate": float(res.degenerate),
        "constraint_satisfied": float(res.constraint_satisfied),
        "samples": float(res.samples),
        "used_bins": float(res.used.sum()),
    }
    return artifacts, quantities


def _run_approx(cfg, workers):
    params = cfg["params"]
    measure = build_measure(cfg["measure"])
    base_entropy = measure.entropy()
    rows = []
    rels = []
    residuals = []
    for k in np.array(params["orders"], dtype=int):
        approx = markov_approximation(measure, int(k))
        rel = relative_entropy(measure, approx)
        residual = abs(rel - (approx.entropy() - base_entropy))
        rows.append((int(k), approx.entropy(), rel, residual))
        rels.append(rel)
        residuals.append(residual)
    artifacts = [
        (
            "approx.csv",
            ["order", "entropy_rate", "relative_entropy", "identity_residual"],
            rows,
        )
    ]
    quantities = {
        "entropy": base_entropy,
        "max_identity_residual": float(np.max(residuals)),
        "monotone": float(np.all(np.diff(rels) <= 1e-12)),
        "relative_entropy_first": float(rels[0]),
        "relative_entropy_last": float(rels[-1]),
    }
    return artifacts, quantities


def _birkhoff_bounds(pot, n):
    """Min/max Birkhoff sums over every length-n cylinder, code order.

    The first n - depth + 1 windows are determined by the word; the last
    depth - 1 windows straddle the free tail, so their extremes depend only
    on the final state and are folded in from a per-state enumeration.
    """
    m, d = pot.m, pot.depth
    states = m ** (d - 1)
    if n < d - 1:
        # word shorter than the memory: every window straddles the tail
        lo = np.full(m**n, math.inf)
        hi = np.full(m**n, -math.inf)
        for code in range(m**n):
            word = [(code // m**j) % m for j in reversed(range(n))]
            for tcode in range(states):
                tail = [(tcode // m**j) % m for j in reversed(range(d - 1))]
                full = word + tail
                s = 0.0
                for j in range(n):
                    s += pot.table[encode_word(full[j : j + d], m)]
                lo[code] = min(lo[code], s)
                hi[code] = max(hi[code], s)
        return lo, hi
    tail_lo = np.zeros(states)
    tail_hi = np.zeros(states)
    if d > 1:
        tail_lo.fill(math.inf)
        tail_hi.fill(-math.inf)
        for code in range(states):
            state = [(code // m**j) % m for j in reversed(range(d - 1))]
            for tcode in range(states):
                tail = [(tcode // m**j) % m for j in reversed(range(d - 1))]
                full = state + tail
                s = 0.0
                for j in range(d - 1):
                    s += pot.table[encode_word(full[j : j + d], m)]
                tail_lo[code] = min(tail_lo[code], s)
                tail_hi[code] = max(tail_hi[code], s)
    # head[w] = sum of fully determined windows, grown level by level
    head = np.zeros(1)
    state = np.zeros(1, dtype=int)
    for level in range(1, n + 1):
        head = np.repeat(head, m)
        grown = state[:, None] * m + np.arange(m)[None, :]
        if level < d:
            state = grown.ravel()
            continue
        window = (state[:, None] % m ** (d - 1)) * m + np.arange(m)[None, :]
        head = head + pot.table[window.ravel()]
        state = grown.ravel() % m ** max(d - 1, 1)
    if d == 1:
        return head, head
    return head + tail_lo[state], head + tail_hi[state]


def _run_gibbs(cfg, workers):
    params = cfg["params"]
    pot = LocallyConstantPotential(
        depth=int(params["depth"]),
        m=int(params["alphabet"]),
        table=np.array(params["table"], dtype=float),
    )
    gm = gibbs_from_potential(pot)
    check_depth = int(params.get("check_depth", 10))
    rows = []
    max_ratio, min_ratio = -math.inf, math.inf
    for n in range(1, check_depth + 1):
        masses = gm.marginal(n)
        s_lo, s_hi = _birkhoff_bounds(pot, n)
        keep = masses > 0
        hi = np.max(masses[keep] * np.exp(n * gm.pressure - s_lo[keep]))
        lo = np.min(masses[keep] * np.exp(n * gm.pressure - s_hi[keep]))
        rows.append((n, lo, hi, int(keep.sum())))
        max_ratio = max(max_ratio, hi)
        min_ratio = min(min_ratio, lo)
    holds = max_ratio <= gm.constant * (1 + 1e-9) and min_ratio >= (
        1 / gm.constant
    ) * (1 - 1e-9)
    artifacts = [
        ("bounds.csv", ["n", "min_ratio", "max_ratio", "cylinders"], rows)
    ]
    quantities = {
        "pressure": gm.pressure,
        "constant": gm.constant,
        "max_ratio": max_ratio,
        "min_ratio": min_ratio,
        "bounds_hold": float(holds),
    }
    if pot.depth == 1:
        p = np.exp(pot.table - gm.pressure)
        quantities["bernoulli_residual"] = float(
            np.max(np.abs(gm.marginal(1) - p))
        )
    return artifacts, quantities


_RUNNERS = {
    "spectrum": _run_spectrum,
    "dimension": _run_dimension,
    "project": _run_project,
    "ede": _run_ede,
    "transversality": _run_transversality,
    "approx": _run_approx,
    "gibbs": _run_gibbs,
}


# ---------------------------------------------------------------------------
# Assertions, manifest, run/verify drivers


def evaluate_assertions(checks, quantities):
    results = []
    for item in checks:
        got = quantities[item["quantity"]]
        if "value" in item:
            ok = abs(got - item["value"]) <= item["tol"]
            expected = {"value": item["value"], "tol": item["tol"]}
        else:
            ok = True
            expected = {}
            if "min" in item:
                ok = ok and got >= item["min"]
                expected["min"] = item["min"]
            if "max" in item:
                ok = ok and got <= item["max"]
                expected["max"] = item["max"]
        results.append(
            {
                "name": item.get("name", item["quantity"]),
                "quantity": item["quantity"],
                "got": got,
                **expected,
                "passed": bool(ok),
            }
        )
    return results


def _versions():
    import scipy

    from . import __version__

    return {
        "fractdim": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
    }


def run(config_path, out_dir, workers=1, seed_override=None):
    """Execute one experiment config; returns the process exit code."""
    start = time.perf_counter()
    cfg = load_config(config_path)
    overridden = seed_override is not None
    if overridden:
        cfg["seed"] = int(seed_override)
    artifacts, quantities = _RUNNERS[cfg["kind"]](cfg, workers)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, header, rows in artifacts:
        write_csv(out / name, header, rows)
    results = evaluate_assertions(cfg.get("assert", []), quantities)
    manifest = {
        "config": cfg,
        "seed": cfg["seed"],
        "seed_overridden": overridden,
        "workers": int(workers),
        "budget": enumeration_budget(),
        "versions": _versions(),
        "artifacts": [name for name, _, _ in artifacts],
        "wall_seconds": time.perf_counter() - start,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    summary = {
        "passed": all(r["passed"] for r in results),
        "assertions": results,
        "quantities": quantities,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    for r in results:
        verdict = "pass" if r["passed"] else "FAIL"
        print(f"{verdict}  {r['name']}: got {format_value(r['got'])}")
    return 0 if summary["passed"] else 1


def verify(suite, workers=1):
    """Run a named acceptance suite and print the comparison table."""
    from .acceptance import SUITES, run_suite

    if suite not in SUITES:
        known = ", ".join(sorted(SUITES))
        print(f"unknown suite '{suite}' (known: {known})", file=sys.stderr)
        return 2
    results = run_suite(suite, workers=workers, report=print)
    return 0 if all(r.passed for r in results) else 1


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="fractdim",
        description="batch experiments for self-similar measure geometry",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="execute one experiment config")
    p_run.add_argument("--config", required=True, help="path to a JSON config")
    p_run.add_argument("--out", required=True, help="output directory for artifacts")
    p_run.add_argument("--workers", type=int, default=1)
    p_run.add_argument(
        "--seed-override", type=int, default=None,
        help="replace the config seed (recorded in the manifest)",
    )
    p_verify = sub.add_parser("verify", help="run a named acceptance suite")
    p_verify.add_argument("suite")
    p_verify.add_argument("--workers", type=int, default=1)
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return run(
                args.config, args.out,
                workers=args.workers, seed_override=args.seed_override,
            )
        return verify(args.suite, workers=args.workers)
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return 2
    except FractdimError as exc:
        print(f"precondition violated: {exc}", file=sys.stderr)
        return 3


def console():
    sys.exit(main())


if __name__ == "__main__":
    console()
