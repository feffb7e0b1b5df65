"""Config-driven experiment runner.

Every command reads a YAML config, writes ``<command>.jsonl`` (one JSON
record per line) and one or more headered CSV files into ``--out``, and
exits 0 on success, 1 on error and 2 when ``limit-check`` rejects its
hypothesis.  ``--seed``, ``--threads``, ``--out`` and ``--config`` can also
come from ``COOLWALK_SEED`` etc.; flags win over the environment, which
wins over the config file.
"""

from __future__ import annotations

import json
import math
import os
import sys
from pathlib import Path

import click
import jsonschema
import numpy as np
import yaml

EXIT_OK, EXIT_ERROR, EXIT_REJECT = 0, 1, 2
TAG_REFERENCE = 4

_NUM = {"type": "number"}
_POS_INT = {"type": "integer", "minimum": 1}

LAMBDA_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "family": {"enum": ["exponential", "polynomial", "superexp", "interweaved", "geometric"]},
        "params": {"type": "object"},
        "weights": {"type": "array", "items": {"type": "number", "minimum": 0}},
        "tail_norm2": {"type": "number", "minimum": 0},
    },
}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "coolwalk experiment",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "replicas": _POS_INT,
        "threads": _POS_INT,
        "out": {"type": "string"},
        "env": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "preset": {"enum": ["twopoint-k2", "beta-k05"]},
                "family": {"enum": ["twopoint", "beta", "discrete"]},
                "params": {"type": "object"},
                "target_kappa": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "cooling": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "family": {
                    "enum": ["constant", "polynomial", "exponential", "superexp", "interweaved", "custom", "designed"]
                },
                "params": {"type": "object"},
                "file": {"type": "string"},
            },
        },
        "horizon": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1},
                "tau": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1},
                "oscillation": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["j", "t"],
                    "properties": {"j": _POS_INT, "t": {"type": "array", "items": {"type": "number", "minimum": 0}}},
                },
            },
            "minProperties": 1,
            "maxProperties": 1,
        },
        "options": {"type": "object"},
    },
}

OPTION_SCHEMAS = {
    "calibrate": {},
    "rwre-sim": {
        "histogram": {"type": "boolean"},
        "tail_x": {"type": "array", "items": _NUM},
        "tail_window": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2},
    },
    "rwre-oracle": {"n": _POS_INT, "tv_max": _NUM},
    "cooling-build": {
        "kmax": _POS_INT,
        "lambda_star": LAMBDA_SCHEMA,
        "kappa": _NUM,
        "rounds": _POS_INT,
        "case": {"enum": ["auto", "I", "II"]},
        "map_file": {"type": "string"},
    },
    "rwcre-sim": {"samples": {"type": "boolean"}},
    "limit-check": {
        "target": {"enum": ["normal", "mixture"]},
        "lambda_star": LAMBDA_SCHEMA,
        "kappa": _NUM,
        "scaling": {"enum": ["stdev", "custom"]},
        "beta": _NUM,
        "alpha": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "reference_factor": _POS_INT,
        "quantiles": _POS_INT,
    },
    "k2-constants": {
        "grid": {"type": "array", "items": {"type": "integer", "minimum": 2}, "minItems": 3},
        "method": {"enum": ["regression", "plateau"]},
        "groups": {"type": "integer", "minimum": 2},
    },
    "beta-seq": {
        "mode": {"enum": ["mc", "approx"]},
        "constants": {"type": "string"},
        "approx_min_T": _POS_INT,
    },
    "emit-plot-data": {
        "kind": {"enum": ["cooling", "lambda", "ml-laplace", "k2-scalings"]},
        "kmax": _POS_INT,
        "kappa": _NUM,
        "b": _NUM,
        "lambda_max": _NUM,
        "points": _POS_INT,
        "lambda_star": LAMBDA_SCHEMA,
        "constants": {"type": "string"},
        "var_z1": _NUM,
    },
}


class ConfigProblem(Exception):
    pass


# ---------------------------------------------------------------- config loading


def _node_at(node, path):
    """YAML node reached by following ``path`` (keys and list indices)."""
    for key in path:
        if isinstance(node, yaml.MappingNode):
            nxt = None
            for k, v in node.value:
                if k.value == str(key):
                    nxt = v
                    break
            if nxt is None:
                return node
            node = nxt
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            node = node.value[key]
        else:
            return node
    return node


def _offending_key_line(node, error):
    # for "additional properties" errors, point at the unknown key itself
    if error.validator == "additionalProperties" and isinstance(node, yaml.MappingNode):
        allowed = set(error.schema.get("properties", {}))
        for k, _ in node.value:
            if k.value not in allowed:
                return k.start_mark.line + 1
    return node.start_mark.line + 1


def validate_config(data, schema, text: str | None = None, source: str = "<config>", prefix=()):
    """Validate ``data``; errors name the file and line when the YAML text is known."""
    validator = jsonschema.Draft202012Validator(schema)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(map(str, e.absolute_path)))
    if not errors:
        return
    root = yaml.compose(text) if text else None
    lines = []
    for err in errors:
        path = list(prefix) + list(err.absolute_path)
        where = "/".join(map(str, path)) or "<root>"
        if root is not None:
            line = _offending_key_line(_node_at(root, path), err)
            lines.append(f"{source}:{line}: {where}: {err.message}")
        else:
            lines.append(f"{source}: {where}: {err.message}")
    raise ConfigProblem("\n".join(lines))


def load_config(path, command: str) -> dict:
    if path is None:
        return {}
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = f":{mark.line + 1}" if mark is not None else ""
        raise ConfigProblem(f"{path}{line}: invalid YAML: {getattr(exc, 'problem', exc)}") from None
    data = {} if data is None else data
    validate_config(data, CONFIG_SCHEMA, text, str(path))
    opts_schema = {"type": "object", "additionalProperties": False, "properties": OPTION_SCHEMAS[command]}
    validate_config(data.get("options", {}), opts_schema, text, str(path), prefix=("options",))
    return data


# ---------------------------------------------------------------- config -> objects


def build_env(spec: dict | None):
    from .envdist import BetaLaw, Discrete, EnvDist, TwoPoint, calibrate_to_kappa, preset

    if not spec:
        raise ConfigProblem("config needs an 'env' section")
    if "preset" in spec:
        return preset(spec["preset"])
    fam = spec.get("family")
    p = dict(spec.get("params", {}))
    target = spec.get("target_kappa")
    try:
        if fam == "twopoint":
            law = TwoPoint(float(p["omega_hi"]), float(p["omega_lo"]), p.get("p"))
        elif fam == "beta":
            law = BetaLaw(p.get("a"), float(p["b"]))
        elif fam == "discrete":
            law = Discrete(tuple((float(w), float(q)) for w, q in p["atoms"]))
        else:
            raise ConfigProblem("env needs 'preset' or 'family'")
    except KeyError as exc:
        raise ConfigProblem(f"env.params is missing {exc.args[0]!r}") from None
    if target is not None:
        return calibrate_to_kappa(law, float(target))
    return EnvDist(law)


def build_cooling(spec: dict | None):
    from .cooling import Custom, build_map

    if not spec:
        raise ConfigProblem("config needs a 'cooling' section")
    if "file" in spec:
        return Custom.from_file(spec["file"])
    fam = spec.get("family")
    if fam is None:
        raise ConfigProblem("cooling needs 'family' or 'file'")
    if fam == "designed":
        p = dict(spec.get("params", {}))
        cmap, _ = _designed(p)
        return cmap
    return build_map(fam, **spec.get("params", {}))


def build_lambda(spec: dict | None, kappa: float | None):
    from .cooling import LambdaVector
    from .limits import lambda_star_closed_form

    if not spec:
        raise ConfigProblem("a 'lambda_star' section is required")
    if "weights" in spec:
        return LambdaVector(spec["weights"], spec.get("tail_norm2", 0.0))
    fam = spec.get("family")
    params = spec.get("params", {})
    if fam == "geometric":
        # lambda(k) = scale * ratio**k
        s, r = float(params["scale"]), float(params["ratio"])
        if not 0 <= r < 1:
            raise ConfigProblem("geometric ratio must lie in [0, 1)")
        return LambdaVector.from_function(lambda k: s * r**k, norm2=s * s * r * r / (1 - r * r))
    if kappa is None:
        raise ConfigProblem(f"lambda_star family {fam!r} needs options.kappa")
    return lambda_star_closed_form(fam, params, kappa)


def _designed(p: dict):
    from .cooling import construct_mixture_map

    kappa = p.get("kappa")
    if kappa is None:
        raise ConfigProblem("the mixture designer needs 'kappa'")
    lam = build_lambda(p.get("lambda_star"), kappa)
    return construct_mixture_map(lam, float(kappa), rounds=int(p.get("rounds", 8)), case=p.get("case", "auto"))


def horizons(cfg: dict, cmap=None) -> list[int]:
    h = cfg.get("horizon")
    if not h:
        raise ConfigProblem("config needs a 'horizon' section")
    if "n" in h:
        return [int(n) for n in h["n"]]
    if cmap is None:
        raise ConfigProblem("horizons given through the cooling map need a 'cooling' section")
    if "tau" in h:
        return [cmap.tau(int(k)) for k in h["tau"]]
    osc = h["oscillation"]
    if not hasattr(cmap, "oscillation_index"):
        raise ConfigProblem("oscillation horizons need an interweaved cooling map")
    return [cmap.tau(cmap.oscillation_index(int(osc["j"]), float(t))) for t in osc["t"]]


# ---------------------------------------------------------------- commands


class Run:
    """Resolved settings shared by every command."""

    def __init__(self, command, cfg, seed, out):
        self.command = command
        self.cfg = cfg
        self.opts = cfg.get("options", {})
        self.seed = seed
        self.out = Path(out)
        self.stem = command.replace("-", "_")

    @property
    def replicas(self) -> int:
        r = self.cfg.get("replicas")
        if r is None:
            raise ConfigProblem("config needs 'replicas'")
        return int(r)

    def jsonl(self, records, suffix=""):
        from .io import write_jsonl

        return write_jsonl(self.out / f"{self.stem}{suffix}.jsonl", records)

    def csv(self, header, rows, suffix=""):
        from .io import write_csv

        return write_csv(self.out / f"{self.stem}{suffix}.csv", header, rows)


def _moment_or_inf(dist, s):
    from .errors import NonFiniteMomentError

    try:
        return dist.moment(s)
    except NonFiniteMomentError:
        return math.inf


def cmd_calibrate(run: Run):
    """Environment law summary: kappa, speed and moments of rho."""
    dist = build_env(run.cfg.get("env"))
    rec = dict(dist.describe(), kappa=dist.kappa, speed=dist.speed, log_rho_mean=dist.log_rho_mean)
    rec["mean_omega"] = dist.mean_omega
    run.jsonl([rec])
    run.csv(["s", "rho_moment"], [(s, _moment_or_inf(dist, s)) for s in (0.25, 0.5, 1.0, 1.5, 2.0) if s <= 2 * dist.kappa])
    return EXIT_OK


def cmd_rwre_sim(run: Run):
    """Annealed RWRE endpoint moments (and optional histograms and tails)."""
    from .walk import endpoint_samples, moments_from_samples, tail_probabilities

    dist = build_env(run.cfg.get("env"))
    ns = horizons(run.cfg)
    recs = []
    for n in ns:
        z = endpoint_samples(dist, n, run.replicas, run.seed)
        recs.append(moments_from_samples(z, n=n, seed=run.seed).record())
        if run.opts.get("histogram"):
            vals, counts = np.unique(z, return_counts=True)
            run.csv(["z", "count"], zip(vals, counts), suffix=f"_hist_{n}")
        xs = run.opts.get("tail_x")
        if xs:
            from .walk import left_tail_curve

            window = run.opts.get("tail_window")
            pts = left_tail_curve(dist, n, xs, run.replicas, run.seed, window=window)
            run.csv(["x", "p", "stderr"], pts, suffix=f"_tail_{n}")
    run.jsonl(recs)
    run.csv(
        ["n", "mean", "variance", "stderr_mean", "stderr_var"],
        [(r["n"], r["mean"], r["variance"], r["stderr_mean"], r["stderr_var"]) for r in recs],
    )
    return EXIT_OK


def cmd_rwre_oracle(run: Run):
    """Monte Carlo endpoint law against exact path enumeration."""
    from .walk import endpoint_samples, exact_annealed_pmf, tv_distance

    dist = build_env(run.cfg.get("env"))
    n = run.opts.get("n")
    if n is None:
        ns = horizons(run.cfg)
        if len(ns) != 1:
            raise ConfigProblem("rwre-oracle takes a single horizon")
        n = ns[0]
    pmf = exact_annealed_pmf(dist, n)
    z = endpoint_samples(dist, n, run.replicas, run.seed)
    tv = tv_distance(z, pmf)
    vals, counts = np.unique(z, return_counts=True)
    emp = dict(zip(vals.tolist(), counts.tolist()))
    tv_max = float(run.opts.get("tv_max", 0.01))
    run.jsonl([{"n": n, "replicas": run.replicas, "seed": run.seed, "tv": tv, "tv_max": tv_max, "pass": tv < tv_max}])
    run.csv(
        ["z", "exact", "empirical"],
        [(k, pmf.get(k, 0.0), emp.get(k, 0) / run.replicas) for k in sorted(set(pmf) | set(emp))],
    )
    return EXIT_OK


def cmd_cooling_build(run: Run):
    """Write a cooling map (or a designed mixture map) to disk."""
    from .cooling import export_map

    spec = run.cfg.get("cooling") or {}
    if spec.get("family") == "designed":
        cmap, nj = _designed(dict(spec.get("params", {})))
        kmax = run.opts.get("kmax", cmap.max_index)
    else:
        cmap = build_cooling(spec)
        nj = None
        kmax = run.opts.get("kmax", cmap.max_index)
        if kmax is None:
            raise ConfigProblem("options.kmax is required for an unbounded map")
    kmax = int(kmax)
    path = export_map(cmap, run.out / run.opts.get("map_file", "cooling_map.txt"), kmax)
    rec = dict(cmap.describe(), blocks=kmax, tau_kmax=cmap.tau(kmax), map_file=path.name)
    if nj is not None:
        rec["n_j"] = list(nj)
    run.jsonl([rec])
    incs = cmap.increments(kmax)
    taus = np.cumsum(incs)
    run.csv(["k", "T", "tau"], zip(range(1, kmax + 1), incs, taus))
    return EXIT_OK


def cmd_rwcre_sim(run: Run):
    """Moments of the cooled walk X_n."""
    from .rwcre import mc_stats_x, x_samples

    dist = build_env(run.cfg.get("env"))
    cmap = build_cooling(run.cfg.get("cooling"))
    ns = horizons(run.cfg, cmap)
    recs = []
    for n in ns:
        st = mc_stats_x(dist, cmap, n, run.replicas, run.seed)
        recs.append(dict(st.record(), blocks=cmap.ell(n) if n else 0))
        if run.opts.get("samples"):
            x = x_samples(dist, cmap, n, run.replicas, run.seed)
            run.csv(["replica", "x"], enumerate(x), suffix=f"_samples_{n}")
    run.jsonl(recs)
    run.csv(
        ["n", "mean", "variance", "var_blocks", "stderr_var", "var_blocks_stderr"],
        [(r["n"], r["mean"], r["variance"], r["var_blocks"], r["stderr_var"], r["var_blocks_stderr"]) for r in recs],
    )
    return EXIT_OK


def cmd_limit_check(run: Run):
    """Two-sample KS of normalised X_n against its limit law; exit 2 on rejection."""
    from .cooling import LambdaVector
    from .limits import sample_mixture
    from .rng import derive_stream
    from .rwcre import normalized_samples
    from .stats import ks_two_sample

    dist = build_env(run.cfg.get("env"))
    cmap = build_cooling(run.cfg.get("cooling"))
    ns = horizons(run.cfg, cmap)
    if len(ns) != 1:
        raise ConfigProblem("limit-check takes a single horizon")
    n = ns[0]
    o = run.opts
    target = o.get("target", "normal")
    kappa = o.get("kappa")
    lam = LambdaVector([]) if target == "normal" else build_lambda(o.get("lambda_star"), kappa)
    if target == "mixture" and kappa is None:
        raise ConfigProblem("mixture targets need options.kappa")
    x = normalized_samples(dist, cmap, n, run.replicas, run.seed, scaling=o.get("scaling", "stdev"), beta=o.get("beta"))
    m = int(o.get("reference_factor", 10)) * run.replicas
    ref = sample_mixture(lam, kappa if kappa is not None else 0.5, 1.0, derive_stream(run.seed, 0, TAG_REFERENCE), m)
    ks = ks_two_sample(x, ref)
    alpha = float(o.get("alpha", 0.01))
    rejected = ks.p_value < alpha
    run.jsonl([{
        "n": n, "replicas": run.replicas, "reference": m, "seed": run.seed, "target": target,
        "statistic": ks.statistic, "p_value": ks.p_value, "alpha": alpha, "rejected": rejected,
    }])
    qs = (np.arange(int(o.get("quantiles", 99))) + 1) / (int(o.get("quantiles", 99)) + 1)
    run.csv(["q", "sample", "reference"], zip(qs, np.quantile(x, qs), np.quantile(ref, qs)))
    return EXIT_REJECT if rejected else EXIT_OK


def cmd_k2_constants(run: Run):
    """Estimate b^2, K0 v and beta for a kappa = 2 environment."""
    from .limits import estimate_k2_constants
    from .walk import endpoint_samples, tail_probabilities

    dist = build_env(run.cfg.get("env"))
    grid = run.opts.get("grid") or horizons(run.cfg)
    kw = {"groups": int(run.opts["groups"])} if "groups" in run.opts else {}
    c = estimate_k2_constants(dist, grid, run.replicas, run.seed, method=run.opts.get("method", "regression"), **kw)
    run.jsonl([c.to_dict()])
    rows = []
    for n in c.grid:
        z = endpoint_samples(dist, n, run.replicas, run.seed).astype(np.float64)
        var = float(np.var(z, ddof=1))
        rows.append((n, var / n, var / (n * math.log(n))))
    run.csv(["n", "var_over_n", "var_over_nlogn"], rows)
    n = c.grid[-1]
    z = endpoint_samples(dist, n, run.replicas, run.seed)
    d = z - z.mean()
    q1, q3 = np.percentile(d, [25, 75])
    lo, hi = 4.0 * (q3 - q1) / 1.349, 0.5 * n * c.v
    if lo < hi:
        pts = tail_probabilities(z, n, c.v, np.geomspace(lo, hi, 16))
        run.csv(["x", "p", "stderr", "k0"], [(x, p, s, p * x * x / (n * c.v - x)) for x, p, s in pts], suffix="_tail")
    return EXIT_OK


def _load_constants(path):
    from .errors import MissingConstantsError
    from .limits import K2Constants

    if not path:
        raise MissingConstantsError("options.constants must point at a k2-constants result")
    text = Path(path).read_text(encoding="utf-8")
    first = text.strip().splitlines()[0] if text.strip() else "{}"
    return K2Constants.from_dict(json.loads(first))


def cmd_beta_seq(run: Run):
    """The scaling sequence beta_n along the configured horizons."""
    from .limits import beta_n_sequence

    dist = build_env(run.cfg.get("env"))
    cmap = build_cooling(run.cfg.get("cooling"))
    ns = horizons(run.cfg, cmap)
    c = _load_constants(run.opts.get("constants"))
    kw = {"approx_min_T": int(run.opts["approx_min_T"])} if "approx_min_T" in run.opts else {}
    seq = beta_n_sequence(dist, cmap, ns, c, mode=run.opts.get("mode", "mc"), replicas=run.replicas, seed=run.seed, **kw)
    run.jsonl([b.record() for b in seq])
    run.csv(["n", "beta_n", "mode"], [(b.n, b.beta_n, b.mode) for b in seq])
    return EXIT_OK


def cmd_emit_plot_data(run: Run):
    """Plot-ready CSV curves."""
    o = run.opts
    kind = o.get("kind")
    if kind is None:
        raise ConfigProblem("emit-plot-data needs options.kind")
    if kind == "cooling":
        cmap = build_cooling(run.cfg.get("cooling"))
        kmax = int(o.get("kmax", cmap.max_index or 0))
        if kmax < 1:
            raise ConfigProblem("options.kmax is required")
        incs = cmap.increments(kmax)
        run.csv(["k", "T", "tau"], zip(range(1, kmax + 1), incs, np.cumsum(incs)))
    elif kind == "lambda":
        from .cooling import tilde_lambda

        kappa = o.get("kappa")
        if kappa is None:
            raise ConfigProblem("options.kappa is required")
        cmap = build_cooling(run.cfg.get("cooling"))
        ns = horizons(run.cfg, cmap)
        target = build_lambda(o["lambda_star"], kappa).weights if "lambda_star" in o else None
        rows = []
        for n in ns:
            lt = tilde_lambda(cmap, n, kappa).sorted
            for k in range(len(lt) if target is None else max(len(lt), len(target))):
                star = "" if target is None else (target[k] if k < len(target) else 0.0)
                rows.append((n, k + 1, lt[k] if k < len(lt) else 0.0, star))
        run.csv(["n", "k", "lambda_tilde", "lambda_star"], rows)
    elif kind == "ml-laplace":
        from .errors import SeriesInstabilityError
        from .limits import MittagLeffler, ml_laplace

        ml = MittagLeffler(float(o.get("kappa", 0.5)), float(o.get("b", 1.0)))
        rows = []
        for lam in np.linspace(0.0, float(o.get("lambda_max", 2.0)), int(o.get("points", 41))):
            try:
                rows.append((lam, ml_laplace(ml, lam)))
            except SeriesInstabilityError:
                break
        run.csv(["lambda", "laplace"], rows)
    elif kind == "k2-scalings":
        from .limits import predicted_k2_scalings

        c = _load_constants(o.get("constants"))
        v1 = o.get("var_z1")
        if v1 is None:
            v1 = 4 * build_env(run.cfg.get("env")).mean_omega * (1 - build_env(run.cfg.get("env")).mean_omega)
        pts = int(o.get("points", 21))
        rows = [("oscillation", t, *predicted_k2_scalings("oscillation", c, t=t, var_z1=v1))
                for t in np.linspace(0, 10, pts)]
        rows += [("poly", a, *predicted_k2_scalings("poly", c, alpha=a)) for a in np.geomspace(0.25, 64, pts)]
        run.csv(["example", "parameter", "scaling", "stderr"], rows)
    run.jsonl([{"kind": kind, "files": sorted(p.name for p in run.out.glob(f"{run.stem}*.csv"))}])
    return EXIT_OK


COMMANDS = {
    "calibrate": cmd_calibrate,
    "rwre-sim": cmd_rwre_sim,
    "rwre-oracle": cmd_rwre_oracle,
    "cooling-build": cmd_cooling_build,
    "rwcre-sim": cmd_rwcre_sim,
    "limit-check": cmd_limit_check,
    "k2-constants": cmd_k2_constants,
    "beta-seq": cmd_beta_seq,
    "emit-plot-data": cmd_emit_plot_data,
}


def _set_threads(n):
    if n is None:
        return
    # NUMBA_NUM_THREADS caps the pool and is read once at import
    if "numba" not in sys.modules:
        cap = int(os.environ.get("NUMBA_NUM_THREADS", "0") or 0)
        os.environ["NUMBA_NUM_THREADS"] = str(max(cap, n))
    import numba

    if n > numba.config.NUMBA_NUM_THREADS:
        raise ConfigProblem(
            f"--threads {n} exceeds the numba pool of {numba.config.NUMBA_NUM_THREADS}; "
            "raise NUMBA_NUM_THREADS"
        )
    numba.set_num_threads(n)


def run(command: str, config=None, seed=None, threads=None, out=None) -> int:
    """Run ``command``; returns the exit code.  ``config`` is a path or a dict."""
    if isinstance(config, dict):
        cfg = dict(config)
        validate_config(cfg, CONFIG_SCHEMA)
        validate_config(cfg.get("options", {}),
                        {"type": "object", "additionalProperties": False, "properties": OPTION_SCHEMAS[command]},
                        prefix=("options",))
    else:
        cfg = load_config(config, command)
    seed = cfg.get("seed") if seed is None else seed
    if seed is None:
        raise ConfigProblem("a seed is required (config 'seed' or --seed)")
    threads = cfg.get("threads") if threads is None else threads
    out = cfg.get("out", ".") if out is None else out
    _set_threads(threads)
    Path(out).mkdir(parents=True, exist_ok=True)
    return COMMANDS[command](Run(command, cfg, int(seed), out))


@click.group(context_settings={"auto_envvar_prefix": "COOLWALK", "help_option_names": ["-h", "--help"]})
@click.option("--config", "config", type=click.Path(dir_okay=False), default=None, help="YAML experiment config.")
@click.option("--seed", type=click.IntRange(0, 2**64 - 1), default=None, help="Master seed (overrides config).")
@click.option("--threads", type=click.IntRange(1), default=None, help="Worker threads.")
@click.option("--out", type=click.Path(file_okay=False), default=None, help="Output directory.")
@click.pass_context
def main(ctx, config, seed, threads, out):
    """Random walks in cooling random environments."""
    ctx.obj = {"config": config, "seed": seed, "threads": threads, "out": out}


def _command(name):
    @click.pass_context
    def _run(ctx):
        o = ctx.obj
        try:
            code = run(name, o["config"], o["seed"], o["threads"], o["out"])
        except ConfigProblem as exc:
            click.echo(f"config error: {exc}", err=True)
            ctx.exit(EXIT_ERROR)
        except Exception as exc:  # surfaced with context, never a traceback
            click.echo(f"error in {name}: {type(exc).__name__}: {exc}", err=True)
            ctx.exit(EXIT_ERROR)
        ctx.exit(code)

    _run.__doc__ = COMMANDS[name].__doc__ or f"Run {name}."
    return main.command(name)(_run)


for _name in COMMANDS:
    _command(_name)


@main.command("schema")
def schema():
    """Print the config JSON schema."""
    s = dict(CONFIG_SCHEMA)
    s["properties"] = dict(s["properties"])
    s["properties"]["options"] = {"description": "per-command options", "oneOf": [
        {"title": k, "type": "object", "additionalProperties": False, "properties": v}
        for k, v in OPTION_SCHEMAS.items()
    ]}
    click.echo(json.dumps(s, indent=2))


if __name__ == "__main__":
    main()
