"""Command-line front end: ``khop {eta,region,wz,simulate,sweep,diagnose}``.

Every command is driven by a JSON config (flags are folded into one). CSV
outputs start with ``#`` header lines recording the tool version, the
SHA-256 of the normalized config, the seed and the normalized config itself;
floats are written with 12 significant digits.
"""
from __future__ import annotations

import argparse
import copy
import hashlib
import io
import json
import math
import os
import sys
import traceback
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .exceptions import ConfigError, EnumerationCapError
from .probcore import DEFAULT_ENUMERATION_CAP, JointPmf, default_mu
from .sources import dsbs, dsbs_chain

COMMANDS = ("eta", "region", "wz", "simulate", "sweep", "diagnose")
REQUIRED = object()

_COMMON = {"command": REQUIRED, "pmf": REQUIRED, "seed": 0, "output": "."}
_SIM = {
    "rates": REQUIRED,
    "blocklengths": REQUIRED,
    "trials": 10_000,
    "mu": None,
    "decision_scale": 1.0,
    "backend": "auto",
    "channel_margin": 0.02,
    "aux_card": None,
}
SCHEMA = {
    "eta": {"rates": REQUIRED, "aux_card": None, "n_restarts": 16, "hops": None},
    "region": {"rates": REQUIRED, "aux_card": None, "n_restarts": 16},
    "wz": {"D": REQUIRED, "distortion": "hamming", "s_card": None, "n_restarts": 2},
    "simulate": dict(_SIM),
    "sweep": dict(_SIM, epsilons=REQUIRED, burn_in=1, ci_cap=3.0),
    "diagnose": {
        "rates": REQUIRED,
        "blocklengths": REQUIRED,
        "mu": None,
        "cap": DEFAULT_ENUMERATION_CAP,
        "channel_margin": 0.02,
        "aux_card": None,
        "centers": None,
        "fixture": False,
    },
}


@dataclass
class RunConfig:
    command: str
    params: dict
    base_dir: Path = field(default=Path("."), compare=False)

    @property
    def seed(self) -> int:
        return self.params["seed"]

    def pmf(self) -> JointPmf:
        return build_pmf(self.params["pmf"], self.base_dir)


# --- validation ---------------------------------------------------------------

def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _pmf_errors(spec, base_dir):
    if isinstance(spec, str):
        path = (base_dir / spec) if not Path(spec).is_absolute() else Path(spec)
        if not path.exists():
            return [f"pmf: file {spec!r} does not exist"]
        try:
            spec = json.loads(path.read_text())
        except json.JSONDecodeError as e:
            return [f"pmf: {spec!r} is not valid JSON ({e.msg})"]
    if not isinstance(spec, dict):
        return ["pmf: must be an object or a path to a JSON file"]
    if "dsbs_chain" in spec or "dsbs" in spec:
        key = "dsbs_chain" if "dsbs_chain" in spec else "dsbs"
        extra = set(spec) - {key, "names"}
        errs = [f"pmf: unknown key {k!r}" for k in sorted(extra)]
        v = spec[key]
        vals = v if key == "dsbs_chain" else [v]
        if not isinstance(vals, list) or not vals or not all(_is_num(x) and 0 <= x <= 1 for x in vals):
            errs.append(f"pmf.{key}: crossover probabilities must lie in [0, 1]")
        return errs
    errs = [f"pmf: unknown key {k!r}" for k in sorted(set(spec) - {"alphabets", "probs", "names"})]
    al, pr = spec.get("alphabets"), spec.get("probs")
    if not isinstance(al, list) or not al or not all(isinstance(a, list) and a for a in al):
        errs.append("pmf.alphabets: need a nonempty list of nonempty label lists")
        return errs
    size = math.prod(len(a) for a in al)
    if not isinstance(pr, list) or len(pr) != size or not all(_is_num(x) for x in pr):
        errs.append(f"pmf.probs: need {size} numbers (row-major)")
        return errs
    if any(x < 0 for x in pr) or abs(sum(pr) - 1) > 1e-9:
        errs.append("pmf.probs: must be nonnegative and sum to 1")
    if "names" in spec and (not isinstance(spec["names"], list) or len(spec["names"]) != len(al)):
        errs.append("pmf.names: need one name per axis")
    return errs


def build_pmf(spec, base_dir=Path(".")) -> JointPmf:
    if isinstance(spec, str):
        path = Path(spec) if Path(spec).is_absolute() else Path(base_dir) / spec
        spec = json.loads(path.read_text())
    if "dsbs_chain" in spec:
        return dsbs_chain(spec["dsbs_chain"], spec.get("names"))
    if "dsbs" in spec:
        return dsbs(spec["dsbs"], tuple(spec.get("names", ("X", "Y"))))
    return JointPmf.from_probs(spec["alphabets"], spec["probs"], spec.get("names"))


def _check_value(key, v):
    """Range check of one parameter; returns an error string or None."""
    rate_list = ("rates",)
    if key in rate_list:
        if not isinstance(v, list) or not v or not all(_is_num(x) and x >= 0 for x in v):
            return f"{key}: need a nonempty list of nonnegative rates"
    elif key == "blocklengths":
        if not isinstance(v, list) or not v or not all(_is_int(x) and x >= 1 for x in v) \
                or any(a >= b for a, b in zip(v, v[1:])):
            return "blocklengths: need a strictly increasing list of positive integers"
    elif key == "epsilons":
        if not isinstance(v, list) or not v or not all(_is_num(x) and 0 <= x < 1 for x in v):
            return "epsilons: need a nonempty list of values in [0, 1)"
    elif key == "D":
        vals = v if isinstance(v, list) else [v]
        if not vals or not all(_is_num(x) and x >= 0 for x in vals):
            return "D: need a nonnegative number or a list of them"
    elif key in ("seed",):
        if not _is_int(v) or v < 0:
            return "seed: must be a nonnegative integer"
    elif key in ("trials", "n_restarts", "cap", "burn_in"):
        lo = 0 if key == "burn_in" else 1
        if not _is_int(v) or v < lo:
            return f"{key}: must be an integer >= {lo}"
    elif key in ("aux_card", "s_card"):
        if v is not None and (not _is_int(v) or v < 1):
            return f"{key}: must be null or a positive integer"
    elif key == "mu":
        if v is not None and (not _is_num(v) or v <= 0):
            return "mu: must be null (n^(-1/3)) or a positive number"
    elif key == "decision_scale":
        vals = v if isinstance(v, list) else [v]
        if not all(_is_num(x) and x > 0 for x in vals):
            return "decision_scale: must be positive"
    elif key == "backend":
        if v not in ("auto", "explicit", "ensemble"):
            return "backend: must be one of auto, explicit, ensemble"
    elif key in ("channel_margin", "ci_cap"):
        if not _is_num(v) or v < 0:
            return f"{key}: must be a nonnegative number"
    elif key in ("hops", "centers"):
        if v is not None and (not isinstance(v, list) or not all(_is_int(x) and x >= 1 for x in v)):
            return f"{key}: must be null or a list of positive integers"
    elif key == "fixture":
        if not isinstance(v, bool):
            return "fixture: must be true or false"
    elif key == "output":
        if not isinstance(v, str):
            return "output: must be a directory path"
    elif key == "distortion":
        if v != "hamming":
            if not isinstance(v, list) or not v or not all(
                    isinstance(r, list) and len(r) == len(v[0]) and all(_is_num(x) and x >= 0 for x in r) for r in v):
                return "distortion: must be \"hamming\" or a nonnegative matrix"
    return None


def parse_config(text, base_dir=".") -> RunConfig:
    """Validate a JSON config, filling documented defaults.

    Raises :class:`ConfigError` listing every problem found.
    """
    base_dir = Path(base_dir)
    try:
        raw = json.loads(text) if isinstance(text, str) else copy.deepcopy(text)
    except json.JSONDecodeError as e:
        raise ConfigError([f"config is not valid JSON: {e.msg} (line {e.lineno})"]) from None
    if not isinstance(raw, dict):
        raise ConfigError(["config must be a JSON object"])
    cmd = raw.get("command")
    if cmd not in COMMANDS:
        raise ConfigError([f"command: must be one of {', '.join(COMMANDS)}, got {cmd!r}"])
    schema = dict(_COMMON, **SCHEMA[cmd])
    errors = [f"unknown key {k!r} for command {cmd}" for k in sorted(set(raw) - set(schema))]
    params = {}
    for key, default in schema.items():
        if key in raw:
            params[key] = raw[key]
        elif default is REQUIRED:
            errors.append(f"{key}: required for command {cmd}")
        else:
            params[key] = copy.deepcopy(default)
    if "pmf" in params:
        errors.extend(_pmf_errors(params["pmf"], base_dir))
    for key, v in params.items():
        if key in ("command", "pmf"):
            continue
        err = _check_value(key, v)
        if err:
            errors.append(err)
    if not errors and cmd != "wz" and "rates" in params and cmd != "eta":
        p = build_pmf(params["pmf"], base_dir)
        if len(params["rates"]) != p.ndim - 1:
            errors.append(f"rates: pmf with {p.ndim} axes needs {p.ndim - 1} rates")
    if not errors and cmd == "wz":
        p = build_pmf(params["pmf"], base_dir)
        if p.ndim != 2:
            errors.append("pmf: wz needs a two-axis pmf (source, side information)")
    if errors:
        raise ConfigError(errors)
    params["command"] = cmd
    return RunConfig(cmd, params, base_dir)


def serialize(config: RunConfig) -> str:
    """Canonical JSON text of a validated config."""
    return json.dumps(config.params, sort_keys=True, separators=(",", ":"))


def normalize(text, base_dir=".") -> str:
    """Canonical form of a config text: defaults filled, keys sorted, compact."""
    return serialize(parse_config(text, base_dir))


def echo(config: RunConfig) -> str:
    """Location-independent canonical config: output directory dropped, pmf files inlined."""
    params = {k: v for k, v in config.params.items() if k != "output"}
    if isinstance(params["pmf"], str):
        path = Path(params["pmf"])
        params["pmf"] = json.loads((path if path.is_absolute() else config.base_dir / path).read_text())
    return json.dumps(params, sort_keys=True, separators=(",", ":"))


def config_hash(config: RunConfig) -> str:
    """SHA-256 of :func:`echo`; identical experiments hash identically wherever they run."""
    return hashlib.sha256(echo(config).encode()).hexdigest()


# --- output --------------------------------------------------------------------

def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return "%.12g" % (float(x) + 0.0)  # no negative zero


def csv_text(config: RunConfig, columns, rows) -> str:
    out = io.StringIO()
    out.write(f"# khop {__version__}\n")
    out.write(f"# config_sha256={config_hash(config)}\n")
    out.write(f"# seed={config.seed}\n")
    out.write(f"# config={echo(config)}\n")
    out.write(",".join(columns) + "\n")
    for r in rows:
        out.write(",".join(fmt(v) for v in r) + "\n")
    return out.getvalue()


def _write(config, name, text) -> Path:
    d = Path(config.params["output"])
    if not d.is_absolute():
        d = config.base_dir / d
    d.mkdir(parents=True, exist_ok=True)
    path = d / name
    with open(path, "w", newline="\n") as f:
        f.write(text)
    return path


# --- commands --------------------------------------------------------------------

def _channels(config, spec):
    from .exponents.eta import eta

    m = config.params["channel_margin"]
    return [eta(spec.pair(l), max(R - m, 0.0), config.params["aux_card"], random_state=config.seed).channel
            for l, R in enumerate(spec.rates, start=1)]


def _network(config):
    from .schemes import HopNetworkSpec

    return HopNetworkSpec(config.pmf(), tuple(config.params["rates"]))


def cmd_eta(config):
    from .exponents.eta import eta_curve
    from .exponents.region import hop_pairs

    p = config.pmf()
    pairs = [p] if p.ndim == 2 else hop_pairs(p)
    hops = config.params["hops"] or list(range(1, len(pairs) + 1))
    rows = []
    for h in hops:
        if h > len(pairs):
            raise ValueError(f"hop {h} does not exist (pmf has {len(pairs)} hops)")
        c = eta_curve(pairs[h - 1], config.params["rates"], config.params["aux_card"],
                      config.params["n_restarts"], config.seed, hop_index=h)
        rows.extend((r, v, h) for r, v in zip(c.rate_grid, c.values))
    return [_write(config, "eta.csv", csv_text(config, ["R", "eta", "hop"], rows))]


def cmd_region(config):
    from .exponents.region import region_from_pmf

    region, curves = region_from_pmf(config.pmf(), config.params["rates"], config.params["aux_card"],
                                     config.params["n_restarts"], config.seed)
    rows = [(k + 1, region.rates[k], region.etas[k], region.bounds[k]) for k in range(region.K)]
    return [_write(config, "region.csv", csv_text(config, ["k", "rate", "eta", "theta_max"], rows))]


def cmd_wz(config):
    from .exponents.wynerziv import DistortionSpec, wyner_ziv_rmin

    p = config.pmf()
    d = config.params["distortion"]
    table = 1.0 - np.eye(p.shape[0]) if d == "hamming" else np.array(d, dtype=float)
    Ds = config.params["D"] if isinstance(config.params["D"], list) else [config.params["D"]]
    rows = []
    for D in Ds:
        sol = wyner_ziv_rmin(p, DistortionSpec(table, D), config.params["s_card"], config.params["n_restarts"],
                             config.seed)
        rows.append((D, sol.rate, sol.achieved_distortion))
    return [_write(config, "wz.csv", csv_text(config, ["D", "rate", "achieved_distortion"], rows))]


def _experiment(config, epsilons=()):
    from .simulator import ExperimentSpec

    spec = _network(config)
    P = config.params
    scale = P["decision_scale"]
    return ExperimentSpec(spec, _channels(config, spec), tuple(P["blocklengths"]), P["trials"], config.seed,
                          tuple(epsilons), P["mu"], scale, P["backend"], P.get("burn_in", 1), P.get("ci_cap", 3.0))


def cmd_simulate(config):
    from .simulator import run_trials

    exp = _experiment(config)
    rows = []
    for hyp in (0, 1):
        for e in run_trials(exp, hyp):
            mu = default_mu(e.n) if exp.mu is None else exp.mu
            rows.append((e.k, e.n, hyp, e.trials, e.errors, e.alpha_hat, e.beta_hat, e.ci_lo, e.ci_hi, mu))
    rows.sort(key=lambda r: (r[0], r[1], r[2]))
    cols = ["k", "n", "hypothesis", "trials", "errors", "alpha_hat", "beta_hat", "ci_lo", "ci_hi", "mu"]
    return [_write(config, "simulate.csv", csv_text(config, cols, rows))]


def cmd_sweep(config):
    from .simulator import strong_converse_sweep

    exp = _experiment(config, config.params["epsilons"])
    res = strong_converse_sweep(exp, progress=lambda n: print(f"khop: sweep n={n} done", file=sys.stderr))
    rows = [(r.k, r.epsilon, r.exponent, r.slope_ci[0], r.slope_ci[1]) for r in res]
    detail = []
    for r in res:
        for n in sorted(r.alpha_hat):
            detail.append((r.k, r.epsilon, n, r.alpha_hat[n], r.factor[n]))
    return [
        _write(config, "sweep.csv", csv_text(config, ["k", "epsilon", "exponent", "slope_ci_lo", "slope_ci_hi"], rows)),
        _write(config, "sweep_tuning.csv", csv_text(config, ["k", "epsilon", "n", "alpha_hat", "factor"], detail)),
    ]


DIAGNOSE_COLUMNS = [
    "n", "k", "mu", "region_cardinality", "delta", "delta_bound", "alpha", "beta", "kl_identity_error",
    "entropy_gap", "markov_gap", "la_cmi", "la_divergence", "exponent", "info_bound", "lemma_ok",
]


def cmd_diagnose(config):
    from . import diagnostics as dg
    from .schemes import QuantizeForwardTester

    P = config.params
    spec = _network(config)
    p = spec.p_joint
    channels = _channels(config, spec)
    centers = P["centers"] or list(range(1, spec.K + 1))
    for k in centers:
        if k > spec.K:
            raise ValueError(f"center {k} does not exist (K = {spec.K})")
    rows, fixtures = [], []
    for n in P["blocklengths"]:
        size = math.prod(p.shape[: max(centers) + 1]) ** n
        if size > P["cap"]:
            raise EnumerationCapError(size, P["cap"])
        tester = QuantizeForwardTester(n=n, mu=P["mu"], random_state=config.seed, backend="explicit")
        tester.fit(spec, channels)
        protocol = dg.Protocol.from_tester(tester)
        for k in centers:
            region, d, rm = dg.restrict(protocol, p, k, tester.mu_, P["cap"])
            single = dg.single_letterize(rm)
            rep = dg.lemma1_certificate(rm, spec.rates, single)
            gap = dg.entropy_gap(rm)
            kl_err = abs(rm.kl_to_base() + math.log2(d.delta))
            la = dg.chain_gap(rm, k) if k >= 2 else (0.0, dg.chain_gap(rm, 1)[1])
            rows.append((n, k, tester.mu_, region.cardinality, d.delta, d.bound, d.alpha, rep.beta, kl_err,
                         gap.gap, dg.markov_gap(single, 1), la[0], la[1], rep.exponent, rep.info_bound, rep.ok))
            if P["fixture"]:
                fixtures.append(dg.fixture_record(spec, config.seed, n, region, d, single, gap, rep))
    out = [_write(config, "diagnose.csv", csv_text(config, DIAGNOSE_COLUMNS, rows))]
    if P["fixture"]:
        doc = {"khop": __version__, "config_sha256": config_hash(config), "instances": fixtures}
        out.append(_write(config, "fixtures.json", json.dumps(doc, indent=1, sort_keys=True) + "\n"))
    return out


HANDLERS = {
    "eta": cmd_eta,
    "region": cmd_region,
    "wz": cmd_wz,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "diagnose": cmd_diagnose,
}


def run(config: RunConfig) -> list:
    """Execute a validated config; returns the written paths."""
    threads = os.environ.get("KHOP_THREADS")
    limit = int(threads) if threads and threads.isdigit() and int(threads) > 0 else None
    with threadpool_limits(limits=limit):
        return HANDLERS[config.command](config)


# --- argument parsing --------------------------------------------------------------

def _origin(exc) -> str:
    """Dotted khop module where the exception was raised."""
    mod = "khop"
    tb = exc.__traceback__
    while tb is not None:
        name = tb.tb_frame.f_globals.get("__name__", "")
        if name.startswith("khop"):
            mod = name
        tb = tb.tb_next
    return mod


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="khop", description="K-hop testing against independence: exponents, "
                                 "simulation and exact diagnostics.")
    ap.add_argument("--version", action="version", version=f"khop {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, pmf_flag=False):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, help="overrides the config seed")
        p.add_argument("--out", help="output directory (overrides config 'output')")
        if pmf_flag:
            p.add_argument("--pmf", help="pmf JSON file")

    p = sub.add_parser("eta", help="eta_l(R) curves per hop")
    common(p, True)
    p.add_argument("--rates", type=float, nargs="+")
    p.add_argument("--aux-card", type=int)
    p = sub.add_parser("wz", help="Wyner-Ziv rate with side information")
    common(p, True)
    p.add_argument("--distortion", help="JSON file with a distortion matrix, or 'hamming'")
    p.add_argument("--D", type=float, nargs="+", dest="D")
    for name, hlp in [("region", "exponent region bounds"), ("simulate", "Monte Carlo error estimates"),
                      ("sweep", "strong-converse epsilon sweep"), ("diagnose", "exact enumeration checks")]:
        common(sub.add_parser(name, help=hlp))
    return ap


def _load(args):
    """Config dict and base directory from --config and the command's flags."""
    raw, base = {}, Path(".")
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise ConfigError([f"config file {args.config!r} does not exist"])
        try:
            raw = json.loads(path.read_text())
        except json.JSONDecodeError as e:
            raise ConfigError([f"config is not valid JSON: {e.msg} (line {e.lineno})"]) from None
        if not isinstance(raw, dict):
            raise ConfigError(["config must be a JSON object"])
        base = path.parent
    raw["command"] = args.command
    if getattr(args, "pmf", None):
        raw["pmf"] = str(Path(args.pmf).resolve())
    if getattr(args, "rates", None):
        raw["rates"] = args.rates
    if getattr(args, "aux_card", None) is not None:
        raw["aux_card"] = args.aux_card
    if getattr(args, "D", None):
        raw["D"] = args.D
    dist = getattr(args, "distortion", None)
    if dist:
        raw["distortion"] = "hamming" if dist == "hamming" else json.loads(Path(dist).read_text())
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.out:
        raw["output"] = str(Path(args.out).resolve())
    return raw, base


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        raw, base = _load(args)
        config = parse_config(raw, base)
    except ConfigError as e:
        for msg in e.errors:
            print(f"khop: config error: {msg}", file=sys.stderr)
        return 2
    try:
        paths = run(config)
    except Exception as e:  # surfaced verbatim with the module that raised it
        print(f"khop: error [{_origin(e)}] {type(e).__name__}: {e}", file=sys.stderr)
        if os.environ.get("KHOP_DEBUG"):
            traceback.print_exc()
        return 1
    for path in paths:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
