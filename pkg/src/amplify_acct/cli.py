"""Command line front end: amplify-acct.

Subcommands:

* ``epsilon``   -- (epsilon, delta) guarantee for one mechanism spec.
* ``curve``     -- per-order epsilon table for one or more mechanisms
                   (CSV or JSON, the data behind the comparison figures).
* ``calibrate`` -- bisect the noise for a target (epsilon, delta).
* ``verify``    -- oracle sweeps: sandwich bounds, offset identity,
                   dimension reduction, order-2 tightness.
* ``simulate``  -- run the training simulator and report diagnostics.

A JSON config file (``--config``) holds one object per command name;
explicit flags override config values, unknown config keys are errors.
Every output embeds the fully resolved configuration and the tool
version, outputs are byte-identical for identical (flags, config, seed),
and numbers print with 12 significant digits.  Exit codes: 0 success,
1 verification failure, 2 configuration error or refusal.

``AMPLIFY_ACCT_THREADS`` (default 1) bounds the worker threads used to
fan out independent curve computations; results merge in sorted order
either way.

Output schemas
--------------

``curve`` CSV: two ``#`` header lines (tool version, resolved config as
canonical JSON), then ``alpha,epsilon,mechanism,mode,provenance`` rows
sorted by mechanism label and ascending order.  The JSON format mirrors
the same rows under ``{"tool", "version", "config", "rows"}``.

``calibrate`` prints ``sigma`` and the achieved epsilon, then one JSON
record: sigma, achieved/target epsilon, delta, bisection iteration count,
bracket endpoints, mechanism label, config, version.

``verify`` emits a leading meta record (tool, version, resolved config)
followed by one JSON record per check: ``check`` (sandwich /
offset-identity / alpha2-tightness / dim-reduction), the family fields
(d, k, c, sigma), alpha, the computed quantities, and ``ok``; failing
records are reprinted after a ``#`` summary line.

``simulate`` writes ``trace.jsonl`` (one record per iteration: iteration,
participants, assignment_counts, max/mean clipped norm, noise_norm, loss,
support_violations, zeroing_violations, mask_ones, mask_draws) and
``summary.json`` (config echo, aggregated diagnostics, final loss, and
the privacy guarantee or refusal).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

from . import __version__
from .accountant import (
    Bis,
    CalibrationBracketError,
    DropoutSplit,
    Gaussian,
    MixtureSplit,
    ModelSplit,
    PartialSplit,
    PoissonGaussian,
    calibrate_sigma,
    mechanism_label,
    rdp_curve,
    scale_curve,
    to_dp,
)
from .oracles import (
    McSpec,
    QuadratureSpec,
    verify_dim_reduction,
    verify_offset_identity,
    verify_sandwich,
)
from .rdp_math import MixtureFamily, family_mixture, forward_bound, forward_exact_enum, forward_exact_k1
from .training_sim import (
    SimConfig,
    even_split_plan,
    make_hidden_task,
    make_linear_task,
    report_privacy,
    run_dropout_training,
    run_model_split_training,
)

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_CONFIG = 2

_MECH_CHOICES = (
    "gaussian",
    "poisson-gaussian",
    "model-split",
    "mixture-split",
    "dropout-split",
    "partial-split",
    "bis",
)


class CliError(Exception):
    """Configuration or refusal error; maps to exit code 2."""


def _threads() -> int:
    raw = os.environ.get("AMPLIFY_ACCT_THREADS", "1")
    try:
        value = int(raw)
    except ValueError as exc:
        raise CliError(f"AMPLIFY_ACCT_THREADS must be an integer, got {raw!r}") from exc
    if value < 1:
        raise CliError(f"AMPLIFY_ACCT_THREADS must be >= 1, got {value}")
    return value


def _fmt(x: float) -> str:
    return f"{x:.12g}"


def _build_mechanism(args) -> object:
    """Mechanism spec from epsilon/calibrate-style flags.

    ``--poisson RATE`` is the data-subsampling modifier: valid only on the
    plain Gaussian (giving the subsampled Gaussian); combining it with a
    split or balanced-subsampling mechanism has no accounting rule and is
    refused.
    """
    mech = args.mech
    rate = getattr(args, "poisson", None)
    if rate is not None and mech != "gaussian":
        raise CliError(
            f"--poisson data subsampling combined with {mech} is not accountable: "
            "the composition is unspecified (see decisions ledger); refusing"
        )
    if mech == "gaussian":
        if rate is not None:
            return PoissonGaussian(c=args.c, sigma=args.sigma, gamma=rate)
        return Gaussian(c=args.c, sigma=args.sigma)
    if mech == "poisson-gaussian":
        if args.gamma is None:
            raise CliError("poisson-gaussian needs --gamma")
        return PoissonGaussian(c=args.c, sigma=args.sigma, gamma=args.gamma)
    if mech == "model-split":
        if args.d is None:
            raise CliError("model-split needs --d")
        return ModelSplit(d=args.d, c=args.c, sigma=args.sigma)
    if mech == "mixture-split":
        if args.d is None:
            raise CliError("mixture-split needs --d")
        return MixtureSplit(d=args.d, c=args.c, sigma=args.sigma)
    if mech == "dropout-split":
        return DropoutSplit(c=args.c, sigma=args.sigma)
    if mech == "partial-split":
        if args.d is None or args.c_split is None or args.c_nonsplit is None:
            raise CliError("partial-split needs --d, --c-split and --c-nonsplit")
        return PartialSplit(c_split=args.c_split, c_nonsplit=args.c_nonsplit, d=args.d, sigma=args.sigma)
    if mech == "bis":
        if args.T is None or args.k is None:
            raise CliError("bis needs --T and --k")
        return Bis(T=args.T, k=args.k, c=args.c, sigma=args.sigma)
    raise CliError(f"unknown mechanism {mech!r}")


def _parse_kv(text: str, flag: str) -> dict:
    out = {}
    if not text:
        return out
    for item in text.split(","):
        if "=" not in item:
            raise CliError(f"{flag}: expected key=value, got {item!r}")
        key, value = item.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _kv_float(kv, key, default=None):
    if key in kv:
        return float(kv.pop(key))
    return default


def _kv_int(kv, key, default=None):
    if key in kv:
        return int(kv.pop(key))
    return default


def _curve_mechanisms(args):
    """(spec, count) pairs from the repeatable curve flags."""
    pairs = []
    for text in args.gaussian or []:
        kv = _parse_kv(text, "--gaussian")
        spec = Gaussian(c=_kv_float(kv, "c", args.c), sigma=_kv_float(kv, "sigma", args.sigma))
        pairs.append((spec, _kv_int(kv, "count", 1), kv))
    for text in args.poisson or []:
        kv = _parse_kv(text, "--poisson")
        spec = PoissonGaussian(
            c=_kv_float(kv, "c", args.c),
            sigma=_kv_float(kv, "sigma", args.sigma),
            gamma=_kv_float(kv, "gamma"),
        )
        pairs.append((spec, _kv_int(kv, "count", 1), kv))
    for text in args.model_split or []:
        kv = _parse_kv(text, "--model-split")
        spec = ModelSplit(d=_kv_int(kv, "d"), c=_kv_float(kv, "c", args.c), sigma=_kv_float(kv, "sigma", args.sigma))
        pairs.append((spec, _kv_int(kv, "count", 1), kv))
    for text in args.mixture_split or []:
        kv = _parse_kv(text, "--mixture-split")
        spec = MixtureSplit(d=_kv_int(kv, "d"), c=_kv_float(kv, "c", args.c), sigma=_kv_float(kv, "sigma", args.sigma))
        pairs.append((spec, _kv_int(kv, "count", 1), kv))
    for text in args.dropout_split or []:
        kv = _parse_kv(text, "--dropout-split")
        spec = DropoutSplit(c=_kv_float(kv, "c", args.c), sigma=_kv_float(kv, "sigma", args.sigma))
        pairs.append((spec, _kv_int(kv, "count", 1), kv))
    for text in args.partial_split or []:
        kv = _parse_kv(text, "--partial-split")
        spec = PartialSplit(
            c_split=_kv_float(kv, "c_split"),
            c_nonsplit=_kv_float(kv, "c_nonsplit"),
            d=_kv_int(kv, "d"),
            sigma=_kv_float(kv, "sigma", args.sigma),
        )
        pairs.append((spec, _kv_int(kv, "count", 1), kv))
    for text in args.bis or []:
        kv = _parse_kv(text, "--bis")
        spec = Bis(
            T=_kv_int(kv, "T"),
            k=_kv_int(kv, "k"),
            c=_kv_float(kv, "c", args.c),
            sigma=_kv_float(kv, "sigma", args.sigma),
        )
        pairs.append((spec, _kv_int(kv, "count", 1), kv))
    cleaned = []
    for spec, count, leftover in pairs:
        if leftover:
            raise CliError(f"unknown mechanism parameter(s) {sorted(leftover)} for {mechanism_label(spec)}")
        if count < 1:
            raise CliError(f"count must be >= 1, got {count}")
        cleaned.append((spec, count))
    if not cleaned:
        raise CliError("curve needs at least one mechanism flag")
    return cleaned


# Output locations do not determine the computed numbers, so they stay out
# of the echoed config: the same computation writes identical bytes wherever
# it lands.
_CONFIG_SKIP = ("command", "config", "out", "out_dir")


def _resolved_config(args, skip=_CONFIG_SKIP) -> dict:
    out = {}
    for key, value in sorted(vars(args).items()):
        if key in skip or callable(value):
            continue
        out[key] = value
    return out


def _config_json(args) -> str:
    return json.dumps(_resolved_config(args), sort_keys=True)


def _orders(args):
    return tuple(range(2, args.max_order + 1))


def cmd_epsilon(args) -> int:
    spec = _build_mechanism(args)
    curve = scale_curve(rdp_curve(spec, _orders(args), args.mode), args.count)
    guarantee = to_dp(curve, args.delta)
    prov = curve.provenance[curve.orders.index(guarantee.achieving_order)]
    print(f"mechanism = {mechanism_label(spec)} x {args.count}")
    print(f"epsilon = {_fmt(guarantee.epsilon)} (delta = {_fmt(args.delta)})")
    print(f"achieving_order = {guarantee.achieving_order}")
    print(f"provenance = {prov}")
    return EXIT_OK


def _write_lines(path, lines) -> None:
    text = "\n".join(lines) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def cmd_curve(args) -> int:
    pairs = _curve_mechanisms(args)
    orders = _orders(args)

    def one(pair):
        spec, count = pair
        return scale_curve(rdp_curve(spec, orders, args.mode), count)

    threads = _threads()
    if threads > 1 and len(pairs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            curves = list(pool.map(one, pairs))
    else:
        curves = [one(pair) for pair in pairs]

    rows = []
    for (spec, count), curve in zip(pairs, curves):
        label = mechanism_label(spec) + (f"x{count}" if count > 1 else "")
        for alpha, eps, prov in zip(curve.orders, curve.epsilons, curve.provenance):
            rows.append((label, alpha, eps, prov))
    rows.sort(key=lambda r: (r[0], r[1]))

    if args.format == "csv":
        lines = [f"# amplify-acct {__version__}", f"# config: {_config_json(args)}"]
        lines.append("alpha,epsilon,mechanism,mode,provenance")
        for label, alpha, eps, prov in rows:
            lines.append(f"{alpha},{_fmt(eps)},{label},{args.mode},{prov}")
    else:
        payload = {
            "tool": "amplify-acct",
            "version": __version__,
            "config": _resolved_config(args),
            "rows": [
                {"alpha": alpha, "epsilon": eps, "mechanism": label, "mode": args.mode, "provenance": prov}
                for label, alpha, eps, prov in rows
            ],
        }
        lines = [json.dumps(payload, sort_keys=True)]
    _write_lines(args.out, lines)
    return EXIT_OK


def cmd_calibrate(args) -> int:
    spec = _build_mechanism(args)
    try:
        result = calibrate_sigma(spec, args.count, args.epsilon, args.delta, _orders(args), args.mode)
    except CalibrationBracketError as exc:
        raise CliError(str(exc)) from exc
    record = dataclasses.asdict(result)
    record.update(
        {
            "tool": "amplify-acct",
            "version": __version__,
            "mechanism": mechanism_label(spec),
            "count": args.count,
            "config": _resolved_config(args),
        }
    )
    print(f"sigma = {_fmt(result.sigma)}")
    print(f"achieved_epsilon = {_fmt(result.achieved_epsilon)} (target {_fmt(args.epsilon)}, delta {_fmt(args.delta)})")
    line = json.dumps(record, sort_keys=True)
    if args.out is None:
        print(line)
    else:
        _write_lines(args.out, [line])
    return EXIT_OK


def _family_from_kv(text: str) -> MixtureFamily:
    kv = _parse_kv(text, "--family")
    family = MixtureFamily(
        d=_kv_int(kv, "d"),
        k=_kv_int(kv, "k", 1),
        c=_kv_float(kv, "c", 1.0),
        sigma=_kv_float(kv, "sigma", 1.0),
    )
    if kv:
        raise CliError(f"unknown family parameter(s) {sorted(kv)}")
    return family


def _default_verify_grid():
    families = []
    for d in (2, 3, 4):
        for k in (1, 2):
            if k > d:
                continue
            for ratio in (0.5, 1.0, 2.0):
                families.append(MixtureFamily(d=d, k=k, c=ratio, sigma=1.0))
    return families


def _sandwich_quad_spec(d: int) -> QuadratureSpec:
    # 3-d grids need the coarser-but-still-spectrally-accurate floor settings.
    if d <= 2:
        return QuadratureSpec()
    return QuadratureSpec(truncation_radius_sigmas=8.0, points_per_sigma=10, max_dim_grid=3)


def _forward_exact(family: MixtureFamily, alpha: int) -> float:
    if family.k == 1:
        return forward_exact_k1(family.d, family.c, family.sigma, alpha)
    return forward_exact_enum(family_mixture(family), alpha)


def cmd_verify(args) -> int:
    checks = args.checks.split(",") if args.checks else ["sandwich", "offset", "dimred", "alpha2"]
    for name in checks:
        if name not in ("sandwich", "offset", "dimred", "alpha2"):
            raise CliError(f"unknown check {name!r}")
    families = [_family_from_kv(text) for text in args.family] if args.family else _default_verify_grid()
    alphas = tuple(args.alpha) if args.alpha else (2, 3, 5)
    mc = McSpec(n_samples=args.mc_samples, seed=args.seed)

    records = []
    failures = []

    def emit(record: dict) -> None:
        records.append(record)
        if not record["ok"]:
            failures.append(record)

    for family in families:
        fam = {"d": family.d, "k": family.k, "c": family.c, "sigma": family.sigma}
        for alpha in alphas:
            if "sandwich" in checks:
                rep = verify_sandwich(family, alpha, _sandwich_quad_spec(family.d), mc)
                emit(
                    {
                        "check": "sandwich",
                        **fam,
                        "alpha": alpha,
                        "oracle_forward": rep.oracle_forward,
                        "oracle_forward_stderr": rep.oracle_forward_stderr,
                        "oracle_reverse": rep.oracle_reverse,
                        "oracle_reverse_stderr": rep.oracle_reverse_stderr,
                        "forward_exact": rep.forward_exact,
                        "forward_bound": rep.forward_bound,
                        "reverse_bound": rep.reverse_bound,
                        "tight": rep.tight,
                        "loose": rep.loose,
                        "forward_matches_exact": rep.forward_matches_exact,
                        "ok_forward_below_exact": rep.ok_forward_below_exact,
                        "ok_exact_below_bound": rep.ok_exact_below_bound,
                        "ok_reverse_below_bound": rep.ok_reverse_below_bound,
                        "ok_tight_below_loose": rep.ok_tight_below_loose,
                        "ok": rep.ok,
                    }
                )
            if "offset" in checks and family.d <= 4:
                rep = verify_offset_identity(family, alpha, _sandwich_quad_spec(family.d), mc)
                emit(
                    {
                        "check": "offset-identity",
                        **fam,
                        "alpha": alpha,
                        "lhs": rep.lhs,
                        "shift_term": rep.shift_term,
                        "tail_term": rep.tail_term,
                        "tol": rep.tol,
                        "ok": rep.ok,
                    }
                )
            if "alpha2" in checks:
                exact2 = _forward_exact(family, 2)
                bound2 = forward_bound(family, 2)
                ok = abs(exact2 - bound2) <= 1e-9 * max(1.0, abs(bound2))
                emit(
                    {
                        "check": "alpha2-tightness",
                        **fam,
                        "alpha": 2,
                        "forward_exact": exact2,
                        "forward_bound": bound2,
                        "ok": ok,
                    }
                )
        if "dimred" in checks and family.d <= 2:
            for alpha in alphas:
                centers = family_mixture(family).centers
                rep = verify_dim_reduction(centers, family.sigma, alpha)
                emit(
                    {
                        "check": "dim-reduction",
                        **fam,
                        "alpha": alpha,
                        "value_lowdim": rep.value_lowdim,
                        "value_embedded": rep.value_embedded,
                        "tol": rep.tol,
                        "ok": rep.ok,
                    }
                )

    meta = {"record": "meta", "tool": "amplify-acct", "version": __version__, "config": _resolved_config(args)}
    lines = [json.dumps(meta, sort_keys=True)] + [json.dumps(r, sort_keys=True) for r in records]
    _write_lines(args.out, lines)
    if failures:
        sys.stdout.write(f"# {len(failures)} of {len(records)} checks failed:\n")
        for record in failures:
            sys.stdout.write(json.dumps(record, sort_keys=True) + "\n")
        return EXIT_VERIFY_FAILED
    return EXIT_OK


def cmd_simulate(args) -> int:
    try:
        if args.mode == "model-split":
            if args.d is None:
                raise CliError("model-split mode needs --d")
            task = make_linear_task(args.n, args.m, args.task_seed)
            plan = even_split_plan(args.m, args.d, args.nonsplit)
            config = SimConfig(
                T=args.T,
                c=args.c,
                sigma=args.sigma,
                mode="model_split",
                plan=plan,
                schedule=args.schedule,
                k=args.k,
                gamma=args.gamma,
                seed=args.seed,
                learning_rate=args.lr,
                delta=args.delta,
            )
        elif args.mode == "dropout":
            config = SimConfig(
                T=args.T,
                c=args.c,
                sigma=args.sigma,
                mode="dropout",
                dropout_rate=args.rate,
                schedule=args.schedule,
                k=args.k,
                gamma=args.gamma,
                seed=args.seed,
                learning_rate=args.lr,
                delta=args.delta,
            )
        else:
            config = SimConfig(
                T=args.T,
                c=args.c,
                sigma=args.sigma,
                mode="plain",
                schedule=args.schedule,
                k=args.k,
                gamma=args.gamma,
                seed=args.seed,
                learning_rate=args.lr,
                delta=args.delta,
            )
    except ValueError as exc:
        raise CliError(str(exc)) from exc

    if config.sigma > 0:
        privacy = report_privacy(config)
        if privacy.refused:
            raise CliError(f"refusing to simulate an unaccountable configuration: {privacy.refusal}")

    if config.mode == "dropout":
        task = make_hidden_task(args.n, args.m, args.hidden, args.task_seed)
        trace = run_dropout_training(task, config)
    else:
        if config.mode == "plain":
            task = make_linear_task(args.n, args.m, args.task_seed)
        trace = run_model_split_training(task, config)

    if args.out_dir is not None:
        os.makedirs(args.out_dir, exist_ok=True)
        trace.write_jsonl(os.path.join(args.out_dir, "trace.jsonl"))
        summary = trace.summary_dict()
        summary.update({"tool": "amplify-acct", "version": __version__, "cli_config": _resolved_config(args)})
        with open(os.path.join(args.out_dir, "summary.json"), "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")

    diag = trace.diagnostics()
    print(f"iterations = {config.T}, samples = {args.n}")
    print(f"max_clipped_norm = {_fmt(diag['max_clipped_norm'])} (clip {_fmt(config.c)})")
    print(f"support_violations = {diag['support_violations']}")
    print(f"zeroing_violations = {diag['zeroing_violations']}")
    if diag["bis_row_sums_all_k"] is not None:
        print(f"bis_row_sums_all_k = {diag['bis_row_sums_all_k']}")
    if trace.privacy is None:
        print("privacy = none (sigma = 0)")
    else:
        g = trace.privacy.guarantee
        print(f"privacy = ({_fmt(g.epsilon)}, {_fmt(g.delta)})-DP at order {g.achieving_order}")
    return EXIT_OK


def _add_mech_flags(parser) -> None:
    parser.add_argument("--mech", required=True, choices=_MECH_CHOICES)
    parser.add_argument("--c", type=float, default=1.0, help="clipping norm (default 1)")
    parser.add_argument("--sigma", type=float, default=1.0, help="noise standard deviation")
    parser.add_argument("--gamma", type=float, default=None, help="poisson-gaussian sampling rate")
    parser.add_argument("--d", type=int, default=None, help="submodel count")
    parser.add_argument("--T", type=int, default=None, help="bis: total iterations")
    parser.add_argument("--k", type=int, default=None, help="bis: participations per sample")
    parser.add_argument("--c-split", dest="c_split", type=float, default=None)
    parser.add_argument("--c-nonsplit", dest="c_nonsplit", type=float, default=None)
    parser.add_argument("--poisson", type=float, default=None, help="extra data-subsampling rate (gaussian only)")
    parser.add_argument("--count", type=int, default=1, help="sequential repetitions")
    parser.add_argument("--mode", choices=("tight", "loose"), default="tight")
    parser.add_argument("--max-order", dest="max_order", type=int, default=100)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="amplify-acct", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"amplify-acct {__version__}")
    parser.add_argument("--config", default=None, help="JSON config file keyed by command name")
    sub = parser.add_subparsers(dest="command", required=True)

    p_eps = sub.add_parser("epsilon", help="(epsilon, delta) guarantee for one mechanism")
    _add_mech_flags(p_eps)
    p_eps.add_argument("--delta", type=float, required=True)
    p_eps.set_defaults(func=cmd_epsilon)

    p_curve = sub.add_parser("curve", help="per-order epsilon table for mechanisms")
    p_curve.add_argument("--gaussian", action="append", metavar="KV")
    p_curve.add_argument("--poisson", action="append", metavar="KV", help="gamma=...,count=...")
    p_curve.add_argument("--model-split", dest="model_split", action="append", metavar="KV")
    p_curve.add_argument("--mixture-split", dest="mixture_split", action="append", metavar="KV")
    p_curve.add_argument("--dropout-split", dest="dropout_split", action="append", metavar="KV")
    p_curve.add_argument("--partial-split", dest="partial_split", action="append", metavar="KV")
    p_curve.add_argument("--bis", action="append", metavar="KV", help="T=...,k=...")
    p_curve.add_argument("--c", type=float, default=1.0)
    p_curve.add_argument("--sigma", type=float, default=1.0)
    p_curve.add_argument("--mode", choices=("tight", "loose"), default="tight")
    p_curve.add_argument("--max-order", dest="max_order", type=int, default=100)
    p_curve.add_argument("--format", choices=("csv", "json"), default="csv")
    p_curve.add_argument("--out", default=None)
    p_curve.set_defaults(func=cmd_curve)

    p_cal = sub.add_parser("calibrate", help="noise for a target (epsilon, delta)")
    _add_mech_flags(p_cal)
    p_cal.add_argument("--epsilon", type=float, required=True, help="target epsilon")
    p_cal.add_argument("--delta", type=float, required=True)
    p_cal.add_argument("--out", default=None)
    p_cal.set_defaults(func=cmd_calibrate)

    p_ver = sub.add_parser("verify", help="oracle verification sweeps")
    p_ver.add_argument("--family", action="append", metavar="KV", help="d=..,k=..,c=..,sigma=..")
    p_ver.add_argument("--alpha", action="append", type=int)
    p_ver.add_argument("--checks", default=None, help="comma list: sandwich,offset,dimred,alpha2")
    p_ver.add_argument("--mc-samples", dest="mc_samples", type=int, default=1_000_000)
    p_ver.add_argument("--seed", type=int, default=0)
    p_ver.add_argument("--out", default=None)
    p_ver.set_defaults(func=cmd_verify)

    p_sim = sub.add_parser("simulate", help="run the training simulator")
    p_sim.add_argument("--mode", choices=("plain", "model-split", "dropout"), default="plain")
    p_sim.add_argument("--T", type=int, required=True)
    p_sim.add_argument("--c", type=float, default=1.0)
    p_sim.add_argument("--sigma", type=float, default=1.0)
    p_sim.add_argument("--d", type=int, default=None)
    p_sim.add_argument("--nonsplit", type=int, default=0, help="trailing non-split parameters")
    p_sim.add_argument("--rate", type=float, default=0.5, help="dropout rate (must be 0.5)")
    p_sim.add_argument("--schedule", choices=("all", "bis", "poisson"), default="all")
    p_sim.add_argument("--k", type=int, default=None)
    p_sim.add_argument("--gamma", type=float, default=None)
    p_sim.add_argument("--n", type=int, default=64, help="samples")
    p_sim.add_argument("--m", type=int, default=12, help="parameter / input dimension")
    p_sim.add_argument("--hidden", type=int, default=6, help="hidden units (dropout mode)")
    p_sim.add_argument("--lr", type=float, default=0.05)
    p_sim.add_argument("--delta", type=float, default=1e-5)
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--task-seed", dest="task_seed", type=int, default=0)
    p_sim.add_argument("--out-dir", dest="out_dir", default=None)
    p_sim.set_defaults(func=cmd_simulate)
    return parser


def _apply_config_file(parser, argv, args):
    """Merge the per-command config-file section under the explicit flags."""
    with open(args.config) as fh:
        try:
            config = json.load(fh)
        except json.JSONDecodeError as exc:
            raise CliError(f"config file is not valid JSON: {exc}") from exc
    if not isinstance(config, dict):
        raise CliError("config file must hold one JSON object keyed by command name")
    section = config.get(args.command, {})
    if not isinstance(section, dict):
        raise CliError(f"config section {args.command!r} must be an object")
    known = set(vars(args)) - {"command", "config", "func"}
    unknown = set(section) - known
    if unknown:
        raise CliError(f"unknown config key(s) for {args.command!r}: {sorted(unknown)}")
    # set_defaults fills only values the command line left at their default,
    # so explicit flags keep priority.
    for sub_action in parser._subparsers._group_actions:
        if args.command in sub_action.choices:
            sub_action.choices[args.command].set_defaults(**section)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.config is not None:
            args = _apply_config_file(parser, argv, args)
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
