"""Command-line front end.

Exit codes: 0 ok, 1 usage error, 2 bad input data, 3 resource limit hit.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .additive import direct_additive
from .core import (
    FAMILIES,
    Additive,
    MarketError,
    MarketInstance,
    Outcome,
    ResourceLimitError,
    SampleSet,
    SingleMinded,
    ThresholdSubmodular,
    UnitDemand,
    bundle,
    members,
)
from .distributions import (
    AdditiveWorstCase,
    SingleMindedWorstCase,
    UnitDemandWorstCase,
    adversarial_instance,
    make_sample_set,
    parse_distribution,
)
from .harness import (
    REPORT_COLUMNS,
    ExperimentConfig,
    csv_cell,
    load_config_file,
    random_market,
    run_experiment,
    synth_ratings,
    write_ratings_csv,
)
from .metrics import empirical_loss, is_envy_free, is_walrasian, sample_complexity, welfare
from .single_minded import LEFTOVER_RULES, sm_pipeline
from .submodular import direct_submod
from .unit_demand import direct_ud, indirect_ud

log = logging.getLogger("pacmarket")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------

def _load_json(path):
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise MarketError(f"{path}: no such file") from None
    except json.JSONDecodeError as exc:
        raise MarketError(f"{path}: invalid JSON ({exc})") from None


def write_samples(samples: SampleSet, path) -> None:
    with open(path, "w") as fh:
        for mask, vals in samples.records():
            fh.write(json.dumps({"bundle": members(mask), "values": vals.tolist()}) + "\n")


def read_samples(path, k: int | None = None) -> SampleSet:
    records = []
    try:
        lines = Path(path).read_text().splitlines()
    except FileNotFoundError:
        raise MarketError(f"{path}: no such file") from None
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            records.append((bundle(obj["bundle"]), [float(v) for v in obj["values"]]))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError):
            raise MarketError(f"{path}:{lineno}: expected {{\"bundle\": [...], \"values\": [...]}}") from None
    if not records:
        raise MarketError(f"{path}: no samples")
    n = len(records[0][1])
    if k is None:
        k = max((mask.bit_length() for mask, _ in records), default=0)
    return SampleSet.from_records(records, k, n)


def read_budgets(path, with_k: bool = False):
    """A JSON list of budgets, or an object {"budgets": [...], "k": goods}."""
    data = _load_json(path)
    k = None
    if isinstance(data, dict):
        k = data.get("k")
        data = data.get("budgets")
    if not isinstance(data, list):
        raise MarketError(f"{path}: expected a list of budgets")
    b = np.array(data, dtype=float)
    return (b, k) if with_k else b


def write_budgets(market: MarketInstance, path) -> None:
    Path(path).write_text(json.dumps({"budgets": market.budgets.tolist(), "k": market.k}) + "\n")


def market_to_dict(market: MarketInstance) -> dict:
    truth = market.valuations
    out = {"family": market.family, "k": market.k, "budgets": market.budgets.tolist()}
    if isinstance(truth, SingleMinded):
        out["desired"] = [members(d) for d in truth.desired]
    else:
        out["values"] = truth.values.tolist()
    if isinstance(truth, UnitDemand):
        out["allow_ties"] = truth.allow_ties
    if isinstance(truth, ThresholdSubmodular):
        out["slot_of"] = list(truth.slot_of)
        out["threshold"] = truth.threshold
    return out


def market_from_dict(d: dict) -> MarketInstance:
    try:
        family = d["family"]
        b = d["budgets"]
        if family == "single-minded":
            truth = SingleMinded(tuple(bundle(s) for s in d["desired"]), int(d["k"]))
        elif family == "unit-demand":
            truth = UnitDemand(d["values"], allow_ties=bool(d.get("allow_ties", False)))
        elif family == "additive":
            truth = Additive(d["values"])
        elif family == "submodular":
            truth = ThresholdSubmodular(d["values"], tuple(d["slot_of"]), int(d["threshold"]))
        else:
            raise MarketError(f"unknown family {family!r}")
    except KeyError as exc:
        raise MarketError(f"market file is missing {exc}") from None
    return MarketInstance(b, truth)


def write_market(market: MarketInstance, path) -> None:
    Path(path).write_text(json.dumps(market_to_dict(market)) + "\n")


def read_market(path) -> MarketInstance:
    return market_from_dict(_load_json(path))


def outcome_to_dict(outcome: Outcome, budgets=None) -> dict:
    burnt = members(outcome.burnt)
    prices = [0.0 if np.isinf(p) else float(p) for p in outcome.prices]
    out = {
        "allocation": [members(a) for a in outcome.allocation],
        "prices": prices,
        "burn": burnt,
    }
    if budgets is not None:
        out["budgets"] = [float(x) for x in budgets]
    if outcome.values is not None:
        out["values"] = list(outcome.values)
    return out


def outcome_from_dict(d: dict) -> Outcome:
    try:
        prices = np.array(d["prices"], dtype=float)
        prices[list(d.get("burn", []))] = np.inf
        return Outcome([bundle(a) for a in d["allocation"]], prices, values=d.get("values"))
    except (KeyError, TypeError, IndexError) as exc:
        raise MarketError(f"malformed outcome: {exc}") from None


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _emit(text: str, out) -> None:
    if out:
        Path(out).write_text(text if text.endswith("\n") else text + "\n")
    else:
        print(text)


def cmd_gen_samples(args) -> int:
    rng = np.random.default_rng(args.seed)
    if args.market:
        market = read_market(args.market)
    else:
        if args.n is None or args.k is None:
            raise UsageError("gen-samples needs --market or both --n and --k")
        market = random_market(args.family, args.n, args.k, rng)
        if args.market_out:
            write_market(market, args.market_out)
    spec = parse_distribution(args.dist, market.k)
    samples = make_sample_set(market, spec, args.m, rng)
    write_samples(samples, args.out)
    if args.budgets_out:
        write_budgets(market, args.budgets_out)
    log.info("wrote %d samples for n=%d k=%d to %s", len(samples), market.n, market.k, args.out)
    return 0


def cmd_learn(args) -> int:
    b, k = read_budgets(args.budgets, with_k=True)
    samples = read_samples(args.samples, args.k if args.k is not None else k)
    if samples.n != len(b):
        raise MarketError(f"samples have {samples.n} players but {len(b)} budgets given")
    family, algo = args.family, args.algo
    if family == "unit-demand":
        rng = np.random.default_rng(args.seed) if args.seed is not None else None
        outcome = direct_ud(samples, b) if algo == "direct" else indirect_ud(samples, b, rng)
    elif algo != "direct":
        raise UsageError("--algo indirect is only available for unit-demand")
    elif family == "single-minded":
        outcome = sm_pipeline(samples, b, args.leftovers)
    elif family == "additive":
        outcome = direct_additive(samples, b)
    else:
        c = read_budgets(args.c_floor) if args.c_floor else None
        outcome = direct_submod(samples, b, c)
    _emit(json.dumps(outcome_to_dict(outcome, b)), args.out)
    log.info("allocated %d goods, burnt %d", bin(outcome.allocated).count("1"), outcome.burnt_count)
    return 0


def cmd_eval(args) -> int:
    raw = _load_json(args.outcome)
    outcome = outcome_from_dict(raw)
    market = read_market(args.market) if args.market else None
    if args.budgets:
        b = read_budgets(args.budgets)
    elif market is not None:
        b = market.budgets
    elif "budgets" in raw:
        b = np.array(raw["budgets"], dtype=float)
    else:
        raise MarketError("budgets unknown: pass --budgets or --market")
    truth = market.valuations if market else None

    if args.kind == "loss":
        if not args.samples:
            raise UsageError("eval --kind loss needs --samples")
        samples = read_samples(args.samples, outcome.k)
        report = empirical_loss(outcome, samples, truth, b)
        print(repr(report.empirical))
        return 0
    if market is None:
        raise UsageError(f"eval --kind {args.kind} needs --market")
    if args.kind == "welfare":
        print(repr(welfare(outcome.allocation, truth)))
    elif args.kind == "envy":
        print("true" if is_envy_free(outcome, truth, b) else "false")
    else:
        print("true" if is_walrasian(outcome, market) else "false")
    return 0


def cmd_adversarial(args) -> int:
    kinds = {
        "unit-demand": lambda: UnitDemandWorstCase(args.delta),
        "single-minded": SingleMindedWorstCase,
        "additive": lambda: AdditiveWorstCase(args.delta),
    }
    if args.kind != "single-minded" and args.delta is None:
        raise UsageError(f"--delta is required for {args.kind}")
    market, samples = adversarial_instance(kinds[args.kind](), args.n, args.k,
                                           np.random.default_rng(args.seed))
    write_samples(samples, args.out)
    if args.market_out:
        write_market(market, args.market_out)
    if args.budgets_out:
        write_budgets(market, args.budgets_out)
    return 0


_EXPERIMENT_FLAGS = ("n", "k", "family", "distribution", "sample_counts", "repetitions",
                     "eval_trials", "threshold", "slots", "seed", "ratings_path", "opt_limit",
                     "c_floor", "timing")


def cmd_experiment(args) -> int:
    settings = load_config_file(args.config) if args.config else {}
    for name in _EXPERIMENT_FLAGS:
        value = getattr(args, name, None)
        if value is not None:
            settings[name] = value
    config = ExperimentConfig.from_mapping(settings)
    records = run_experiment(config, args.out, args.format, args.workers, args.resume)
    if not args.out:
        writer = sys.stdout
        if args.format == "csv":
            writer.write(",".join(REPORT_COLUMNS) + "\n")
            for r in records:
                writer.write(",".join(csv_cell(getattr(r, c)) for c in REPORT_COLUMNS) + "\n")
        else:
            for r in records:
                writer.write(json.dumps(r.row()) + "\n")
    log.info("%d records", len(records))
    return 0


def cmd_synth_ratings(args) -> int:
    table = synth_ratings(args.n, args.k, np.random.default_rng(args.seed))
    write_ratings_csv(table, args.out)
    return 0


def cmd_sample_complexity(args) -> int:
    print(sample_complexity(args.k, args.eps, args.delta, args.C))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="pacmarket", description="Learn market outcomes from sampled bundles.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    families = sorted(FAMILIES)

    g = sub.add_parser("gen-samples", help="draw bundles and record every player's value")
    g.add_argument("--family", choices=families, default="unit-demand")
    g.add_argument("--market", help="market JSON to sample from (else a random one)")
    g.add_argument("--n", type=int)
    g.add_argument("--k", type=int)
    g.add_argument("--dist", default="product:0.5")
    g.add_argument("--m", type=int, default=100)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.add_argument("--market-out")
    g.add_argument("--budgets-out")
    g.set_defaults(func=cmd_gen_samples)

    l = sub.add_parser("learn", help="compute an outcome from samples")  # noqa: E741
    l.add_argument("--family", choices=families, required=True)
    l.add_argument("--algo", choices=["direct", "indirect"], default="direct")
    l.add_argument("--samples", required=True)
    l.add_argument("--budgets", required=True)
    l.add_argument("--k", type=int, help="number of goods (default: highest index seen + 1)")
    l.add_argument("--c-floor", help="JSON list of value floors (submodular)")
    l.add_argument("--seed", type=int, help="random tie-breaking for --algo indirect")
    l.add_argument("--leftovers", choices=LEFTOVER_RULES, default="last",
                   help="who receives unsold goods (single-minded)")
    l.add_argument("--out")
    l.set_defaults(func=cmd_learn)

    e = sub.add_parser("eval", help="score an outcome")
    e.add_argument("--kind", choices=["loss", "welfare", "envy", "walrasian"], required=True)
    e.add_argument("--outcome", required=True)
    e.add_argument("--samples")
    e.add_argument("--market")
    e.add_argument("--budgets")
    e.set_defaults(func=cmd_eval)

    a = sub.add_parser("adversarial", help="write a worst-case instance")
    a.add_argument("--kind", choices=["unit-demand", "single-minded", "additive"], required=True)
    a.add_argument("--n", type=int, required=True)
    a.add_argument("--k", type=int, required=True)
    a.add_argument("--delta", type=float)
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--out", required=True)
    a.add_argument("--market-out")
    a.add_argument("--budgets-out")
    a.set_defaults(func=cmd_adversarial)

    x = sub.add_parser("experiment", help="run a sample-size sweep")
    x.add_argument("--config")
    x.add_argument("--n", type=int)
    x.add_argument("--k", type=int)
    x.add_argument("--family", choices=["unit-demand", "additive", "submodular"])
    x.add_argument("--distribution")
    x.add_argument("--sample-counts", dest="sample_counts")
    x.add_argument("--repetitions", type=int)
    x.add_argument("--eval-trials", dest="eval_trials", type=int)
    x.add_argument("--threshold", type=int)
    x.add_argument("--slots", type=int)
    x.add_argument("--seed", type=int)
    x.add_argument("--ratings", dest="ratings_path")
    x.add_argument("--limit", dest="opt_limit", type=int)
    x.add_argument("--c-floor", dest="c_floor", choices=["budget", "zero"])
    x.add_argument("--timing", action="store_const", const=True)
    x.add_argument("--workers", type=int, default=1)
    x.add_argument("--format", choices=["csv", "jsonl"], default="csv")
    x.add_argument("--resume", action="store_true")
    x.add_argument("--out")
    x.set_defaults(func=cmd_experiment)

    s = sub.add_parser("synth-ratings", help="write a synthetic ratings CSV")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--k", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth_ratings)

    c = sub.add_parser("sample-complexity", help="samples sufficient for an eps-PAC outcome")
    c.add_argument("--k", type=int, required=True)
    c.add_argument("--eps", type=float, required=True)
    c.add_argument("--delta", type=float, required=True)
    c.add_argument("--C", type=float, default=1.0)
    c.set_defaults(func=cmd_sample_complexity)
    return p


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except ResourceLimitError as exc:
        print(f"resource limit: {exc}", file=sys.stderr)
        return 3
    except (MarketError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
