"""Rating-based markets, sample-size sweeps and report files."""
from __future__ import annotations

import configparser
import csv
import dataclasses
import hashlib
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .additive import direct_additive
from .baselines import (
    DEFAULT_LIMIT,
    divisible_additive_equilibrium,
    opt_welfare_additive,
    opt_welfare_bruteforce,
    optimal_ud_equilibrium,
)
from .core import (
    Additive,
    MarketError,
    MarketInstance,
    ResourceLimitError,
    SampleSet,
    SingleMinded,
    ThresholdSubmodular,
    UnitDemand,
    membership,
)
from .distributions import parse_distribution, sample_bundles
from .metrics import count_losses, empirical_loss, welfare
from .submodular import direct_submod
from .unit_demand import direct_ud, indirect_ud

log = logging.getLogger(__name__)

REPORT_COLUMNS = ("family", "distribution", "n", "k", "m", "rep", "algorithm",
                  "welfare", "emp_loss", "burnt", "wall_ms")
EXPERIMENT_FAMILIES = ("unit-demand", "additive", "submodular")
ALGORITHMS = {
    "unit-demand": ("DLE", "ILO", "OPT"),
    "additive": ("DLE", "ILO", "OPT", "OPTEQ"),
    "submodular": ("DLE", "OPT"),
}


# ---------------------------------------------------------------------------
# ratings
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RatingsTable:
    """(user, item) -> rating; later duplicates replace earlier ones."""

    entries: dict = field(default_factory=dict)

    @classmethod
    def from_rows(cls, rows) -> "RatingsTable":
        entries = {}
        for u, i, r in rows:
            if r < 0 or not math.isfinite(r):
                raise MarketError(f"rating for ({u}, {i}) must be a nonnegative number")
            entries[(int(u), int(i))] = float(r)
        return cls(entries)

    def __len__(self) -> int:
        return len(self.entries)

    def rows(self) -> list:
        return [(u, i, r) for (u, i), r in self.entries.items()]

    def densest_block(self, n: int, k: int) -> tuple[list, list, np.ndarray]:
        """The n most active users and, among them, the k most rated items.

        Unrated cells of the block are 0.  Ties break by smaller id.
        """
        users: dict[int, int] = {}
        for u, _ in self.entries:
            users[u] = users.get(u, 0) + 1
        if len(users) < n:
            raise MarketError(f"ratings cover {len(users)} users, need {n}")
        chosen_users = sorted(users, key=lambda u: (-users[u], u))[:n]
        picked = set(chosen_users)
        items: dict[int, int] = {}
        for u, i in self.entries:
            if u in picked:
                items[i] = items.get(i, 0) + 1
        if len(items) < k:
            raise MarketError(f"selected users rated {len(items)} items, need {k}")
        chosen_items = sorted(items, key=lambda i: (-items[i], i))[:k]
        col = {i: c for c, i in enumerate(chosen_items)}
        block = np.zeros((n, k))
        for row, u in enumerate(chosen_users):
            for i, c in col.items():
                block[row, c] = self.entries.get((u, i), 0.0)
        return chosen_users, chosen_items, block


def load_ratings_csv(path) -> RatingsTable:
    path = Path(path)
    if not path.exists():
        raise MarketError(f"ratings file {path} not found")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["user_id", "item_id", "rating"]:
            raise MarketError(f"{path}: header must be user_id,item_id,rating")
        rows = []
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not x.strip() for x in rec):
                continue
            if len(rec) != 3:
                raise MarketError(f"{path}:{lineno}: expected 3 fields, got {len(rec)}")
            try:
                u, i, r = int(rec[0]), int(rec[1]), float(rec[2])
            except ValueError:
                raise MarketError(f"{path}:{lineno}: malformed row {rec!r}") from None
            if r < 0 or not math.isfinite(r):
                raise MarketError(f"{path}:{lineno}: rating must be a nonnegative number")
            rows.append((u, i, r))
    return RatingsTable.from_rows(rows)


def write_ratings_csv(table: RatingsTable, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["user_id", "item_id", "rating"])
        for u, i, r in table.rows():
            w.writerow([u, i, f"{r:g}"])


def synth_ratings(n: int, k: int, rng: np.random.Generator) -> RatingsTable:
    """Every user rates every item, uniformly in {1, ..., 5}."""
    r = rng.integers(1, 6, size=(n, k))
    return RatingsTable({(u, i): float(r[u, i]) for u in range(n) for i in range(k)})


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

def geometric_counts(start: int = 5, stop: int = 5120) -> tuple:
    out, m = [], start
    while m <= stop:
        out.append(m)
        m *= 2
    return tuple(out)


@dataclass(frozen=True)
class ExperimentConfig:
    n: int = 50
    k: int = 30
    family: str = "unit-demand"
    distribution: str = "product:0.5"
    sample_counts: tuple = geometric_counts()
    repetitions: int = 100
    eval_trials: int = 1000
    threshold: int = 3
    slots: int = 10
    seed: int = 0
    budget_base: float = 5.0
    budget_spread: float = 1.0
    noise: float = 0.1
    c_floor: str = "budget"
    ratings_path: str | None = None
    opt_limit: int = DEFAULT_LIMIT
    timing: bool = False

    def __post_init__(self):
        counts = tuple(int(m) for m in self.sample_counts)
        object.__setattr__(self, "sample_counts", counts)
        if not counts or counts[0] < 1 or any(b <= a for a, b in zip(counts, counts[1:])):
            raise MarketError("sample counts must be positive and strictly increasing")
        if self.repetitions < 1:
            raise MarketError("repetitions must be at least 1")
        if self.eval_trials < 1:
            raise MarketError("eval_trials must be at least 1")
        if self.family not in EXPERIMENT_FAMILIES:
            raise MarketError(f"experiments support {', '.join(EXPERIMENT_FAMILIES)}")
        if self.n < 1 or self.k < 1:
            raise MarketError("n and k must be positive")
        if self.c_floor not in ("budget", "zero"):
            raise MarketError("c_floor must be 'budget' or 'zero'")
        parse_distribution(self.distribution, self.k)

    def fingerprint(self) -> str:
        blob = json.dumps(dataclasses.asdict(self), sort_keys=True, default=list)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    @classmethod
    def from_mapping(cls, data: dict) -> "ExperimentConfig":
        """Build from string or typed values; unknown keys are rejected."""
        names = {f.name: f for f in dataclasses.fields(cls)}
        kwargs = {}
        for key, raw in data.items():
            key = key.replace("-", "_")
            if key not in names:
                raise MarketError(f"unknown config key {key!r}")
            kwargs[key] = _coerce(key, raw)
        return cls(**kwargs)


def _coerce(key: str, raw):
    if not isinstance(raw, str):
        return tuple(raw) if key == "sample_counts" else raw
    raw = raw.strip()
    if key == "sample_counts":
        if ".." in raw:
            lo, hi = raw.split("..")
            return geometric_counts(int(lo), int(hi))
        return tuple(int(x) for x in raw.replace(",", " ").split())
    if key in ("n", "k", "repetitions", "eval_trials", "threshold", "slots", "seed", "opt_limit"):
        return int(raw)
    if key in ("budget_base", "budget_spread", "noise"):
        return float(raw)
    if key == "timing":
        return raw.lower() in ("1", "true", "yes", "on")
    if key == "ratings_path":
        return raw or None
    return raw


def load_config_file(path) -> dict:
    """Flat key/value settings from a JSON object or an INI file (any section)."""
    text = Path(path).read_text()
    if text.lstrip().startswith("{"):
        return json.loads(text)
    parser = configparser.ConfigParser()
    try:
        parser.read_string(text if text.lstrip().startswith("[") else "[experiment]\n" + text)
    except configparser.Error as exc:
        raise MarketError(f"{path}: {exc}") from None
    out = {}
    for section in parser.sections():
        out.update(parser[section])
    return out


# ---------------------------------------------------------------------------
# markets
# ---------------------------------------------------------------------------

def draw_budgets(n: int, rng: np.random.Generator, base: float = 5.0, spread: float = 1.0) -> np.ndarray:
    while True:
        b = np.sort(base + spread * rng.random(n))[::-1]
        if np.all(np.diff(b) < 0):
            return b


def build_market(ratings: RatingsTable, family: str, config: ExperimentConfig,
                 rng: np.random.Generator) -> MarketInstance:
    """Budgets, perturbed and budget-normalized values, and (for submodular)
    a random balanced assignment of goods to slots."""
    n, k = config.n, config.k
    _, _, r = ratings.densest_block(n, k)
    b = draw_budgets(n, rng, config.budget_base, config.budget_spread)
    v = r + config.noise * rng.random((n, k))
    top = v.argmax(axis=1)
    v = v * (b / v[np.arange(n), top])[:, None]
    v[np.arange(n), top] = b
    if family == "unit-demand":
        return MarketInstance(b, UnitDemand(v))
    if family == "additive":
        return MarketInstance(b, Additive(v))
    if family == "submodular":
        order = rng.permutation(k)
        slot_of = np.empty(k, dtype=int)
        slot_of[order] = np.arange(k) % config.slots
        return MarketInstance(b, ThresholdSubmodular(v, tuple(slot_of), config.threshold))
    raise MarketError(f"rating markets support {', '.join(EXPERIMENT_FAMILIES)}, not {family!r}")


def regress_additive(samples: SampleSet) -> np.ndarray:
    """Least-squares per-good values from bundle values, negatives clipped to 0."""
    n, k = samples.values.shape[1], samples.k
    if len(samples) == 0:
        return np.ones((n, k))
    x = membership(samples.bundles, k).astype(float)
    coef, *_ = np.linalg.lstsq(x, samples.values, rcond=None)
    return np.maximum(coef.T, 0.0)


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ResultRecord:
    family: str
    distribution: str
    n: int
    k: int
    m: int
    rep: int
    algorithm: str
    welfare: float
    emp_loss: float | None
    burnt: int
    wall_ms: float
    fingerprint: str = field(default="", compare=False)

    def row(self) -> dict:
        return {c: getattr(self, c) for c in REPORT_COLUMNS}


def _rep_rng(seed: int, rep: int, *tags: int) -> np.random.Generator:
    return np.random.default_rng([seed, rep, *tags])


def _timed(fn, timing: bool):
    t0 = time.perf_counter()
    out = fn()
    return out, ((time.perf_counter() - t0) * 1000 if timing else 0.0)


def run_repetition(config: ExperimentConfig, rep: int, skip_m: frozenset = frozenset()) -> list:
    """Records for one repetition, every sample count not in ``skip_m``."""
    spec = parse_distribution(config.distribution, config.k)
    if config.ratings_path:
        ratings = load_ratings_csv(config.ratings_path)
    else:
        ratings = synth_ratings(config.n, config.k, _rep_rng(config.seed, 0, 7))
    market = build_market(ratings, config.family, config, _rep_rng(config.seed, rep, 1))
    truth, b = market.valuations, market.budgets
    masks = sample_bundles(spec, _rep_rng(config.seed, rep, 2), config.sample_counts[-1])
    full_set = SampleSet.from_market(market, masks)
    fp = config.fingerprint()

    def record(m, algo, w, loss, burnt, ms):
        return ResultRecord(config.family, config.distribution, config.n, config.k, m, rep,
                            algo, float(w), loss, int(burnt), round(ms, 3), fp)

    def loss_of(outcome, m, tag):
        hits = count_losses(outcome, market, spec, config.eval_trials,
                            _rep_rng(config.seed, rep, 3, m, tag))
        return hits / config.eval_trials

    # baselines depend only on the market
    fixed = {}
    if config.family == "unit-demand":
        opt, ms = _timed(lambda: optimal_ud_equilibrium(market), config.timing)
        fixed["OPT"] = (welfare(opt.allocation, truth), opt, 0, ms)
    elif config.family == "additive":
        opt, ms = _timed(lambda: opt_welfare_additive(market), config.timing)
        fixed["OPT"] = (welfare(opt, truth), None, 0, ms)
        eq, ms = _timed(lambda: divisible_additive_equilibrium(market), config.timing)
        fixed["OPTEQ"] = (eq.welfare(truth.values), None, 0, ms)
    else:
        try:
            opt, ms = _timed(lambda: opt_welfare_bruteforce(market, config.opt_limit), config.timing)
            fixed["OPT"] = (welfare(opt, truth), None, 0, ms)
        except ResourceLimitError:
            log.warning("rep %d: OPT omitted, search exceeded %d nodes", rep, config.opt_limit)

    records = []
    for m in config.sample_counts:
        if m in skip_m:
            continue
        prefix = full_set.prefix(m)
        for tag, algo in enumerate(ALGORITHMS[config.family]):
            if algo in fixed:
                w, outcome, burnt, ms = fixed[algo]
                loss = loss_of(outcome, m, tag) if outcome is not None else None
                records.append(record(m, algo, w, loss, burnt, ms))
                continue
            if algo == "DLE":
                if config.family == "unit-demand":
                    run = lambda: direct_ud(prefix, b)  # noqa: E731
                elif config.family == "additive":
                    run = lambda: direct_additive(prefix, b)  # noqa: E731
                else:
                    c = b if config.c_floor == "budget" else None
                    run = lambda: direct_submod(prefix, b, c)  # noqa: E731
                outcome, ms = _timed(run, config.timing)
                train = empirical_loss(outcome, prefix, truth, b)
                if not train.zero:
                    raise RuntimeError(f"rep {rep}, m={m}: direct outcome inconsistent "
                                       f"with its training samples ({train.empirical})")
                records.append(record(m, algo, welfare(outcome.allocation, truth),
                                      loss_of(outcome, m, tag), outcome.burnt_count, ms))
            elif algo == "ILO" and config.family == "unit-demand":
                outcome, ms = _timed(lambda: indirect_ud(prefix, b), config.timing)
                records.append(record(m, algo, welfare(outcome.allocation, truth),
                                      loss_of(outcome, m, tag), 0, ms))
            elif algo == "ILO":
                def run():
                    learned = MarketInstance(b, Additive(regress_additive(prefix)))
                    return divisible_additive_equilibrium(learned)
                frac, ms = _timed(run, config.timing)
                records.append(record(m, algo, frac.welfare(truth.values), None, 0, ms))
    return records


def _completed_cells(records: list, family: str) -> set:
    want = set(ALGORITHMS[family])
    seen: dict = {}
    for r in records:
        seen.setdefault((r.rep, r.m), set()).add(r.algorithm)
    return {cell for cell, algos in seen.items() if want - {"OPT"} <= algos}


def run_experiment(config: ExperimentConfig, out_path=None, fmt: str = "csv",
                   workers: int = 1, resume: bool = False) -> list:
    """Run every repetition; optionally stream records to ``out_path`` in rep order.

    With ``resume``, complete (rep, m) cells already in ``out_path`` are kept
    and skipped; partial cells are discarded and recomputed.
    """
    done: list = []
    if resume and out_path and Path(out_path).exists():
        previous = read_report(out_path, fmt)
        cells = _completed_cells(previous, config.family)
        done = [r for r in previous if (r.rep, r.m) in cells]
        emit_report(done, out_path, fmt)
    else:
        cells = set()
        if out_path:
            emit_report([], out_path, fmt)

    todo = []
    for rep in range(config.repetitions):
        skip = frozenset(m for m in config.sample_counts if (rep, m) in cells)
        if len(skip) < len(config.sample_counts):
            todo.append((rep, skip))

    results = list(done)
    if workers > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            batches = pool.map(run_repetition, [config] * len(todo),
                               [r for r, _ in todo], [s for _, s in todo])
            for batch in batches:
                results.extend(batch)
                if out_path:
                    append_records(batch, out_path, fmt)
    else:
        for rep, skip in todo:
            batch = run_repetition(config, rep, skip)
            results.extend(batch)
            if out_path:
                append_records(batch, out_path, fmt)
    results.sort(key=lambda r: (r.rep, config.sample_counts.index(r.m), ALGORITHMS[config.family].index(r.algorithm)))
    return results


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

def csv_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def append_records(records, path, fmt: str = "csv") -> None:
    with open(path, "a", newline="") as fh:
        if fmt == "csv":
            w = csv.writer(fh, lineterminator="\n")
            for r in records:
                w.writerow([csv_cell(getattr(r, c)) for c in REPORT_COLUMNS])
        elif fmt == "jsonl":
            for r in records:
                fh.write(json.dumps(r.row()) + "\n")
        else:
            raise MarketError(f"unknown report format {fmt!r}")


def emit_report(records, path, fmt: str = "csv") -> None:
    """Write ``records`` to ``path``; CSV always gets a header line."""
    if fmt not in ("csv", "jsonl"):
        raise MarketError(f"unknown report format {fmt!r}")
    with open(path, "w", newline="") as fh:
        if fmt == "csv":
            fh.write(",".join(REPORT_COLUMNS) + "\n")
    append_records(records, path, fmt)


def _parse_row(row: dict) -> ResultRecord:
    loss = row["emp_loss"]
    return ResultRecord(
        family=row["family"], distribution=row["distribution"], n=int(row["n"]), k=int(row["k"]),
        m=int(row["m"]), rep=int(row["rep"]), algorithm=row["algorithm"],
        welfare=float(row["welfare"]),
        emp_loss=None if loss in ("", None) else float(loss),
        burnt=int(row["burnt"]), wall_ms=float(row["wall_ms"]),
    )


def read_report(path, fmt: str = "csv") -> list:
    with open(path, newline="") as fh:
        if fmt == "csv":
            return [_parse_row(row) for row in csv.DictReader(fh)]
        if fmt == "jsonl":
            return [_parse_row(json.loads(line)) for line in fh if line.strip()]
    raise MarketError(f"unknown report format {fmt!r}")


def random_market(family: str, n: int, k: int, rng: np.random.Generator,
                  threshold: int = 3, slots: int = 10) -> MarketInstance:
    """A rating-based market, or for single-minded players random desired sets
    of one to three goods."""
    if family == "single-minded":
        b = draw_budgets(n, rng)
        desired = []
        for _ in range(n):
            s = int(rng.integers(1, min(3, k) + 1))
            desired.append(sum(1 << int(g) for g in rng.choice(k, size=s, replace=False)))
        return MarketInstance(b, SingleMinded(tuple(desired), k))
    config = ExperimentConfig(n=n, k=k, family=family, threshold=threshold,
                              slots=min(slots, k), repetitions=1)
    return build_market(synth_ratings(n, k, rng), family, config, rng)
