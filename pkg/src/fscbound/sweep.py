"""Budget sweeps over one channel and CSV emission of the resulting curves."""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from .bsc import BscExample, closed_form_upper_bound
from .channel import PrunedChain, bsc_emission, load_channel, prune, with_emission
from .cycles import Cycle, enumerate_cycles, gamma_min
from .dual import upper_bound
from .lower import gamma_max, optimize_lower_bound

SCHEMA_LINE = "# fsc-capacity v1"
RATE_COLUMNS = ("ub_general", "ub_closed_form", "lb", "lb_std_error")


@dataclass(frozen=True)
class SweepConfig:
    channel: str | Path
    p_values: tuple[float, ...] | None = None
    gamma_range: tuple[float, float, int] = (2.0, 3.5, 20)
    n_sim: int = 100_000
    restarts: int = 8
    seed: int = 0
    workers: int = 1
    output: str | Path | None = None

    def __post_init__(self):
        if int(self.gamma_range[2]) < 1:
            raise ValueError("gamma steps must be >= 1")
        if self.p_values is not None:
            object.__setattr__(self, "p_values", tuple(float(p) for p in self.p_values))
            if any(not 0.0 <= p <= 0.5 for p in self.p_values):
                raise ValueError("crossover probabilities must lie in [0, 0.5]")

    @property
    def gammas(self) -> np.ndarray:
        lo, hi, n = self.gamma_range
        return np.linspace(float(lo), float(hi), int(n))


@dataclass(frozen=True)
class SweepRow:
    p: float
    gamma: float
    ub_general: float
    ub_closed_form: float
    lb: float
    lb_std_error: float
    gamma_min: float
    gamma_max_estimate: float
    status: str


def derive_seed(seed: int, *key: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=key).generate_state(1, np.uint64)[0])


def loop_pair_costs(chain: PrunedChain) -> tuple[float, float, float] | None:
    """Edge costs ``(k(s1|s1), k(s2|s1), k(s1|s2))`` when the chain has the
    self-loop-plus-two-cycle shape the closed form covers, else ``None``."""
    if chain.n_states != 2:
        return None
    adj = chain.adjacency
    if not (adj[0, 0] and adj[0, 1] and adj[1, 0] and not adj[1, 1]):
        return None
    K = chain.cost
    return float(K[0, 0]), float(K[0, 1]), float(K[1, 0])


def _gamma_max_task(chain, cycles, n_sim, restarts, seed):
    return gamma_max(chain, n_sim=n_sim, restarts=restarts, seed=seed, cycles=cycles)


def _point_task(chain: PrunedChain, cycles: Sequence[Cycle], p, gamma, costs, n_sim, restarts, seed):
    gmin = gamma_min(cycles)
    if gamma < gmin:
        return 0.0, (0.0 if costs is not None else math.nan), 0.0, 0.0, "infeasible"
    ub = upper_bound(chain, cycles, gamma)
    cf = math.nan
    if costs is not None and not math.isnan(p):
        cf = closed_form_upper_bound(BscExample(p, costs, gamma)).value
    lb = optimize_lower_bound(chain, gamma, n_sim=n_sim, restarts=restarts, seed=seed, cycles=cycles)
    status = "ok" if ub.converged else "not-converged"
    return ub.value, cf, lb.value, lb.std_error, status


def run_sweep(config: SweepConfig) -> list[SweepRow]:
    """Upper and lower bounds on a ``(p, gamma)`` grid.

    Rows come back in grid order whatever the worker count.  Budgets below
    the cheapest cycle are reported as infeasible with zero rate; budgets past
    the estimated saturation point are computed and marked ``saturated``.
    """
    base = load_channel(config.channel)
    p_list = list(config.p_values) if config.p_values is not None else [math.nan]
    setups = []
    for p in p_list:
        ch = base if math.isnan(p) else with_emission(base, bsc_emission(p))
        chain = prune(ch)
        cycles = enumerate_cycles(chain)
        costs = loop_pair_costs(chain) if not math.isnan(p) else None
        setups.append((p, chain, cycles, costs))
    gammas = config.gammas

    pool = ProcessPoolExecutor(config.workers) if config.workers > 1 else None
    submit = pool.submit if pool else (lambda f, *a: _Done(f(*a)))
    try:
        gmax_futs = [
            submit(_gamma_max_task, chain, cycles, config.n_sim, config.restarts, derive_seed(config.seed, i, 0))
            for i, (_, chain, cycles, _) in enumerate(setups)
        ]
        point_futs = [
            [
                submit(_point_task, chain, cycles, p, float(g), costs, config.n_sim, config.restarts,
                       derive_seed(config.seed, i, j + 1))
                for j, g in enumerate(gammas)
            ]
            for i, (p, chain, cycles, costs) in enumerate(setups)
        ]
        rows = []
        for i, (p, chain, cycles, costs) in enumerate(setups):
            gmin = gamma_min(cycles)
            gmax = gmax_futs[i].result()
            for j, g in enumerate(gammas):
                ub, cf, lb, se, status = point_futs[i][j].result()
                if status == "ok" and g > gmax:
                    status = "saturated"
                rows.append(SweepRow(float(p), float(g), ub, cf, lb, se, gmin, gmax, status))
    finally:
        if pool:
            pool.shutdown()
    return rows


class _Done:
    def __init__(self, value):
        self._value = value

    def result(self):
        return self._value


def _fmt(v) -> str:
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return str(v)


def _write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    buf = io.StringIO()
    buf.write(SCHEMA_LINE + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    path.write_text(buf.getvalue(), encoding="utf-8")


def series_name(path: Path, p: float) -> Path:
    tag = "general" if math.isnan(p) else f"p{p:g}"
    return path.with_name(f"{path.stem}_{tag}{path.suffix or '.csv'}")


def emit_plotdata(rows: Sequence[SweepRow], path: str | Path) -> list[Path]:
    """Write the full table plus one ``gamma``-indexed series file per ``p``.

    Existing files are overwritten.  Returns the paths written.
    """
    path = Path(path)
    header = [f.name for f in fields(SweepRow)]
    _write_csv(path, header, [astuple_row(r) for r in rows])
    written = [path]
    by_p: dict[str, list[SweepRow]] = {}
    for r in rows:
        by_p.setdefault(repr(r.p), []).append(r)
    cols = ["gamma", *RATE_COLUMNS, "status"]
    for group in by_p.values():
        out = series_name(path, group[0].p)
        _write_csv(out, cols, [[getattr(r, c) for c in cols] for r in group])
        written.append(out)
    return written


def astuple_row(r: SweepRow) -> list:
    return list(asdict(r).values())


def read_table(path: str | Path) -> list[SweepRow]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != SCHEMA_LINE:
        raise ValueError(f"{path}: missing '{SCHEMA_LINE}' header")
    reader = csv.DictReader(lines[1:])
    rows = []
    for rec in reader:
        vals = {}
        for f in fields(SweepRow):
            raw = rec[f.name]
            vals[f.name] = raw if f.name == "status" else (math.nan if raw == "" else float(raw))
        rows.append(SweepRow(**vals))
    return rows


def scale_rates(rows: Sequence[SweepRow], factor: float) -> list[SweepRow]:
    """Rescale every rate column, e.g. by ``ln 2`` to report nats."""
    out = []
    for r in rows:
        d = asdict(r)
        for c in RATE_COLUMNS:
            d[c] = d[c] * factor
        out.append(SweepRow(**d))
    return out
