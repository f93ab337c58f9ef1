"""Lower bound for the summed absolute increments over several dates."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .dual_hedge import HedgePair, build_hedge
from .lower_coupling import BoundReport, CouplingMap, bound_report, primal_price
from .measures import Measure, MeasureError, decompose


class StepError(MeasureError):
    def __init__(self, step: int, cause: Exception):
        self.step = step
        self.cause = cause
        super().__init__(f"step {step}: {cause}")


@dataclass(frozen=True)
class MarginalSequence:
    measures: tuple[Measure, ...]

    def __post_init__(self):
        if len(self.measures) < 2:
            raise MeasureError("need at least two marginals")


@dataclass(frozen=True)
class SequenceBound:
    total: float
    prices: tuple[float, ...]
    reports: tuple[BoundReport, ...]
    hedges: tuple[HedgePair, ...]


def step_couplings(seq: MarginalSequence) -> list[CouplingMap]:
    out = []
    for i, (mu, nu) in enumerate(zip(seq.measures[:-1], seq.measures[1:]), start=1):
        try:
            out.append(CouplingMap(decompose(mu, nu)))
        except MeasureError as exc:
            raise StepError(i, exc) from exc
    return out


def bound_sequence(seq: MarginalSequence | Sequence[Measure], with_reports: bool = False, grid: int = 100) -> SequenceBound:
    """Sum of the single-period lower bounds; steps are numbered from 1."""
    if not isinstance(seq, MarginalSequence):
        seq = MarginalSequence(tuple(seq))
    maps = step_couplings(seq)
    prices = tuple(primal_price(c) for c in maps)
    reports = tuple(bound_report(c.pair, grid) for c in maps) if with_reports else ()
    hedges = tuple(build_hedge(c) for c in maps) if with_reports else ()
    total = 0.0
    for p in prices:
        total += p
    return SequenceBound(total, prices, reports, hedges)
