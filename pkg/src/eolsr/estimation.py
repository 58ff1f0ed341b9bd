"""Perceived residual energy: report histories, consumption rates, estimation modes.

Every node keeps a :class:`PerceivedEnergyRepo` of what other nodes reported
about their own battery.  How a stale report is turned into a current
estimate depends on the :class:`~eolsr.model.EstimationMode`:

* ``Ideal`` reads the simulator's ground truth.
* ``Realistic`` returns the last reported value unchanged.
* ``Prediction`` extrapolates linearly with the subject's consumption rate,
  which needs two reports with distinct timestamps.
* ``SmartPrediction`` additionally fills the gap while that rate is unknown,
  first with the mean of the other rates this observer knows, then with the
  observer's own rate.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, NamedTuple, Optional, Tuple

from .model import EstimationMode, NodeId, SimTime

HISTORY_LIMIT = 4


class EnergyReport(NamedTuple):
    subject: NodeId
    energy: float
    reported_at: SimTime
    received_at: SimTime


@dataclass
class PerceivedEnergyRepo:
    owner: NodeId
    limit: int = HISTORY_LIMIT
    history: Dict[NodeId, List[EnergyReport]] = field(default_factory=dict)
    rate: Dict[NodeId, float] = field(default_factory=dict)  # J/s, known rates only
    own_rate: Optional[float] = None

    def __post_init__(self):
        if self.limit < 2:
            raise ValueError("history limit must keep at least two reports")

    def last(self, subject: NodeId) -> Optional[EnergyReport]:
        h = self.history.get(subject)
        return h[-1] if h else None

    def subjects(self) -> Iterable[NodeId]:
        return self.history.keys()


def record_report(repo: PerceivedEnergyRepo, r: EnergyReport) -> PerceivedEnergyRepo:
    """Append ``r`` to the subject's history and refresh its consumption rate.

    Reports older than (or as old as) the newest stored one are ignored; the
    rate always comes from the two most recent reports.
    """
    if r.energy < 0:
        raise ValueError("reported energy must be >= 0")
    if r.received_at < r.reported_at:
        raise ValueError("report received before it was emitted")
    if r.subject == repo.owner:
        return repo
    h = repo.history.get(r.subject)
    if h is None:
        repo.history[r.subject] = [r]
        return repo
    newest = h[-1]
    if r.reported_at <= newest.reported_at:
        return repo
    h.append(r)
    if len(h) > repo.limit:
        del h[0]
    dt = (r.reported_at - newest.reported_at) / 1000.0
    repo.rate[r.subject] = max(0.0, (newest.energy - r.energy) / dt)
    return repo


def mark_unreachable(repo: PerceivedEnergyRepo, subject: NodeId) -> PerceivedEnergyRepo:
    repo.history.pop(subject, None)
    repo.rate.pop(subject, None)
    return repo


def _extrapolate(last: EnergyReport, rate: float, now: SimTime) -> float:
    return max(0.0, last.energy - rate * (now - last.reported_at) / 1000.0)


def perceive_detail(
    repo: PerceivedEnergyRepo,
    subject: NodeId,
    now: SimTime,
    mode: EstimationMode,
    ground_truth: Optional[Mapping[NodeId, float]] = None,
    own_rate: Optional[float] = None,
) -> Tuple[Optional[float], bool]:
    """Like :func:`perceive`, also telling whether a rate adjustment was applied."""
    if mode is EstimationMode.IDEAL:
        if ground_truth is None:
            raise ValueError("Ideal mode needs ground truth")
        return ground_truth[subject], False
    last = repo.last(subject)
    if last is None:
        return None, False
    if mode is EstimationMode.REALISTIC:
        return last.energy, False
    rate = repo.rate.get(subject)
    if rate is None and mode is EstimationMode.SMART_PREDICTION:
        if repo.rate:
            rate = sum(repo.rate.values()) / len(repo.rate)
        else:
            rate = own_rate if own_rate is not None else repo.own_rate
    if rate is None:
        return last.energy, False
    return _extrapolate(last, rate, now), True


def perceive(
    repo: PerceivedEnergyRepo,
    subject: NodeId,
    now: SimTime,
    mode: EstimationMode,
    ground_truth: Optional[Mapping[NodeId, float]] = None,
    own_rate: Optional[float] = None,
) -> Optional[float]:
    """Current estimate of ``subject``'s residual energy in joules, or None if unknown."""
    return perceive_detail(repo, subject, now, mode, ground_truth, own_rate)[0]


@dataclass(frozen=True)
class InaccuracySample:
    observer: NodeId
    subject: NodeId
    at: SimTime
    perceived: float
    actual: float
    error: float
    adjusted: bool = False


def inaccuracy_snapshot(
    all_repos: Mapping[NodeId, PerceivedEnergyRepo],
    ledger: Mapping[NodeId, float],
    now: SimTime,
    initial_energy: float,
    mode: EstimationMode,
) -> List[InaccuracySample]:
    """One sample per (alive observer, alive subject with at least one report).

    ``ledger`` maps node -> actual residual joules; a node at 0 J is dead.
    The error is ``|perceived - actual| / initial_energy``.
    """
    if initial_energy <= 0:
        raise ValueError("initial_energy must be > 0")
    samples = []
    for observer in sorted(all_repos):
        if ledger[observer] <= 0:
            continue
        repo = all_repos[observer]
        for subject in sorted(repo.history):
            actual = ledger.get(subject, 0.0)
            if actual <= 0 or not repo.history[subject]:
                continue
            perceived, adjusted = perceive_detail(repo, subject, now, mode, ledger)
            samples.append(
                InaccuracySample(
                    observer, subject, now, perceived, actual,
                    abs(perceived - actual) / initial_energy, adjusted,
                )
            )
    return samples


def mean_error(samples: List[InaccuracySample]) -> Optional[float]:
    if not samples:
        return None
    return sum(s.error for s in samples) / len(samples)
