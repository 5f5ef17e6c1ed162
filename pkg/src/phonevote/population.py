"""Voter behaviour: who prefers whom, when they call, how they fight back."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .domain import (
    CandidateId,
    ConfigError,
    DeviceId,
    Forgery,
    ReceiptInput,
    SpeakerId,
    VoterId,
)


@dataclass(frozen=True)
class VoterAgent:
    voter: VoterId
    true_choice: CandidateId
    wants_receipt: bool
    region: int
    device: int
    defection_prob: float = 1.0
    revote_rate: float = 0.0
    # Half-open [start, end) intervals during which the voter cannot reach a phone.
    blocked: tuple[tuple[float, float], ...] = ()
    participates: bool = True
    # Type II/III voters vote through another channel.
    phone_voter: bool = True

    @property
    def device_id(self) -> DeviceId:
        return DeviceId(self.device, self.region)

    def has_phone(self, t: float) -> bool:
        return not any(lo <= t < hi for lo, hi in self.blocked)


@dataclass(frozen=True)
class SessionIntent:
    """A planned call. The harness turns it into an authority session."""

    time: float
    voter: VoterId
    device: DeviceId
    candidate: CandidateId
    speaker: SpeakerId
    receipt_input: ReceiptInput = ReceiptInput.SKIP
    scrutiny_request: bool = False
    forgery: Optional[Forgery] = None
    correct_secret: bool = True
    echo_quality: float = 1.0
    origin: str = "honest"


@dataclass(frozen=True)
class PopulationConfig:
    p_receipt: float = 0.5
    revote_rate: float = 0.1
    defection_prob: float = 1.0
    n_regions: int = 1
    participation: float = 1.0
    excluded_fraction: float = 0.0
    vote_time_dist: dict = field(default_factory=lambda: {"kind": "uniform"})

    def __post_init__(self) -> None:
        problems = []
        for name in ("p_receipt", "defection_prob", "participation", "excluded_fraction"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                problems.append(f"{name}: must lie in [0, 1], got {v!r}")
        if self.revote_rate < 0:
            problems.append("revote_rate: must be >= 0")
        if self.n_regions < 1:
            problems.append("n_regions: must be >= 1")
        kind = self.vote_time_dist.get("kind") if isinstance(self.vote_time_dist, dict) else None
        if kind not in ("uniform", "triangular"):
            problems.append("vote_time_dist.kind: must be 'uniform' or 'triangular'")
        if problems:
            raise ConfigError(problems)


def validate_weights(weights: Sequence[float], n_candidates: int) -> np.ndarray:
    if n_candidates < 2:
        raise ConfigError(["n_candidates: must be >= 2"])
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or len(w) != n_candidates:
        raise ConfigError([f"preference_weights: need {n_candidates} entries, got {len(w)}"])
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ConfigError(["preference_weights: entries must be finite and >= 0"])
    if abs(w.sum() - 1.0) > 1e-9:
        raise ConfigError([f"preference_weights: must sum to 1, got {w.sum()!r}"])
    return w


def generate_population(
    n_voters: int,
    n_candidates: int,
    preference_weights: Sequence[float],
    config: PopulationConfig,
    rng: np.random.Generator,
) -> list[VoterAgent]:
    if n_voters < 1:
        raise ConfigError(["n_voters: must be >= 1"])
    w = validate_weights(preference_weights, n_candidates)
    choices = rng.choice(n_candidates, size=n_voters, p=w)
    receipts = rng.random(n_voters) < config.p_receipt
    regions = rng.integers(config.n_regions, size=n_voters)
    participates = rng.random(n_voters) < config.participation
    excluded = rng.random(n_voters) < config.excluded_fraction
    return [
        VoterAgent(
            voter=i,
            true_choice=int(choices[i]),
            wants_receipt=bool(receipts[i]),
            region=int(regions[i]),
            device=i,
            defection_prob=config.defection_prob,
            revote_rate=config.revote_rate,
            participates=bool(participates[i]),
            phone_voter=not bool(excluded[i]),
        )
        for i in range(n_voters)
    ]


def _vote_time(tau: float, dist: dict, rng: np.random.Generator) -> float:
    if dist.get("kind", "uniform") == "triangular":
        # mode given as a fraction of tau
        return float(rng.triangular(0.0, float(dist.get("mode", 0.0)) * tau, tau))
    return float(rng.uniform(0.0, tau))


def honest_receipt_input(agent: VoterAgent) -> ReceiptInput:
    return ReceiptInput.YES if agent.wants_receipt else ReceiptInput.SKIP


def schedule_honest(
    agent: VoterAgent,
    tau: float,
    rng: np.random.Generator,
    vote_time_dist: Optional[dict] = None,
) -> list[SessionIntent]:
    """One call somewhere in ``[0, tau]`` for the voter's true choice."""
    t = _vote_time(tau, vote_time_dist or {"kind": "uniform"}, rng)
    return [
        SessionIntent(
            time=t,
            voter=agent.voter,
            device=agent.device_id,
            candidate=agent.true_choice,
            speaker=agent.voter,
            receipt_input=honest_receipt_input(agent),
        )
    ]


def react_revote(
    agent: VoterAgent,
    manipulation_observed_at: float,
    stop_bound: float,
    rng: np.random.Generator,
    *,
    request_scrutiny: bool = False,
) -> list[SessionIntent]:
    """Revotes of a voter who knows someone keeps voting in their name.

    Calls arrive as a Poisson process at ``agent.revote_rate`` per hour on
    ``[manipulation_observed_at, stop_bound]``; those falling while they have no
    phone are lost. The first surviving call also puts their id on high
    scrutiny when ``request_scrutiny`` is set.
    """
    span = stop_bound - manipulation_observed_at
    if agent.revote_rate <= 0 or span <= 0:
        return []
    n = int(rng.poisson(agent.revote_rate * span))
    times = np.sort(rng.uniform(manipulation_observed_at, stop_bound, size=n))
    intents = []
    for t in times:
        t = float(t)
        if not agent.has_phone(t):
            continue
        intents.append(
            SessionIntent(
                time=t,
                voter=agent.voter,
                device=agent.device_id,
                candidate=agent.true_choice,
                speaker=agent.voter,
                receipt_input=honest_receipt_input(agent),
                scrutiny_request=request_scrutiny and not intents,
                origin="revote",
            )
        )
    return intents


def region_population(agents: Sequence[VoterAgent], n_regions: int) -> dict[int, int]:
    counts = {r: 0 for r in range(n_regions)}
    for a in agents:
        if a.phone_voter:
            counts[a.region] += 1
    return counts
