"""Attack strategies and what they cost.

A strategy is planned up front from public knowledge only. The adversary
knows ``tau`` and ``window`` but not the sampled stop time, and gets no
feedback on whether any call authenticated. This module never sees
``auth_ok`` or any other authority state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Mapping, Optional, Sequence

import numpy as np

from .domain import CandidateId, ConfigError, DeviceId, Forgery, ParameterError, VoterId
from .population import SessionIntent, VoterAgent, honest_receipt_input, react_revote

# Adversary-owned phones get ids far above any voter's device.
ADVERSARY_DEVICE_BASE = 1_000_000_000

DEFAULT_UNIT_COSTS: dict[str, float] = {
    "secret": 1.0,
    "bribe": 1.0,
    "voice_sample": 1.0,
    "forged_call": 1.0,
    "sequester_hour": 1.0,
    "jam_region_hour": 1.0,
    "intimidation": 1.0,
}


class PlanError(ParameterError):
    pass


class Variant(str, Enum):
    PROXY_BASELINE = "proxy_baseline"
    VOTE_BUYING = "vote_buying"
    VOICE_FORGERY = "voice_forgery"
    SEQUESTER = "sequester"
    DENIAL = "denial"
    BLUFF = "bluff"


@dataclass(frozen=True)
class Strategy:
    variant: Variant
    # Explicit voter (or, for denial, region) ids; None means "choose for me".
    targets: Optional[tuple[int, ...]] = None
    n_targets: Optional[int] = None
    candidate: CandidateId = 0
    params: Mapping[str, Any] = field(default_factory=dict)
    unit_costs: Mapping[str, float] = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: Mapping[str, Any], path: str = "adversary") -> "Strategy":
        problems = []
        try:
            variant = Variant(d.get("variant"))
        except ValueError:
            problems.append(f"{path}.variant: unknown variant {d.get('variant')!r}")
            variant = None
        raw = d.get("targets")
        targets = n_targets = None
        if isinstance(raw, list):
            if not all(isinstance(t, int) and t >= 0 for t in raw):
                problems.append(f"{path}.targets: ids must be non-negative integers")
            else:
                targets = tuple(raw)
        elif isinstance(raw, int) and not isinstance(raw, bool):
            n_targets = raw
        elif isinstance(raw, dict) and "count" in raw:
            n_targets = int(raw["count"])
        elif raw is not None:
            problems.append(f"{path}.targets: expected a list of ids, a count, or {{'count': k}}")
        params = dict(d.get("params") or {})
        costs = dict(d.get("unit_costs") or {})
        for k, v in costs.items():
            if not isinstance(v, (int, float)) or v < 0:
                problems.append(f"{path}.unit_costs.{k}: must be a number >= 0")
        if problems:
            raise ConfigError(problems)
        return cls(
            variant=variant,
            targets=targets,
            n_targets=n_targets,
            candidate=int(params.pop("candidate", d.get("candidate", 0))),
            params=params,
            unit_costs=costs,
        )

    def with_params(self, **updates) -> "Strategy":
        return replace(self, params={**self.params, **updates})


@dataclass(frozen=True)
class Action:
    """One billable adversary action.

    ``time``/``end`` bound actions that last (sequestering, jamming) or happen
    at a moment (a forged call). Up-front purchases leave both as ``None``.
    """

    kind: str
    volume: float
    time: Optional[float] = None
    end: Optional[float] = None
    target: Optional[int] = None


@dataclass
class AttackPlan:
    strategy: Strategy
    targets: tuple[int, ...]
    intents: list[SessionIntent] = field(default_factory=list)
    overrides: dict[VoterId, VoterAgent] = field(default_factory=dict)
    # Voters whose ordinary honest call is replaced by the plan.
    replaces_honest: set[VoterId] = field(default_factory=set)
    # (regions, start, end): nothing gets through from these regions meanwhile.
    jams: list[tuple[frozenset[int], float, float]] = field(default_factory=list)
    actions: list[Action] = field(default_factory=list)

    def jammed(self, region: int, t: float) -> bool:
        return any(region in regions and lo <= t < hi for regions, lo, hi in self.jams)


@dataclass
class CostLedger:
    costs: dict[str, float]
    total: float
    detection_events: list = field(default_factory=list)


def _p(strategy: Strategy, key: str, default):
    return strategy.params.get(key, default)


def _params(strategy: Strategy, tau: float, window: float) -> dict:
    s = strategy
    v = s.variant
    believed_stop = float(_p(s, "believed_stop", tau + window))
    out: dict[str, Any] = {"believed_stop": believed_stop}
    if v is Variant.PROXY_BASELINE:
        out["vote_time"] = float(_p(s, "vote_time", tau))
    elif v is Variant.VOTE_BUYING:
        out["agreed_time"] = float(_p(s, "agreed_time", tau / 2))
        if not 0 <= out["agreed_time"] < tau:
            raise PlanError("vote_buying.agreed_time must lie in [0, tau)")
    elif v is Variant.VOICE_FORGERY:
        out["forge_start"] = float(_p(s, "forge_start", tau / 2))
        out["forge_rate"] = float(_p(s, "forge_rate", 0.1))
        if out["forge_rate"] <= 0:
            raise PlanError("voice_forgery.forge_rate must be > 0")
        out["n_calls"] = max(0, math.ceil((believed_stop - out["forge_start"]) * out["forge_rate"]))
    elif v is Variant.SEQUESTER:
        out["start"] = float(_p(s, "start", tau))
        out["end"] = float(_p(s, "end", tau + window))
        if not out["end"] > out["start"] >= 0:
            raise PlanError("sequester needs end > start >= 0")
    elif v is Variant.DENIAL:
        out["start"] = float(_p(s, "start", 0.0))
        out["end"] = float(_p(s, "end", tau + window))
        if not out["end"] > out["start"] >= 0:
            raise PlanError("denial needs end > start >= 0")
    return out


def per_target_cost(strategy: Strategy, tau: float, window: float, unit_costs: Mapping[str, float]) -> float:
    """Planned cost of one target, assuming the adversary must cover the whole window."""
    c = {**DEFAULT_UNIT_COSTS, **unit_costs, **strategy.unit_costs}
    p = _params(strategy, tau, window)
    v = strategy.variant
    if v is Variant.PROXY_BASELINE:
        return c["secret"]
    if v is Variant.VOTE_BUYING:
        return c["bribe"]
    if v is Variant.VOICE_FORGERY:
        return c["secret"] + c["voice_sample"] + c["forged_call"] * p["n_calls"]
    if v is Variant.SEQUESTER:
        return c["sequester_hour"] * (p["end"] - p["start"])
    if v is Variant.DENIAL:
        return c["jam_region_hour"] * (p["end"] - p["start"])
    return c["intimidation"]


def _resolve_targets(
    strategy: Strategy,
    population: Sequence[VoterAgent],
    n_regions: int,
    n_wanted: Optional[int],
    rng: np.random.Generator,
) -> tuple[int, ...]:
    if strategy.variant is Variant.DENIAL:
        universe = list(range(n_regions))
        eligible = universe
    else:
        universe = [a.voter for a in population]
        # Supporters need no persuading; type II/III voters are not on the phone system.
        eligible = [
            a.voter for a in population
            if a.true_choice != strategy.candidate and a.phone_voter and a.participates
        ]
    if strategy.targets is not None:
        known = set(universe)
        bad = [t for t in strategy.targets if t not in known]
        if bad:
            what = "regions" if strategy.variant is Variant.DENIAL else "registered voters"
            raise PlanError(f"targets not among {what}: {bad[:5]}")
        return tuple(dict.fromkeys(strategy.targets))
    if not n_wanted:
        return ()
    order = rng.permutation(len(eligible))
    return tuple(int(eligible[i]) for i in order[:n_wanted])


def _adversary_device(strategy: Strategy, k: int) -> DeviceId:
    n_devices = max(1, int(_p(strategy, "n_devices", 1)))
    region = int(_p(strategy, "device_region", 0))
    return DeviceId(ADVERSARY_DEVICE_BASE + k % n_devices, region)


def plan_actions(
    strategy: Strategy,
    population: Sequence[VoterAgent],
    tau: float,
    window: float,
    rng: np.random.Generator,
    *,
    n_regions: int = 1,
    unit_costs: Optional[Mapping[str, float]] = None,
) -> AttackPlan:
    """Turn a strategy into calls, behaviour overrides and billable actions.

    Targets come from ``strategy.targets``, else ``strategy.n_targets``,
    else as many as ``params['budget']`` buys at :func:`per_target_cost`.
    """
    unit_costs = unit_costs or {}
    p = _params(strategy, tau, window)
    v = strategy.variant
    n_wanted = strategy.n_targets
    if n_wanted is None and "budget" in strategy.params:
        unit = per_target_cost(strategy, tau, window, unit_costs)
        n_wanted = int(float(strategy.params["budget"]) // unit) if unit > 0 else len(population)
    if v is Variant.BLUFF:
        n_punished = int(_p(strategy, "n_punished", n_wanted if n_wanted is not None else 1))
        plan = AttackPlan(strategy, ())
        if n_punished:
            plan.actions.append(Action("intimidation", float(n_punished)))
        return plan

    targets = _resolve_targets(strategy, population, n_regions, n_wanted, rng)
    plan = AttackPlan(strategy, targets)
    by_id = {a.voter: a for a in population}
    adv = strategy.candidate

    if v is Variant.DENIAL:
        if targets:
            plan.jams.append((frozenset(targets), p["start"], p["end"]))
        for r in targets:
            plan.actions.append(Action("jam_region_hour", p["end"] - p["start"], p["start"], p["end"], r))
        return plan

    for k, t in enumerate(targets):
        agent = by_id[t]
        if v is Variant.PROXY_BASELINE:
            plan.actions.append(Action("secret", 1.0, target=t))
            plan.intents.append(
                SessionIntent(
                    time=p["vote_time"], voter=t, device=_adversary_device(strategy, k),
                    candidate=adv, speaker=f"adv-{k}", origin="adversary",
                )
            )
        elif v is Variant.VOTE_BUYING:
            plan.actions.append(Action("bribe", 1.0, target=t))
            plan.replaces_honest.add(t)
            plan.intents.append(
                SessionIntent(
                    time=p["agreed_time"], voter=t, device=agent.device_id,
                    candidate=adv, speaker=t, origin="coerced",
                )
            )
            if rng.random() < agent.defection_prob:
                plan.intents.append(
                    SessionIntent(
                        time=float(rng.uniform(p["agreed_time"], tau)), voter=t,
                        device=agent.device_id, candidate=agent.true_choice, speaker=t,
                        receipt_input=honest_receipt_input(agent), origin="defection",
                    )
                )
        elif v is Variant.VOICE_FORGERY:
            _plan_forgery(plan, strategy, p, agent, k, tau, window, rng)
        elif v is Variant.SEQUESTER:
            start, end = p["start"], p["end"]
            plan.actions.append(Action("sequester_hour", end - start, start, end, t))
            plan.overrides[t] = replace(agent, blocked=agent.blocked + ((start, end),))
            plan.intents.append(
                SessionIntent(
                    time=start, voter=t, device=agent.device_id, candidate=adv,
                    speaker=t, origin="coerced",
                )
            )
            if rng.random() < agent.defection_prob:
                plan.intents.append(
                    SessionIntent(
                        time=end, voter=t, device=agent.device_id, candidate=agent.true_choice,
                        speaker=t, receipt_input=honest_receipt_input(agent), origin="defection",
                    )
                )
    return plan


def _plan_forgery(plan, strategy, p, agent, k, tau, window, rng) -> None:
    t = agent.voter
    plan.actions.append(Action("secret", 1.0, target=t))
    plan.actions.append(Action("voice_sample", 1.0, target=t))
    tag = _p(strategy, "signature_tag", None)
    sig_rate = float(_p(strategy, "signature_rate", 1.0 if tag is not None else 0.0))
    tuned = _p(strategy, "tuned_against", 0)
    automated = bool(_p(strategy, "automated", False))
    forger = int(_p(strategy, "forger_id", 0))
    # A voter who sold their credentials may have handed over a false secret.
    real_secret = not (rng.random() < float(_p(strategy, "p_false_secret", 0.0)))
    for j in range(p["n_calls"]):
        when = p["forge_start"] + j / p["forge_rate"]
        if when >= p["believed_stop"]:
            break
        stamped = tag is not None and rng.random() < sig_rate
        plan.intents.append(
            SessionIntent(
                time=when, voter=t, device=_adversary_device(strategy, k * p["n_calls"] + j),
                candidate=strategy.candidate, speaker=f"adv-{k}",
                forgery=Forgery(forger, int(tag) if stamped else None, tuned, automated),
                correct_secret=real_secret, origin="adversary",
            )
        )
        plan.actions.append(Action("forged_call", 1.0, when, target=t))
    aware_at = p["forge_start"] + float(_p(strategy, "awareness_delay", 0.0))
    plan.intents.extend(
        react_revote(
            agent, aware_at, tau + window, rng,
            request_scrutiny=bool(_p(strategy, "request_scrutiny", True)),
        )
    )


def execute_actions(actions: Sequence[Action], stop_time: float) -> list[Action]:
    """What was actually spent once the election closed at ``stop_time``.

    Holding or jamming ends at the (public) close; calls after it never happen.
    """
    done = []
    for a in actions:
        if a.time is None:
            done.append(a)
        elif a.end is None:
            if a.time < stop_time:
                done.append(a)
        else:
            held = max(0.0, min(a.end, stop_time) - a.time)
            done.append(replace(a, volume=held))
    return done


def settle_cost(
    strategy: Optional[Strategy],
    actions: Sequence[Action],
    unit_costs: Optional[Mapping[str, float]] = None,
    detection_events: Sequence = (),
) -> CostLedger:
    c = {**DEFAULT_UNIT_COSTS, **(unit_costs or {})}
    if strategy is not None:
        c.update(strategy.unit_costs)
    costs: dict[str, float] = {}
    for a in actions:
        if a.kind not in c:
            raise PlanError(f"no unit cost for action {a.kind!r}")
        costs[a.kind] = costs.get(a.kind, 0.0) + c[a.kind] * a.volume
    return CostLedger(costs=costs, total=float(sum(costs.values())), detection_events=list(detection_events))


__all__ = [
    "ADVERSARY_DEVICE_BASE",
    "Action",
    "AttackPlan",
    "CostLedger",
    "DEFAULT_UNIT_COSTS",
    "PlanError",
    "Strategy",
    "Variant",
    "execute_actions",
    "per_target_cost",
    "plan_actions",
    "settle_cost",
]
