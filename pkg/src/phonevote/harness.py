"""Monte Carlo driver: configure, run replicated elections, sweep parameters.

Every replication owns named random streams derived from
``(master seed, replication index, stream name)``, so a replication's result
does not depend on which other replications run alongside it, and adding
an adversary never perturbs the honest voters' draws.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Iterable, Mapping, Optional, Sequence

import numpy as np

from .adversary import (
    Strategy,
    Variant,
    execute_actions,
    per_target_cost,
    plan_actions,
    settle_cost,
)
from .audit import (
    detect_false_counter,
    fraud_report,
    honest_reveals,
    multi_authority_count,
    partition_voters,
    reveal_counts,
)
from .authority import AuthMode, AuthorityState
from .domain import ConfigError, IntegrityError, ParameterError, SecretNumber, Utterance
from .population import (
    PopulationConfig,
    generate_population,
    region_population,
    schedule_honest,
    validate_weights,
)
from .stoptime import STOP_TIME_TAG, commit, sample_stop, verify_commitment
from .verify import PromptCorpus, RepetitionParams, VerifierEnsemble

STREAMS = ("stoptime", "setup", "population", "schedule", "verify", "adversary", "commit", "partition")

# Intents made by the voter: these need the voter's own phone.
_VOTER_ORIGINS = frozenset({"honest", "revote", "defection"})


def rng_stream(master: int, replication: int, name: str) -> np.random.Generator:
    key = int.from_bytes(hashlib.sha256(name.encode()).digest()[:4], "big")
    return np.random.default_rng(np.random.SeedSequence(int(master), spawn_key=(int(replication), key)))


@dataclass(frozen=True)
class AuditConfig:
    k_device: int = 10
    k_sig: int = 10
    min_expected: int = 50
    z_crit: float = 4.0


@dataclass(frozen=True)
class FalseCounting:
    authority: int = 0
    candidate: int = 0
    # Fraction of the authority's counted ballots moved to ``candidate``.
    inflation: float = 0.05


@dataclass(frozen=True)
class SimConfig:
    tau_hours: float = 200.0
    window_hours: float = 200.0
    n_voters: int = 1000
    n_candidates: int = 2
    n_regions: int = 1
    n_authorities: int = 1
    n_verifier_instances: int = 1
    eer: float = 0.02
    sigma: float = 1.0
    mismatch_penalty: float = 1.0
    threshold_shift: float = 0.0
    p_human: float = 0.99
    p_machine: float = 0.0
    p_receipt: float = 0.5
    revote_rate: float = 0.1
    defection_prob: float = 1.0
    participation: float = 1.0
    excluded_fraction: float = 0.0
    echo_quality: float = 1.0
    preference_weights: tuple[float, ...] = (0.5, 0.5)
    vote_time_dist: Mapping[str, Any] = field(default_factory=lambda: {"kind": "uniform"})
    mode: str = "final_protocol"
    adversary: Optional[Strategy] = None
    unit_costs: Mapping[str, float] = field(default_factory=dict)
    master_seed: int = 0
    replications: int = 1
    corpus_size: int = 10_000
    audit: AuditConfig = field(default_factory=AuditConfig)
    false_counting: Optional[FalseCounting] = None
    election_id: str = "election"

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "SimConfig":
        """Build and validate a config, reporting every bad key path at once."""
        problems: list[str] = []
        d = dict(d)
        kw: dict[str, Any] = {}
        scalars = {
            "tau_hours": float, "window_hours": float, "n_voters": int, "n_candidates": int,
            "n_regions": int, "n_authorities": int, "n_verifier_instances": int, "eer": float,
            "sigma": float, "mismatch_penalty": float, "threshold_shift": float, "p_human": float,
            "p_machine": float, "p_receipt": float, "revote_rate": float, "defection_prob": float,
            "participation": float, "excluded_fraction": float, "echo_quality": float,
            "mode": str, "replications": int, "corpus_size": int, "election_id": str,
        }
        for key, typ in scalars.items():
            if key in d:
                v = d.pop(key)
                if typ in (int, float) and (isinstance(v, bool) or not isinstance(v, (int, float))):
                    problems.append(f"{key}: expected a number, got {v!r}")
                elif typ is int and isinstance(v, float) and not v.is_integer():
                    problems.append(f"{key}: expected an integer, got {v!r}")
                elif typ is str and not isinstance(v, str):
                    problems.append(f"{key}: expected a string, got {v!r}")
                else:
                    kw[key] = typ(v)
        if "preference_weights" in d:
            w = d.pop("preference_weights")
            if not isinstance(w, list) or not all(isinstance(x, (int, float)) for x in w):
                problems.append("preference_weights: expected a list of numbers")
            else:
                kw["preference_weights"] = tuple(float(x) for x in w)
        if "vote_time_dist" in d:
            kw["vote_time_dist"] = dict(d.pop("vote_time_dist"))
        if "unit_costs" in d:
            uc = d.pop("unit_costs") or {}
            for k, v in uc.items():
                if isinstance(v, bool) or not isinstance(v, (int, float)) or v < 0:
                    problems.append(f"unit_costs.{k}: must be a number >= 0")
            kw["unit_costs"] = {k: float(v) for k, v in uc.items() if isinstance(v, (int, float))}
        if "seeds" in d:
            seeds = d.pop("seeds") or {}
            m = seeds.get("master", 0)
            if isinstance(m, bool) or not isinstance(m, int) or m < 0:
                problems.append("seeds.master: expected a non-negative integer")
            else:
                kw["master_seed"] = m
            extra = set(seeds) - {"master"}
            problems += [f"seeds.{k}: unknown key" for k in sorted(extra)]
        if "audit" in d:
            a = dict(d.pop("audit") or {})
            names = {f.name for f in dataclasses.fields(AuditConfig)}
            problems += [f"audit.{k}: unknown key" for k in sorted(set(a) - names)]
            try:
                kw["audit"] = AuditConfig(**{k: v for k, v in a.items() if k in names})
            except TypeError as exc:
                problems.append(f"audit: {exc}")
        if "false_counting" in d:
            fc = d.pop("false_counting")
            if fc is not None:
                names = {f.name for f in dataclasses.fields(FalseCounting)}
                problems += [f"false_counting.{k}: unknown key" for k in sorted(set(fc) - names)]
                kw["false_counting"] = FalseCounting(**{k: v for k, v in fc.items() if k in names})
        if "adversary" in d:
            adv = d.pop("adversary")
            if adv is not None:
                if not isinstance(adv, Mapping):
                    problems.append("adversary: expected an object")
                else:
                    unknown = set(adv) - {"variant", "targets", "params", "unit_costs", "candidate"}
                    problems += [f"adversary.{k}: unknown key" for k in sorted(unknown)]
                    try:
                        kw["adversary"] = Strategy.from_dict(adv)
                    except ConfigError as exc:
                        problems += exc.problems
        problems += [f"{k}: unknown key" for k in sorted(d)]
        cfg = cls(**kw)
        try:
            cfg.validate()
        except ConfigError as exc:
            problems += exc.problems
        if problems:
            raise ConfigError(problems)
        return cfg

    def validate(self) -> None:
        problems = []
        for name in ("eer", "p_human", "p_machine", "p_receipt", "defection_prob",
                     "participation", "excluded_fraction", "echo_quality"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                problems.append(f"{name}: must lie in [0, 1], got {v!r}")
        if self.eer > 0.5:
            problems.append("eer: must be <= 0.5")
        if self.p_machine > self.p_human:
            problems.append("p_machine: must not exceed p_human")
        if self.tau_hours < 0:
            problems.append("tau_hours: must be >= 0")
        if self.window_hours <= 0:
            problems.append("window_hours: must be > 0")
        if self.sigma <= 0:
            problems.append("sigma: must be > 0")
        if self.revote_rate < 0:
            problems.append("revote_rate: must be >= 0")
        if self.mismatch_penalty < 0:
            problems.append("mismatch_penalty: must be >= 0")
        for name, lo in (("n_voters", 1), ("n_regions", 1), ("n_authorities", 1),
                         ("n_verifier_instances", 1), ("replications", 1), ("corpus_size", 1)):
            if getattr(self, name) < lo:
                problems.append(f"{name}: must be >= {lo}")
        if self.n_authorities > self.n_voters:
            problems.append("n_authorities: must not exceed n_voters")
        if self.mode not in {m.value for m in AuthMode}:
            problems.append(f"mode: must be one of {[m.value for m in AuthMode]}")
        try:
            validate_weights(self.preference_weights, self.n_candidates)
        except ConfigError as exc:
            problems += exc.problems
        if self.adversary is not None and not 0 <= self.adversary.candidate < self.n_candidates:
            problems.append("adversary.params.candidate: not a valid candidate index")
        fc = self.false_counting
        if fc is not None:
            if not 0 <= fc.authority < self.n_authorities:
                problems.append("false_counting.authority: no such authority")
            if not 0 <= fc.candidate < self.n_candidates:
                problems.append("false_counting.candidate: no such candidate")
            if not 0.0 <= fc.inflation <= 1.0:
                problems.append("false_counting.inflation: must lie in [0, 1]")
        a = self.audit
        if a.k_device < 1:
            problems.append("audit.k_device: must be >= 1")
        if a.k_sig < 2:
            problems.append("audit.k_sig: must be >= 2")
        if problems:
            raise ConfigError(problems)

    def population_config(self) -> PopulationConfig:
        return PopulationConfig(
            p_receipt=self.p_receipt,
            revote_rate=self.revote_rate,
            defection_prob=self.defection_prob,
            n_regions=self.n_regions,
            participation=self.participation,
            excluded_fraction=self.excluded_fraction,
            vote_time_dist=dict(self.vote_time_dist),
        )


def load_config(path: str) -> SimConfig:
    with open(path, encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError([f"<document>: invalid JSON ({exc})"]) from exc
    if not isinstance(raw, dict):
        raise ConfigError(["<document>: expected a JSON object"])
    return SimConfig.from_dict(raw)


@dataclass
class ElectionResult:
    replication: int
    official_tally: list[int]
    true_preference_tally: list[int]
    winner: int
    true_winner: int
    flipped: Optional[bool]
    margin: int
    adversary_variant: Optional[str]
    adversary_cost: float
    cost_breakdown: dict[str, float]
    n_targets: int
    target_success: Optional[float]
    detected: bool
    detections: dict
    false_counter_flags: list[dict]
    receipts_sent: int
    stop_time: float
    commitments: dict
    n_events: int
    n_authentic_events: int

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))


def winner_of(tally: Sequence[int]) -> int:
    """Most votes; ties go to the lowest candidate index."""
    best = max(tally)
    return next(i for i, c in enumerate(tally) if c == best)


def _margin(tally: Sequence[int]) -> int:
    s = sorted(tally, reverse=True)
    return int(s[0] - s[1]) if len(s) > 1 else int(s[0])


@lru_cache(maxsize=8)
def _corpus(size: int) -> PromptCorpus:
    return PromptCorpus.synthetic(size)


def _ensemble(config: SimConfig) -> VerifierEnsemble:
    ens = VerifierEnsemble.build(
        config.n_verifier_instances, config.eer, config.sigma, config.mismatch_penalty
    )
    if config.threshold_shift:
        ens = VerifierEnsemble(tuple(m.with_threshold(m.threshold + config.threshold_shift) for m in ens.instances))
    return ens


def _inflate(counts: list[int], candidate: int, inflation: float) -> list[int]:
    """Move ``inflation`` of the ballots to ``candidate``, taking from the biggest rivals first."""
    out = list(counts)
    to_move = int(round(inflation * sum(counts)))
    while to_move > 0:
        donors = [c for c in range(len(out)) if c != candidate and out[c] > 0]
        if not donors:
            break
        d = max(donors, key=lambda c: out[c])
        out[d] -= 1
        out[candidate] += 1
        to_move -= 1
    return out


def run_election(config: SimConfig, replication_index: int = 0) -> ElectionResult:
    rngs = {name: rng_stream(config.master_seed, replication_index, name) for name in STREAMS}
    tau, window = config.tau_hours, config.window_hours

    stop_plan = sample_stop(tau, window, rngs["stoptime"])
    stop = stop_plan.stop_time
    stop_commitment = commit(stop_plan.payload(), rngs["commit"], tag=STOP_TIME_TAG)

    agents = generate_population(
        config.n_voters, config.n_candidates, config.preference_weights,
        config.population_config(), rngs["population"],
    )
    mode = AuthMode(config.mode)
    authority = AuthorityState.enroll(
        range(config.n_voters), rngs["setup"],
        mode=mode,
        ensemble=_ensemble(config),
        repetition=RepetitionParams(config.p_human, config.p_machine),
        corpus=_corpus(config.corpus_size),
        stop_time=stop,
        election_id=config.election_id,
    )

    # Honest schedules are drawn for every participating phone voter before any
    # adversary is considered, so the draws are identical with and without one.
    honest = {}
    for a in agents:
        if a.participates and a.phone_voter:
            honest[a.voter] = schedule_honest(a, tau, rngs["schedule"], config.vote_time_dist)

    plan = None
    if config.adversary is not None:
        plan = plan_actions(
            config.adversary, agents, tau, window, rngs["adversary"],
            n_regions=config.n_regions, unit_costs=config.unit_costs,
        )
    by_id = {a.voter: a for a in agents}
    if plan is not None:
        by_id.update(plan.overrides)

    intents = [it for v, its in honest.items() if plan is None or v not in plan.replaces_honest for it in its]
    if plan is not None:
        intents += plan.intents
    admitted = []
    for order, it in enumerate(intents):
        if it.time >= stop:
            continue
        if it.origin in _VOTER_ORIGINS and not by_id[it.voter].has_phone(it.time):
            continue
        if plan is not None and plan.jammed(it.device.region, it.time):
            continue
        admitted.append((it.time, order, it))
    admitted.sort(key=lambda x: (x[0], x[1]))

    vrng = rngs["verify"]
    for _, _, it in admitted:
        secret = authority.registry[it.voter].secret
        if not it.correct_secret:
            secret = SecretNumber(secret.value ^ 0x5DEECE66D)
        authority.run_call(
            claimed=it.voter,
            entered_secret=secret,
            device=it.device,
            time=it.time,
            utterance=Utterance(it.speaker, it.echo_quality * config.echo_quality, it.forgery),
            candidate=it.candidate,
            receipt_input=it.receipt_input,
            scrutiny=it.scrutiny_request,
            rng=vrng,
        )

    phone_tally = authority.tally(stop, config.n_candidates)
    official = [phone_tally[c] for c in range(config.n_candidates)]
    true_tally = [0] * config.n_candidates
    for a in agents:
        if a.participates:
            true_tally[a.true_choice] += 1
            if not a.phone_voter:
                official[a.true_choice] += 1

    report = fraud_report(
        authority.trace,
        region_population=region_population(agents, config.n_regions),
        high_scrutiny=authority.high_scrutiny_ids(),
        k_device=config.audit.k_device,
        k_sig=config.audit.k_sig,
        min_expected=config.audit.min_expected,
    )

    commitments = {
        "stop_time": verify_commitment(
            stop_commitment.digest, stop_plan.payload(), stop_commitment.nonce, tag=STOP_TIME_TAG
        ),
        "counts": [],
    }
    fc_flags = []
    if config.n_authorities >= 2:
        partition = partition_voters(config.n_voters, config.n_authorities, rngs["partition"])
        reported = None
        fc = config.false_counting
        if fc is not None:
            honest_counts = multi_authority_count(
                authority.trace, partition, stop, config.n_candidates
            ).tallies[fc.authority]
            reported = {fc.authority: _inflate(honest_counts, fc.candidate, fc.inflation)}
        mac = multi_authority_count(
            authority.trace, partition, stop, config.n_candidates, rngs["commit"], reported=reported
        )
        try:
            reveal_counts(mac, honest_reveals(mac))
        except IntegrityError:
            pass
        commitments["counts"] = list(mac.verified)
        if fc is None and mac.total() != [phone_tally[c] for c in range(config.n_candidates)]:
            raise IntegrityError("per-authority tallies do not add up to the global tally")
        if config.n_authorities >= 3:
            fc_flags = [dataclasses.asdict(f) for f in detect_false_counter(mac.tallies, z_crit=config.audit.z_crit)]

    detection_events = (
        [f"device:{f.device}" for f in report.flagged_devices]
        + [f"signature:{f.signature_tag}" for f in report.flagged_signatures]
        + [f"silent_region:{f.region}" for f in report.silent_regions]
    )

    winner = winner_of(official)
    true_winner = winner_of(true_tally)
    cost = 0.0
    breakdown: dict[str, float] = {}
    target_success = None
    n_targets = 0
    variant = None
    if plan is not None:
        variant = config.adversary.variant.value
        ledger = settle_cost(
            config.adversary, execute_actions(plan.actions, stop), config.unit_costs, detection_events
        )
        cost, breakdown = ledger.total, dict(sorted(ledger.costs.items()))
        n_targets = len(plan.targets)
        if plan.targets and config.adversary.variant not in (Variant.DENIAL, Variant.BLUFF):
            adv = config.adversary.candidate
            hits = 0
            for t in plan.targets:
                last = authority.registry[t].last_authentic_vote
                hits += last is not None and last[1] == adv
            target_success = hits / len(plan.targets)

    return ElectionResult(
        replication=replication_index,
        official_tally=official,
        true_preference_tally=true_tally,
        winner=winner,
        true_winner=true_winner,
        flipped=(winner != true_winner) if plan is not None else None,
        margin=_margin(official),
        adversary_variant=variant,
        adversary_cost=float(cost),
        cost_breakdown=breakdown,
        n_targets=n_targets,
        target_success=target_success,
        detected=report.any_flag or bool(fc_flags),
        detections=report.to_dict(),
        false_counter_flags=fc_flags,
        receipts_sent=len(authority.dispatch_receipts(stop)),
        stop_time=stop,
        commitments=commitments,
        n_events=len(authority.trace),
        n_authentic_events=sum(e.auth_ok for e in authority.trace),
    )


def run_replications(config: SimConfig, indices: Optional[Iterable[int]] = None) -> list[ElectionResult]:
    indices = range(config.replications) if indices is None else indices
    return [run_election(config, i) for i in indices]


# -- sweeps -------------------------------------------------------------------

AXES = ("n_voters", "bribe", "sequester_end", "eer")


def with_axis(config: SimConfig, axis: str, value: float) -> SimConfig:
    if axis == "n_voters":
        return dataclasses.replace(config, n_voters=int(value))
    if axis == "eer":
        return dataclasses.replace(config, eer=float(value))
    if axis == "bribe":
        adv = config.adversary
        if adv is not None:
            adv = dataclasses.replace(adv, unit_costs={**adv.unit_costs, "bribe": float(value)})
        return dataclasses.replace(config, unit_costs={**config.unit_costs, "bribe": float(value)}, adversary=adv)
    if axis == "sequester_end":
        if config.adversary is None or config.adversary.variant is not Variant.SEQUESTER:
            raise ParameterError("sequester_end sweeps need a sequester adversary")
        return dataclasses.replace(config, adversary=config.adversary.with_params(end=float(value)))
    raise ParameterError(f"unknown sweep axis {axis!r}; expected one of {AXES}")


def _mean_se(xs: Sequence[float]) -> tuple[float, float]:
    n = len(xs)
    if n == 0:
        return math.nan, math.nan
    m = float(np.mean(xs))
    se = float(np.std(xs, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return m, se


@dataclass
class SweepRow:
    axis: str
    axis_value: float
    replications: int
    flip_prob: float
    flip_se: float
    mean_cost: float
    cost_se: float
    detect_prob: float
    detect_se: float
    target_success: Optional[float]
    target_success_se: Optional[float]
    mean_margin: float

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def summarize(axis: str, value: float, results: Sequence[ElectionResult]) -> SweepRow:
    flips = [float(bool(r.flipped)) for r in results]
    p = float(np.mean(flips))
    n = len(results)
    costs = [r.adversary_cost for r in results]
    det = [float(r.detected) for r in results]
    succ = [r.target_success for r in results if r.target_success is not None]
    mc, cse = _mean_se(costs)
    dp = float(np.mean(det))
    ts, tse = _mean_se(succ) if succ else (None, None)
    return SweepRow(
        axis=axis,
        axis_value=value,
        replications=n,
        flip_prob=p,
        flip_se=math.sqrt(p * (1 - p) / n),
        mean_cost=mc,
        cost_se=cse,
        detect_prob=dp,
        detect_se=math.sqrt(dp * (1 - dp) / n),
        target_success=ts,
        target_success_se=tse,
        mean_margin=float(np.mean([r.margin for r in results])),
    )


def sweep(
    config: SimConfig, axis: str, values: Sequence[float], replications: Optional[int] = None
) -> list[SweepRow]:
    """Mean flip probability, cost and detection rate at each axis value.

    Every value reuses replication indices ``0..replications-1``, i.e. common
    random numbers across the sweep. Standard errors carry no
    multiple-comparison correction.
    """
    if axis not in AXES:
        raise ParameterError(f"unknown sweep axis {axis!r}; expected one of {AXES}")
    if len(values) < 1:
        raise ParameterError("sweep needs at least one axis value")
    reps = replications or config.replications
    rows = []
    for v in values:
        cfg = with_axis(config, axis, v)
        rows.append(summarize(axis, v, run_replications(cfg, range(reps))))
    return rows


SWEEP_CSV_HEADER = ("axis_value", "flip_prob", "flip_se", "mean_cost", "detect_prob")


def sweep_to_csv(rows: Sequence[SweepRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_CSV_HEADER)
    for r in rows:
        w.writerow([repr(r.axis_value), repr(r.flip_prob), repr(r.flip_se), repr(r.mean_cost), repr(r.detect_prob)])
    return buf.getvalue()


def cost_to_flip(config: SimConfig, replication_index: int = 0) -> Optional[tuple[int, float]]:
    """Smallest number of targets (and its planned budget) that flips this replication.

    Binary search over the target count with the replication's seeds held
    fixed. Returns ``None`` when even every eligible voter is not enough.
    """
    if config.adversary is None:
        raise ParameterError("cost_to_flip needs an adversary")
    base = config.adversary
    params = {k: v for k, v in base.params.items() if k != "budget"}
    unit = per_target_cost(base, config.tau_hours, config.window_hours, config.unit_costs)

    def flips(k: int) -> bool:
        strat = dataclasses.replace(base, targets=None, n_targets=k, params=params)
        return bool(run_election(dataclasses.replace(config, adversary=strat), replication_index).flipped)

    hi = config.n_voters
    if not flips(hi):
        return None
    lo = 0
    if flips(lo):
        return 0, 0.0
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if flips(mid):
            hi = mid
        else:
            lo = mid
    return hi, hi * unit
