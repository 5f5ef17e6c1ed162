"""Post-election fraud detection and multi-authority counting.

Detectors read only the audit-grade trace (plus the set of high-scrutiny
ids). Ids on high scrutiny get halved device thresholds, rounded up.
"""

from __future__ import annotations

import json
import math
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field
from statistics import median
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .authority import tally_trace
from .domain import CandidateId, DeviceId, IntegrityError, ParameterError, VoteEvent, VoterId
from .stoptime import COUNT_TAG, CommitmentRecord, commit, verify_commitment


@dataclass(frozen=True)
class DeviceFlag:
    device: int
    region: int
    count: int
    threshold: int
    # "all" when the total triggered, "high_scrutiny" when the halved threshold did
    basis: str = "all"


@dataclass(frozen=True)
class SignatureFlag:
    signature_tag: int
    count: int
    threshold: int


@dataclass(frozen=True)
class RegionFlag:
    region: int
    count: int
    population: int
    min_expected: int


@dataclass(frozen=True)
class ScrutinyFinding:
    voter: VoterId
    n_events: int
    n_devices: int
    n_forged_signatures: int
    note: str


@dataclass
class FraudReport:
    flagged_devices: list[DeviceFlag] = field(default_factory=list)
    flagged_signatures: list[SignatureFlag] = field(default_factory=list)
    silent_regions: list[RegionFlag] = field(default_factory=list)
    scrutiny_findings: list[ScrutinyFinding] = field(default_factory=list)
    params: dict = field(default_factory=dict)

    @property
    def any_flag(self) -> bool:
        return bool(self.flagged_devices or self.flagged_signatures or self.silent_regions)

    def to_dict(self) -> dict:
        return {
            "flagged_devices": [asdict(f) for f in self.flagged_devices],
            "flagged_signatures": [asdict(f) for f in self.flagged_signatures],
            "silent_regions": [asdict(f) for f in self.silent_regions],
            "scrutiny_findings": [asdict(f) for f in self.scrutiny_findings],
            "params": dict(self.params),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _halved(k: int) -> int:
    return max(1, math.ceil(k / 2))


def cluster_by_device(
    trace: Iterable[VoteEvent], k_device: int, high_scrutiny: Iterable[VoterId] = ()
) -> list[DeviceFlag]:
    """Devices with unreasonably many calls, authentic or not."""
    if k_device < 1:
        raise ParameterError("k_device must be >= 1")
    hs = set(high_scrutiny)
    total: Counter[DeviceId] = Counter()
    on_hs: Counter[DeviceId] = Counter()
    for e in trace:
        total[e.device] += 1
        if e.claimed_known and e.claimed in hs:
            on_hs[e.device] += 1
    k_hs = _halved(k_device)
    flags = []
    for dev in sorted(total, key=lambda d: (d.device, d.region)):
        if total[dev] >= k_device:
            flags.append(DeviceFlag(dev.device, dev.region, total[dev], k_device, "all"))
        elif on_hs[dev] >= k_hs:
            flags.append(DeviceFlag(dev.device, dev.region, on_hs[dev], k_hs, "high_scrutiny"))
    return flags


def cluster_by_signature(trace: Iterable[VoteEvent], k_sig: int) -> list[SignatureFlag]:
    if k_sig < 2:
        raise ParameterError("k_sig must be >= 2")
    counts = Counter(
        e.forgery_meta.signature_tag
        for e in trace
        if e.forgery_meta is not None and e.forgery_meta.signature_tag is not None
    )
    return [SignatureFlag(tag, n, k_sig) for tag, n in sorted(counts.items()) if n >= k_sig]


def silent_regions(
    trace: Iterable[VoteEvent], region_population: Mapping[int, int], min_expected: int
) -> list[RegionFlag]:
    counts = Counter(e.device.region for e in trace)
    return [
        RegionFlag(r, 0, pop, min_expected)
        for r, pop in sorted(region_population.items())
        if counts.get(r, 0) == 0 and pop >= min_expected
    ]


def scrutiny_findings(
    trace: Iterable[VoteEvent], high_scrutiny: Iterable[VoterId], k_device: int
) -> list[ScrutinyFinding]:
    hs = set(high_scrutiny)
    events: dict[VoterId, list[VoteEvent]] = defaultdict(list)
    for e in trace:
        if e.claimed_known and e.claimed in hs:
            events[e.claimed].append(e)
    out = []
    k_hs = _halved(k_device)
    for v in sorted(hs):
        evs = events.get(v, [])
        devices = {e.device for e in evs}
        signed = sum(1 for e in evs if e.forgery_meta and e.forgery_meta.signature_tag is not None)
        notes = []
        if len(devices) > 1:
            notes.append(f"calls from {len(devices)} devices")
        if len(evs) >= k_hs:
            notes.append(f"{len(evs)} calls >= {k_hs}")
        if signed:
            notes.append(f"{signed} signed forgeries")
        out.append(ScrutinyFinding(v, len(evs), len(devices), signed, "; ".join(notes) or "no anomaly"))
    return out


def fraud_report(
    trace: Sequence[VoteEvent],
    *,
    region_population: Mapping[int, int],
    high_scrutiny: Iterable[VoterId] = (),
    k_device: int = 10,
    k_sig: int = 10,
    min_expected: int = 50,
) -> FraudReport:
    hs = frozenset(high_scrutiny)
    return FraudReport(
        flagged_devices=cluster_by_device(trace, k_device, hs),
        flagged_signatures=cluster_by_signature(trace, k_sig),
        silent_regions=silent_regions(trace, region_population, min_expected),
        scrutiny_findings=scrutiny_findings(trace, hs, k_device),
        params={
            "k_device": k_device,
            "k_device_high_scrutiny": _halved(k_device),
            "k_sig": k_sig,
            "min_expected": min_expected,
        },
    )


# -- multiple authorities -----------------------------------------------------


@dataclass(frozen=True)
class AuthorityPartition:
    m: int
    assignment: Mapping[VoterId, int]

    def members(self, authority: int) -> list[VoterId]:
        return sorted(v for v, a in self.assignment.items() if a == authority)

    def sizes(self) -> list[int]:
        c = Counter(self.assignment.values())
        return [c.get(a, 0) for a in range(self.m)]


def partition_voters(n_voters: int, m: int, rng: np.random.Generator) -> AuthorityPartition:
    """Random balanced split of voters ``0..n_voters-1`` among ``m`` authorities."""
    if m < 1:
        raise ParameterError("need at least one authority")
    if m > n_voters:
        raise ParameterError(f"{m} authorities for {n_voters} voters")
    perm = rng.permutation(n_voters)
    return AuthorityPartition(m, {int(v): i % m for i, v in enumerate(perm)})


def count_payload(authority: int, counts: Sequence[int]) -> bytes:
    return json.dumps({"authority": authority, "counts": [int(c) for c in counts]}, separators=(",", ":")).encode()


def parse_count_payload(payload: bytes) -> list[int]:
    return [int(c) for c in json.loads(payload)["counts"]]


@dataclass
class MultiAuthorityCount:
    tallies: list[list[int]]
    commitments: list[CommitmentRecord]
    verified: list[bool] = field(default_factory=list)

    def total(self) -> list[int]:
        return [int(sum(col)) for col in zip(*self.tallies)]


def multi_authority_count(
    trace: Sequence[VoteEvent],
    partition: AuthorityPartition,
    stop_time: float,
    n_candidates: int,
    rng: Optional[np.random.Generator] = None,
    *,
    reported: Optional[Mapping[int, Sequence[int]]] = None,
) -> MultiAuthorityCount:
    """Each authority counts its own voters and commits to the result.

    ``reported`` lets an authority publish (and commit to) numbers other than
    its honest count, which is what a false counter does.
    """
    claimed = {e.claimed for e in trace if e.claimed_known}
    missing = claimed - set(partition.assignment)
    if missing:
        raise ParameterError(f"partition does not cover voters {sorted(missing)[:5]}")
    tallies = []
    commitments = []
    for a in range(partition.m):
        t = tally_trace(trace, stop_time, n_candidates, voters=partition.members(a))
        counts = [t[c] for c in range(n_candidates)]
        if reported and a in reported:
            counts = [int(c) for c in reported[a]]
        tallies.append(counts)
        commitments.append(commit(count_payload(a, counts), rng, tag=COUNT_TAG))
    return MultiAuthorityCount(tallies, commitments)


def reveal_counts(result: MultiAuthorityCount, revealed: Sequence[tuple[bytes, bytes]]) -> list[list[int]]:
    """Check each ``(payload, nonce)`` reveal against its published digest.

    Raises :class:`IntegrityError` naming the first authority whose reveal
    does not match.
    """
    if len(revealed) != len(result.commitments):
        raise IntegrityError("one reveal per authority expected")
    out = []
    result.verified = []
    for a, (rec, (payload, nonce)) in enumerate(zip(result.commitments, revealed)):
        ok = verify_commitment(rec.digest, payload, nonce, tag=COUNT_TAG)
        result.verified.append(ok)
        if not ok:
            raise IntegrityError(f"authority {a}: revealed count does not match its commitment", authority=a)
        out.append(parse_count_payload(payload))
    return out


def honest_reveals(result: MultiAuthorityCount) -> list[tuple[bytes, bytes]]:
    return [(c.payload, c.nonce) for c in result.commitments]


@dataclass(frozen=True)
class FalseCounterFlag:
    authority: int
    candidate: CandidateId
    share: float
    reference_share: float
    z: float
    z_crit: float


def detect_false_counter(
    tallies: Sequence[Sequence[int]],
    sizes: Optional[Sequence[int]] = None,
    z_crit: float = 4.0,
) -> list[FalseCounterFlag]:
    """Authorities whose vote shares sit far from the others'.

    For every authority and candidate, the share is compared with the median
    share of the *other* authorities, in binomial standard errors at that
    authority's number of counted ballots (``sizes``, defaulting to its tally
    total). An authority's score is its largest deviation over candidates.

    Flags are assigned worst first: the top scorer above ``z_crit`` is
    flagged and dropped from every later reference, and scores are
    recomputed while at least three authorities remain. One liar among three
    otherwise drags the median of the honest ones along with it.
    """
    m = len(tallies)
    if m < 3:
        raise ParameterError("false-counter detection needs at least 3 authorities")
    counts = np.asarray(tallies, dtype=float)
    n = np.asarray(sizes, dtype=float) if sizes is not None else counts.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        shares = np.where(n[:, None] > 0, counts / n[:, None], 0.0)

    def score(a: int, pool: list[int]) -> Optional[FalseCounterFlag]:
        others = [b for b in pool if b != a]
        best: Optional[FalseCounterFlag] = None
        for c in range(counts.shape[1]):
            ref = float(median(shares[b, c] for b in others))
            se = math.sqrt(ref * (1 - ref) / n[a]) if n[a] > 0 else 0.0
            dev = abs(shares[a, c] - ref)
            if se == 0:
                z = 0.0 if dev == 0 else math.inf
            else:
                z = dev / se
            if best is None or z > best.z:
                best = FalseCounterFlag(a, c, float(shares[a, c]), ref, float(z), z_crit)
        return best

    pool = list(range(m))
    flags = []
    while len(pool) >= 3:
        scored = [score(a, pool) for a in pool]
        worst = max(scored, key=lambda f: f.z)
        if not worst.z > z_crit:
            break
        flags.append(worst)
        pool.remove(worst.authority)
    return sorted(flags, key=lambda f: f.authority)
