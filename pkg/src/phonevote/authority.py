"""Election authority session state machine.

A call goes through ``open_session`` -> ``authenticate`` -> ``cast_vote`` ->
``set_receipt_preference`` (optionally ``set_high_scrutiny``) -> ``finish``.
Whatever the authentication outcome, the caller hears the same sequence of
messages. Failed votes are kept in the trace with ``auth_ok=False`` so the
audit can see them, and the tally ignores them.
"""

from __future__ import annotations

import copy
import csv
import io
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Optional

import numpy as np

from .domain import (
    CandidateId,
    DeviceId,
    MessageKind,
    ParameterError,
    ReceiptInput,
    SecretNumber,
    SessionError,
    SessionTranscript,
    Utterance,
    VoteEvent,
    VoterId,
    check_time,
    evolve,
    events_to_jsonl,
)
from .verify import (
    PromptCorpus,
    RepetitionParams,
    VerifierEnsemble,
    append_sample,
    check_repetition,
    issue_prompt,
    select_instance,
    verify_speaker,
)


class AuthMode(str, Enum):
    FINAL_PROTOCOL = "final_protocol"
    # Baseline: the secret number alone authenticates.
    PASSWORD_ONLY = "password_only"


class ReceiptPref(str, Enum):
    YES = "yes"
    NO = "no"


@dataclass(frozen=True)
class VoterRecord:
    voter: VoterId
    secret: SecretNumber
    sample_count: int = 1
    receipt_pref: ReceiptPref = ReceiptPref.NO
    scrutiny: bool = False
    last_authentic_vote: Optional[tuple[float, CandidateId]] = None


@dataclass(frozen=True)
class Receipt:
    """Says the voter voted, and nothing more."""

    voter: VoterId
    election_id: str


class ElectionClosed(SessionError):
    pass


@dataclass
class Session:
    claimed: VoterId
    entered_secret: SecretNumber
    device: DeviceId
    start_time: float
    transcript: SessionTranscript = field(default_factory=SessionTranscript)
    verifier: Optional[int] = None
    _auth_ok: Optional[bool] = field(default=None, repr=False)
    _event_index: Optional[int] = field(default=None, repr=False)
    _utterance: Optional[Utterance] = field(default=None, repr=False)

    @property
    def authenticated_ran(self) -> bool:
        return self._auth_ok is not None

    @property
    def voted(self) -> bool:
        return self._event_index is not None

    @property
    def closed(self) -> bool:
        return self.transcript.closed

    def _say(self, kind: MessageKind, payload: Optional[str] = None) -> None:
        self.transcript = self.transcript.append(kind, payload)


class AuthorityState:
    """Registry, trace and the protocol rules that mutate them.

    Only this object sees ``auth_ok``; callers get acknowledgements that do not
    depend on it.
    """

    def __init__(
        self,
        registry: Mapping[VoterId, VoterRecord],
        *,
        mode: AuthMode | str = AuthMode.FINAL_PROTOCOL,
        ensemble: Optional[VerifierEnsemble] = None,
        repetition: Optional[RepetitionParams] = None,
        corpus: Optional[PromptCorpus] = None,
        stop_time: Optional[float] = None,
        election_id: str = "election",
    ):
        self.registry: dict[VoterId, VoterRecord] = dict(registry)
        self.trace: list[VoteEvent] = []
        self.mode = AuthMode(mode)
        if self.mode is AuthMode.FINAL_PROTOCOL and (ensemble is None or corpus is None):
            raise ParameterError("final_protocol mode needs a verifier ensemble and a prompt corpus")
        self.ensemble = ensemble
        self.repetition = repetition or RepetitionParams()
        self.corpus = corpus
        self.stop_time = stop_time
        self.election_id = election_id
        self._seq = 0
        self._last_start = 0.0

    @classmethod
    def enroll(cls, voters: Iterable[VoterId], rng: np.random.Generator, **kwargs) -> "AuthorityState":
        """Set-up step: one enrollment voice sample and a unique secret per voter."""
        voters = list(voters)
        secrets: set[int] = set()
        registry = {}
        for v in voters:
            while True:
                s = int(rng.integers(0, 2**63 - 1, dtype=np.int64))
                if s not in secrets:
                    break
            secrets.add(s)
            registry[v] = VoterRecord(voter=v, secret=SecretNumber(s))
        return cls(registry, **kwargs)

    def snapshot(self) -> "AuthorityState":
        return copy.deepcopy(self)

    # -- session flow -------------------------------------------------------

    def open_session(
        self, claimed: VoterId, entered_secret: SecretNumber, device: DeviceId, time: float
    ) -> Session:
        time = check_time(time)
        if self.stop_time is not None and time >= self.stop_time:
            raise ElectionClosed("voting has closed")
        if time < self._last_start:
            raise SessionError("sessions must be opened in nondecreasing time order")
        self._last_start = time
        session = Session(claimed=claimed, entered_secret=entered_secret, device=device, start_time=time)
        session._say(MessageKind.GREET)
        return session

    def authenticate(self, session: Session, utterance: Utterance, rng: np.random.Generator) -> None:
        """Decide ``auth_ok`` once for the session. Nothing is revealed to the caller.

        In final-protocol mode every check is evaluated (prompt issued,
        instance drawn, repetition and voice scored) even when the secret is
        already wrong, so the caller experience and the random stream usage
        do not depend on the outcome.
        """
        self._require_open(session)
        if session.authenticated_ran:
            raise SessionError("authentication already ran in this session")
        record = self.registry.get(session.claimed)
        secret_ok = record is not None and record.secret == session.entered_secret
        if self.mode is AuthMode.PASSWORD_ONLY:
            ok = secret_ok
        else:
            prompt = issue_prompt(self.corpus, rng)
            session._say(MessageKind.PROMPT, prompt)
            model = select_instance(self.ensemble, rng)
            session.verifier = model.instance_id
            repeated = check_repetition(prompt, utterance, self.repetition, rng)
            voice = verify_speaker(model, session.claimed, utterance, rng)
            ok = secret_ok and repeated and voice
        session._auth_ok = bool(ok)
        session._utterance = utterance

    def cast_vote(self, session: Session, candidate: CandidateId) -> MessageKind:
        self._require_open(session)
        if not session.authenticated_ran:
            raise SessionError("authenticate must run before cast_vote")
        if session.voted:
            session._say(MessageKind.REFUSAL, "one vote per call")
            return MessageKind.REFUSAL
        known = session.claimed in self.registry
        event = VoteEvent(
            time=session.start_time,
            seq=self._next_seq(),
            claimed=session.claimed,
            device=session.device,
            auth_ok=session._auth_ok,
            candidate=int(candidate),
            forgery_meta=session._utterance.forgery if session._utterance else None,
            claimed_known=known,
        )
        self.trace.append(event)
        session._event_index = len(self.trace) - 1
        if session._auth_ok:
            rec = self.registry[session.claimed]
            rec = append_sample(rec, session._utterance, authenticated=True)
            self.registry[session.claimed] = evolve(
                rec, last_authentic_vote=(session.start_time, int(candidate))
            )
        session._say(MessageKind.VOTE_ACK, f"candidate {int(candidate)}")
        return MessageKind.VOTE_ACK

    def set_receipt_preference(self, session: Session, choice: ReceiptInput | str) -> MessageKind:
        self._require_open(session)
        if not session.voted:
            raise SessionError("the receipt question follows a vote")
        choice = ReceiptInput(choice)
        idx = session._event_index
        self.trace[idx] = evolve(self.trace[idx], receipt_input=choice)
        if session._auth_ok and choice is not ReceiptInput.SKIP:
            rec = self.registry[session.claimed]
            self.registry[session.claimed] = evolve(rec, receipt_pref=ReceiptPref(choice.value))
        session._say(MessageKind.RECEIPT_Q, choice.value)
        return MessageKind.RECEIPT_Q

    def set_high_scrutiny(self, session: Session) -> MessageKind:
        self._require_open(session)
        if not session.authenticated_ran:
            raise SessionError("authenticate must run before a scrutiny request")
        if session.voted:
            idx = session._event_index
            self.trace[idx] = evolve(self.trace[idx], scrutiny_requested=True)
        if session._auth_ok:
            rec = self.registry[session.claimed]
            self.registry[session.claimed] = evolve(rec, scrutiny=True)
        session._say(MessageKind.SCRUTINY_ACK)
        return MessageKind.SCRUTINY_ACK

    def finish(self, session: Session) -> SessionTranscript:
        self._require_open(session)
        session._say(MessageKind.DONE)
        session.transcript = session.transcript.close()
        return session.transcript

    def hang_up(self, session: Session) -> SessionTranscript:
        if not session.closed:
            session.transcript = session.transcript.close()
        return session.transcript

    def run_call(
        self,
        *,
        claimed: VoterId,
        entered_secret: SecretNumber,
        device: DeviceId,
        time: float,
        utterance: Utterance,
        candidate: CandidateId,
        receipt_input: ReceiptInput | str = ReceiptInput.SKIP,
        scrutiny: bool = False,
        rng: np.random.Generator,
    ) -> SessionTranscript:
        """One complete call with the standard message order."""
        s = self.open_session(claimed, entered_secret, device, time)
        self.authenticate(s, utterance, rng)
        self.cast_vote(s, candidate)
        self.set_receipt_preference(s, receipt_input)
        if scrutiny:
            self.set_high_scrutiny(s)
        return self.finish(s)

    # -- post-election ------------------------------------------------------

    def tally(self, stop_time: float, n_candidates: int) -> dict[CandidateId, int]:
        return tally_trace(self.trace, stop_time, n_candidates, voters=self.registry.keys())

    def dispatch_receipts(self, stop_time: float) -> frozenset[VoterId]:
        """Voters who get the single post-election receipt.

        A receipt goes out iff the stored preference is "yes" and the voter
        has at least one authentic vote before ``stop_time``. The stored
        preference is whatever the last authenticated, non-skipping call set.
        """
        have_vote = {e.claimed for e in self.trace if e.auth_ok and e.time < stop_time}
        return frozenset(
            v for v, rec in self.registry.items() if v in have_vote and rec.receipt_pref is ReceiptPref.YES
        )

    def receipts(self, stop_time: float) -> list[Receipt]:
        return [Receipt(v, self.election_id) for v in sorted(self.dispatch_receipts(stop_time))]

    def high_scrutiny_ids(self) -> frozenset[VoterId]:
        return frozenset(v for v, r in self.registry.items() if r.scrutiny)

    # -- export -------------------------------------------------------------

    def export_trace(self, audit: bool = True) -> str:
        return events_to_jsonl(self.trace, audit=audit)

    def _next_seq(self) -> int:
        self._seq += 1
        return self._seq

    @staticmethod
    def _require_open(session: Session) -> None:
        if session.closed:
            raise SessionError("session already closed")


def tally_trace(
    events: Iterable[VoteEvent],
    stop_time: float,
    n_candidates: int,
    voters: Optional[Iterable[VoterId]] = None,
) -> dict[CandidateId, int]:
    """Count each voter's last authentic vote strictly before ``stop_time``.

    ``voters`` restricts counting to a subset (one authority's share of the
    electorate, say).
    """
    allowed = set(voters) if voters is not None else None
    last: dict[VoterId, tuple[tuple[float, int], CandidateId]] = {}
    for e in events:
        if not e.auth_ok or e.time >= stop_time or not e.claimed_known:
            continue
        if allowed is not None and e.claimed not in allowed:
            continue
        prev = last.get(e.claimed)
        if prev is None or e.order_key > prev[0]:
            last[e.claimed] = (e.order_key, e.candidate)
    counts = {c: 0 for c in range(n_candidates)}
    for _, cand in last.values():
        counts[cand] += 1
    return counts


def receipts_to_csv(voters: Iterable[VoterId]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["voter_id"])
    for v in sorted(voters):
        w.writerow([v])
    return buf.getvalue()
