"""Core value types shared by every other module.

Voice is symbolic: an :class:`Utterance` carries who actually spoke, how
well the prompt was echoed, and optional forgery metadata. Events are
totally ordered by ``(time, seq)`` where ``seq`` is assigned when the
authority creates the event.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Optional, Union

VoterId = int
CandidateId = int
# Adversary agents speak too; they are identified by strings like "adv-0".
SpeakerId = Union[int, str]

# Audit exports use this in place of a claimed id that is not registered.
UNKNOWN_VOTER = -1


class PhoneVoteError(Exception):
    """Base class for errors raised by this package."""


class ParameterError(PhoneVoteError, ValueError):
    pass


class ConfigError(PhoneVoteError, ValueError):
    """Invalid simulation configuration; ``problems`` lists every key path at fault."""

    def __init__(self, problems: Iterable[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class SessionError(PhoneVoteError, RuntimeError):
    pass


class IntegrityError(PhoneVoteError):
    def __init__(self, message: str, authority: Optional[int] = None):
        self.authority = authority
        super().__init__(message)


def evolve(obj, **changes):
    """``dataclasses.replace`` without its per-call introspection (hot path)."""
    return obj.__class__(**{**obj.__dict__, **changes})


def check_time(hours: float, name: str = "time") -> float:
    hours = float(hours)
    if not math.isfinite(hours) or hours < 0:
        raise ParameterError(f"{name} must be finite and >= 0, got {hours!r}")
    return hours


@dataclass(frozen=True)
class SecretNumber:
    """Opaque voter credential. ``repr`` never shows the value."""

    value: int

    def __repr__(self) -> str:
        return "SecretNumber(<hidden>)"

    __str__ = __repr__


@dataclass(frozen=True)
class DeviceId:
    device: int
    region: int


@dataclass(frozen=True)
class Forgery:
    forger_id: int
    signature_tag: Optional[int] = None
    tuned_against: Optional[int] = None
    # Fully automated forgers have no human repeating the prompt.
    automated: bool = False

    def to_dict(self) -> dict:
        return {
            "forger_id": self.forger_id,
            "signature_tag": self.signature_tag,
            "tuned_against": self.tuned_against,
            "automated": self.automated,
        }


@dataclass(frozen=True)
class Utterance:
    true_speaker: SpeakerId
    prompt_echo_quality: float = 1.0
    forgery: Optional[Forgery] = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.prompt_echo_quality <= 1.0:
            raise ParameterError("prompt_echo_quality must lie in [0, 1]")

    @property
    def human_produced(self) -> bool:
        return self.forgery is None or not self.forgery.automated


class ReceiptInput(str, Enum):
    YES = "yes"
    NO = "no"
    SKIP = "skip"


class MessageKind(str, Enum):
    GREET = "GREET"
    PROMPT = "PROMPT"
    VOTE_ACK = "VOTE_ACK"
    RECEIPT_Q = "RECEIPT_Q"
    SCRUTINY_ACK = "SCRUTINY_ACK"
    REFUSAL = "REFUSAL"
    DONE = "DONE"


@dataclass(frozen=True)
class Message:
    kind: MessageKind
    payload: Optional[str] = None


@dataclass(frozen=True)
class SessionTranscript:
    """What the caller hears. Built append-only; a new value per message."""

    messages: tuple[Message, ...] = ()
    closed: bool = False

    def append(self, kind: MessageKind, payload: Optional[str] = None) -> "SessionTranscript":
        if self.closed:
            raise SessionError("session already closed")
        return SessionTranscript(self.messages + (Message(kind, payload),), False)

    def close(self) -> "SessionTranscript":
        return SessionTranscript(self.messages, True)

    def to_json(self) -> str:
        return json.dumps(
            [{"kind": m.kind.value, "payload": m.payload} for m in self.messages],
            separators=(",", ":"),
        )


def transcript_template(transcript: SessionTranscript) -> list[MessageKind]:
    """Message-kind sequence of a finished session, payloads masked out."""
    if not transcript.closed:
        raise SessionError("session still open")
    return [m.kind for m in transcript.messages]


@dataclass(frozen=True)
class VoteEvent:
    time: float
    seq: int
    claimed: VoterId
    device: DeviceId
    auth_ok: bool
    candidate: CandidateId
    receipt_input: ReceiptInput = ReceiptInput.SKIP
    scrutiny_requested: bool = False
    forgery_meta: Optional[Forgery] = None
    # False when the claimed id is not in the registry.
    claimed_known: bool = True

    @property
    def order_key(self) -> tuple[float, int]:
        return (self.time, self.seq)

    def to_public_dict(self) -> dict:
        return {
            "time": self.time,
            "seq": self.seq,
            "claimed": self.claimed,
            "device": self.device.device,
            "region": self.device.region,
            "candidate": self.candidate,
            "receipt_input": self.receipt_input.value,
            "scrutiny_requested": self.scrutiny_requested,
        }

    def to_audit_dict(self) -> dict:
        d = self.to_public_dict()
        if not self.claimed_known:
            d["claimed"] = UNKNOWN_VOTER
        d["auth_ok"] = self.auth_ok
        d["forgery_meta"] = self.forgery_meta.to_dict() if self.forgery_meta else None
        return d

    @classmethod
    def from_audit_dict(cls, d: dict) -> "VoteEvent":
        fm = d.get("forgery_meta")
        return cls(
            time=float(d["time"]),
            seq=int(d["seq"]),
            claimed=int(d["claimed"]),
            device=DeviceId(int(d["device"]), int(d["region"])),
            auth_ok=bool(d["auth_ok"]),
            candidate=int(d["candidate"]),
            receipt_input=ReceiptInput(d["receipt_input"]),
            scrutiny_requested=bool(d["scrutiny_requested"]),
            forgery_meta=Forgery(**fm) if fm else None,
            claimed_known=int(d["claimed"]) != UNKNOWN_VOTER,
        )


def events_to_jsonl(events: Iterable[VoteEvent], audit: bool) -> str:
    rows = (e.to_audit_dict() if audit else e.to_public_dict() for e in events)
    return "".join(json.dumps(r, sort_keys=True, separators=(",", ":")) + "\n" for r in rows)


def events_from_jsonl(text: str) -> list[VoteEvent]:
    return [VoteEvent.from_audit_dict(json.loads(line)) for line in text.splitlines() if line.strip()]


def is_time_ordered(events: Iterable[VoteEvent]) -> bool:
    keys = [e.order_key for e in events]
    return all(a <= b for a, b in zip(keys, keys[1:]))


__all__ = [
    "CandidateId",
    "ConfigError",
    "DeviceId",
    "Forgery",
    "IntegrityError",
    "Message",
    "MessageKind",
    "ParameterError",
    "PhoneVoteError",
    "ReceiptInput",
    "SecretNumber",
    "SessionError",
    "SessionTranscript",
    "SpeakerId",
    "UNKNOWN_VOTER",
    "Utterance",
    "VoteEvent",
    "VoterId",
    "check_time",
    "evolve",
    "events_from_jsonl",
    "events_to_jsonl",
    "is_time_ordered",
    "transcript_template",
]
