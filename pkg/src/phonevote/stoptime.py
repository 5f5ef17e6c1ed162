"""Secret random stopping time and hash commitments.

The authority samples ``x ~ U[0, 1]`` before the election and closes voting
at ``tau + window * x``. To show it did not pick the stop time after seeing
the votes, it publishes ``H(tag || 0x00 || payload || nonce)`` up front and
reveals the payload and nonce afterwards. The 32-byte nonce stops anyone
from recovering the stop time by hashing every candidate value.
"""

from __future__ import annotations

import hashlib
import hmac
import secrets
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .domain import ParameterError, check_time

NONCE_BYTES = 32
DEFAULT_HASH = "sha256"

STOP_TIME_TAG = b"phonevote/stop-time/v1"
COUNT_TAG = b"phonevote/count/v1"
DOMAIN_TAGS = {"stop-time": STOP_TIME_TAG, "count": COUNT_TAG}


@dataclass(frozen=True)
class StoppingPlan:
    tau: float
    window: float
    x: float
    stop_time: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.x <= 1.0:
            raise ParameterError("x must lie in [0, 1]")
        if self.stop_time != self.tau + self.window * self.x:
            raise ParameterError("stop_time must equal tau + window * x")

    @classmethod
    def from_x(cls, tau: float, window: float, x: float) -> "StoppingPlan":
        tau = check_time(tau, "tau")
        window = float(window)
        if not window > 0:
            raise ParameterError(f"window must be > 0, got {window!r}")
        return cls(tau=tau, window=window, x=float(x), stop_time=tau + window * float(x))

    def payload(self) -> bytes:
        return stop_time_payload(self.stop_time)


def sample_stop(tau: float, window: float, rng: np.random.Generator) -> StoppingPlan:
    return StoppingPlan.from_x(tau, window, float(rng.random()))


def stop_time_payload(stop_time: float) -> bytes:
    return f"{stop_time:.6f}".encode("ascii")


@dataclass(frozen=True)
class CommitmentRecord:
    payload: bytes
    nonce: bytes
    digest: bytes
    tag: bytes = STOP_TIME_TAG
    hash_name: str = DEFAULT_HASH

    @property
    def digest_hex(self) -> str:
        return self.digest.hex()

    @property
    def nonce_hex(self) -> str:
        return self.nonce.hex()

    def verify(self) -> bool:
        return verify_commitment(self.digest, self.payload, self.nonce, tag=self.tag, hash_name=self.hash_name)


def _digest(tag: bytes, payload: bytes, nonce: bytes, hash_name: str) -> bytes:
    h = hashlib.new(hash_name)
    if h.digest_size != 32:
        raise ParameterError(f"{hash_name} does not produce a 256-bit digest")
    h.update(tag)
    h.update(b"\x00")
    h.update(payload)
    h.update(nonce)
    return h.digest()


def commit(
    payload: bytes,
    rng: Optional[np.random.Generator] = None,
    *,
    tag: bytes = STOP_TIME_TAG,
    hash_name: str = DEFAULT_HASH,
) -> CommitmentRecord:
    """Commit to ``payload`` under a fresh nonce.

    Without ``rng`` the nonce comes from the OS CSPRNG. Simulations pass
    their seeded stream so results stay reproducible.
    """
    if isinstance(payload, str):
        payload = payload.encode("utf-8")
    if not payload:
        raise ParameterError("cannot commit to an empty payload")
    nonce = rng.bytes(NONCE_BYTES) if rng is not None else secrets.token_bytes(NONCE_BYTES)
    return CommitmentRecord(
        payload=payload,
        nonce=nonce,
        digest=_digest(tag, payload, nonce, hash_name),
        tag=tag,
        hash_name=hash_name,
    )


def verify_commitment(
    digest: bytes,
    payload: bytes,
    nonce: bytes,
    *,
    tag: bytes = STOP_TIME_TAG,
    hash_name: str = DEFAULT_HASH,
) -> bool:
    if isinstance(payload, str):
        payload = payload.encode("utf-8")
    return hmac.compare_digest(_digest(tag, payload, nonce, hash_name), digest)
