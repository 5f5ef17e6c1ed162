"""Simulator and protocol engine for receipt-free phone voting."""

from .adversary import Strategy, Variant, plan_actions, settle_cost
from .audit import (
    FraudReport,
    cluster_by_device,
    cluster_by_signature,
    detect_false_counter,
    multi_authority_count,
    partition_voters,
    silent_regions,
)
from .authority import AuthMode, AuthorityState, VoterRecord, tally_trace
from .domain import (
    DeviceId,
    Forgery,
    ReceiptInput,
    SecretNumber,
    Utterance,
    VoteEvent,
    transcript_template,
)
from .harness import ElectionResult, SimConfig, run_election, sweep
from .stoptime import commit, sample_stop, verify_commitment
from .verify import VerifierEnsemble, VerifierModel, calibrate, verify_speaker

__version__ = "0.1.0"
