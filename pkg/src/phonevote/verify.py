"""Parametric speaker verification.

Scores follow an equal-variance two-Gaussian model. Genuine attempts score
around ``mu_genuine``, impostors around ``mu_impostor``, and the threshold
sits at the midpoint, so false accepts and false rejects are equal at the
configured EER. A forged voice scores around the threshold itself when the
forger was tuned against the verifier instance in use (accepted half the
time) and ``mismatch_penalty`` sigmas lower otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from statistics import NormalDist
from typing import Optional, Sequence

import numpy as np

from .domain import ParameterError, Utterance, VoterId, evolve

_STD_NORMAL = NormalDist()


@dataclass(frozen=True)
class VerifierModel:
    instance_id: int
    eer: float
    mu_genuine: float
    mu_impostor: float
    sigma: float
    threshold: float
    jitter: float = 0.0
    # In units of sigma.
    mismatch_penalty: float = 1.0

    def __post_init__(self) -> None:
        if self.sigma <= 0:
            raise ParameterError("sigma must be > 0")
        if self.eer == 0.5:
            ok = self.mu_genuine == self.mu_impostor
        else:
            ok = self.mu_genuine > self.threshold > self.mu_impostor
        if not ok:
            raise ParameterError("need mu_genuine > threshold > mu_impostor")

    def with_threshold(self, threshold: float) -> "VerifierModel":
        """Same score model, different operating point.

        Lowering the threshold trades false rejects for false accepts. The
        ``eer`` field keeps describing the score model.
        """
        return replace(self, threshold=float(threshold))

    def false_accept_rate(self) -> float:
        return _upper_tail((self.threshold - self.mu_impostor) / self.sigma)

    def false_reject_rate(self) -> float:
        return 1.0 - _upper_tail((self.threshold - self.mu_genuine) / self.sigma)

    def forged_mean(self, tuned_against: Optional[int]) -> float:
        # Anchored at the calibrated EER threshold (``jitter``) so that moving
        # the operating point changes forged acceptance like any other.
        if tuned_against is not None and tuned_against == self.instance_id:
            return self.jitter
        return self.jitter - self.mismatch_penalty * self.sigma

    def forged_accept_rate(self, tuned_against: Optional[int]) -> float:
        return _upper_tail((self.threshold - self.forged_mean(tuned_against)) / self.sigma)


def _upper_tail(z: float) -> float:
    if math.isinf(z):
        return 0.0 if z > 0 else 1.0
    return 1.0 - _STD_NORMAL.cdf(z)


def calibrate(
    eer: float,
    sigma: float = 1.0,
    *,
    instance_id: int = 0,
    jitter: float = 0.0,
    mismatch_penalty: float = 1.0,
) -> VerifierModel:
    """Build a verifier whose FAR and FRR both equal ``eer`` at its threshold.

    ``jitter`` shifts both class means and the threshold together, so
    instances differ in score scale without changing their error rates.
    ``eer == 0`` is accepted as the noiseless limit (infinitely separated
    classes); ``eer == 0.5`` gives coinciding distributions.
    """
    if not 0.0 <= eer <= 0.5:
        raise ParameterError(f"eer must lie in [0, 0.5], got {eer!r}")
    if sigma <= 0:
        raise ParameterError(f"sigma must be > 0, got {sigma!r}")
    if mismatch_penalty < 0:
        raise ParameterError("mismatch_penalty must be >= 0")
    z = math.inf if eer == 0 else _STD_NORMAL.inv_cdf(1.0 - eer)
    half = sigma * z
    return VerifierModel(
        instance_id=instance_id,
        eer=float(eer),
        mu_genuine=jitter + half,
        mu_impostor=jitter - half,
        sigma=float(sigma),
        threshold=float(jitter),
        jitter=float(jitter),
        mismatch_penalty=float(mismatch_penalty),
    )


def score_utterance(
    model: VerifierModel, profile_owner: VoterId, utterance: Utterance, rng: np.random.Generator
) -> float:
    if utterance.forgery is not None:
        mean = model.forged_mean(utterance.forgery.tuned_against)
    elif utterance.true_speaker == profile_owner:
        mean = model.mu_genuine
    else:
        mean = model.mu_impostor
    return mean + model.sigma * float(rng.standard_normal())


def verify_speaker(
    model: VerifierModel, profile_owner: VoterId, utterance: Utterance, rng: np.random.Generator
) -> bool:
    """Does the voice match the profile on file for ``profile_owner``?"""
    return score_utterance(model, profile_owner, utterance, rng) >= model.threshold


@dataclass(frozen=True)
class PromptCorpus:
    paragraphs: tuple[str, ...]
    min_size: int = 10_000

    def __post_init__(self) -> None:
        if not self.paragraphs:
            raise ParameterError("prompt corpus is empty")
        if len(self.paragraphs) < self.min_size:
            raise ParameterError(
                f"prompt corpus has {len(self.paragraphs)} paragraphs, need >= {self.min_size}"
            )

    @classmethod
    def synthetic(cls, size: int = 10_000, min_size: Optional[int] = None) -> "PromptCorpus":
        width = max(5, len(str(size - 1)))
        paragraphs = tuple(f"para-{i:0{width}d}" for i in range(size))
        return cls(paragraphs, min_size=size if min_size is None else min_size)

    def __len__(self) -> int:
        return len(self.paragraphs)


def issue_prompt(corpus: PromptCorpus, rng: np.random.Generator) -> str:
    return corpus.paragraphs[int(rng.integers(len(corpus.paragraphs)))]


@dataclass(frozen=True)
class RepetitionParams:
    p_human: float = 0.99
    p_machine: float = 0.0
    # Folded into the pass probabilities; kept for the record only.
    time_limit: Optional[float] = None

    def __post_init__(self) -> None:
        for name in ("p_human", "p_machine"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ParameterError(f"{name} must lie in [0, 1]")
        if self.p_machine > self.p_human:
            raise ParameterError("p_machine must not exceed p_human")


def check_repetition(
    prompt: str, utterance: Utterance, params: RepetitionParams, rng: np.random.Generator
) -> bool:
    """Was the prompted paragraph repeated correctly?

    A human in the loop (the voter, or a forger repeating the prompt into a
    voice transformer) passes with ``p_human * prompt_echo_quality``. A fully
    automated forger has to parse the garbled prompt itself and passes with
    ``p_machine``.
    """
    del prompt  # symbolic voice: content matching is folded into the pass probability
    if utterance.human_produced:
        p = params.p_human * utterance.prompt_echo_quality
    else:
        p = params.p_machine
    return bool(rng.random() < p)


@dataclass(frozen=True)
class VerifierEnsemble:
    instances: tuple[VerifierModel, ...]
    seed: Optional[int] = None

    def __post_init__(self) -> None:
        if not self.instances:
            raise ParameterError("verifier ensemble is empty")
        ids = [m.instance_id for m in self.instances]
        if len(set(ids)) != len(ids):
            raise ParameterError("verifier instance ids must be unique")

    @classmethod
    def build(
        cls,
        n_instances: int,
        eer: float,
        sigma: float = 1.0,
        mismatch_penalty: float = 1.0,
        jitters: Optional[Sequence[float]] = None,
    ) -> "VerifierEnsemble":
        if n_instances < 1:
            raise ParameterError("n_verifier_instances must be >= 1")
        jitters = list(jitters) if jitters is not None else [0.0] * n_instances
        if len(jitters) != n_instances:
            raise ParameterError("one jitter per instance")
        return cls(
            tuple(
                calibrate(eer, sigma, instance_id=i, jitter=j, mismatch_penalty=mismatch_penalty)
                for i, j in enumerate(jitters)
            )
        )

    def __len__(self) -> int:
        return len(self.instances)


def select_instance(ensemble: VerifierEnsemble, rng: np.random.Generator) -> VerifierModel:
    return ensemble.instances[int(rng.integers(len(ensemble.instances)))]


def append_sample(record, utterance: Utterance, *, authenticated: bool):
    """Append the session's voice sample to ``record``'s profile.

    Works on any dataclass record with a ``sample_count`` field. The model
    parameters are deliberately left untouched.
    """
    if not authenticated:
        raise AssertionError("voice samples are appended only for authenticated sessions")
    del utterance
    return evolve(record, sample_count=record.sample_count + 1)
