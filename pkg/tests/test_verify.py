import math
from collections import Counter
from dataclasses import dataclass

import numpy as np
import pytest

from oracles import chi2_critical_wilson_hilferty, chi_square, normal_cdf, normal_upper_quantile
from phonevote.domain import Forgery, ParameterError, Utterance
from phonevote.verify import (
    PromptCorpus,
    RepetitionParams,
    VerifierEnsemble,
    append_sample,
    calibrate,
    check_repetition,
    issue_prompt,
    score_utterance,
    select_instance,
    verify_speaker,
)

# 2 * upper normal quantile at 0.02, by bisection on an erf-based CDF (tests/oracles.py)
SEPARATION_EER_2PCT = 4.1074978212636495
# P(Z >= 1)
MISMATCH_ACCEPT = 0.15865525393145707


def test_oracle_agrees_with_frozen_separation():
    assert 2 * normal_upper_quantile(0.02) == pytest.approx(SEPARATION_EER_2PCT, abs=1e-12)


def test_calibrate_separation():
    m = calibrate(0.02, 1.0)
    assert m.mu_genuine - m.mu_impostor == pytest.approx(SEPARATION_EER_2PCT, abs=1e-9)
    assert m.mu_genuine > m.threshold > m.mu_impostor
    assert m.threshold == pytest.approx((m.mu_genuine + m.mu_impostor) / 2)


@pytest.mark.parametrize("eer", [0.01, 0.02, 0.05, 0.2])
@pytest.mark.parametrize("sigma", [0.5, 1.0, 3.0])
def test_calibrated_error_rates_are_equal(eer, sigma):
    m = calibrate(eer, sigma, jitter=0.7)
    far = 1 - normal_cdf((m.threshold - m.mu_impostor) / sigma)
    frr = normal_cdf((m.threshold - m.mu_genuine) / sigma)
    assert far == pytest.approx(eer, abs=1e-9)
    assert frr == pytest.approx(eer, abs=1e-9)
    assert m.false_accept_rate() == pytest.approx(eer, abs=1e-9)
    assert m.false_reject_rate() == pytest.approx(eer, abs=1e-9)


def test_eer_half_makes_distributions_coincide():
    m = calibrate(0.5, 1.0)
    assert m.mu_genuine == m.mu_impostor


@pytest.mark.parametrize("eer", [-0.1, 0.6, 1.0])
def test_calibrate_rejects_out_of_range(eer):
    with pytest.raises(ParameterError):
        calibrate(eer, 1.0)


def test_calibrate_rejects_bad_sigma():
    with pytest.raises(ParameterError):
        calibrate(0.02, 0.0)


def test_eer_zero_is_noiseless():
    m = calibrate(0.0)
    rng = np.random.default_rng(0)
    assert all(verify_speaker(m, 1, Utterance(1), rng) for _ in range(200))
    assert not any(verify_speaker(m, 1, Utterance(2), rng) for _ in range(200))


def test_corpus_of_one():
    corpus = PromptCorpus(("only",), min_size=1)
    rng = np.random.default_rng(1)
    assert {issue_prompt(corpus, rng) for _ in range(50)} == {"only"}


def test_corpus_minimum_size():
    with pytest.raises(ParameterError):
        PromptCorpus(("a", "b"))
    with pytest.raises(ParameterError):
        PromptCorpus((), min_size=0)


def test_prompts_are_uniform():
    corpus = PromptCorpus.synthetic(10_000)
    rng = np.random.default_rng(7)
    draws = [issue_prompt(corpus, rng) for _ in range(10_000)]
    assert set(draws) <= set(corpus.paragraphs)
    counts = Counter(draws)
    entropy = -sum(c / 10_000 * math.log(c / 10_000) for c in counts.values())
    # 10^4 draws over 10^4 cells: expected plug-in entropy is about log(n) - 0.5
    assert entropy > math.log(10_000) - 0.7
    # chi-square over 20 buckets of 500 paragraphs each
    idx = [int(d.split("-")[1]) // 500 for d in draws]
    obs = np.bincount(idx, minlength=20)
    assert chi_square(obs, [500] * 20) < chi2_critical_wilson_hilferty(19)


def test_prompts_reproducible():
    corpus = PromptCorpus.synthetic(100)
    a = [issue_prompt(corpus, np.random.default_rng(3)) for _ in range(1)]
    r1, r2 = np.random.default_rng(3), np.random.default_rng(3)
    assert [issue_prompt(corpus, r1) for _ in range(30)] == [issue_prompt(corpus, r2) for _ in range(30)]
    assert a


def test_repetition_certain_pass():
    rng = np.random.default_rng(0)
    params = RepetitionParams(p_human=1.0)
    assert all(check_repetition("p", Utterance(0, 1.0), params, rng) for _ in range(1000))


def test_automated_forger_fails_when_machines_cannot_parse():
    rng = np.random.default_rng(0)
    params = RepetitionParams(p_human=1.0, p_machine=0.0)
    u = Utterance("adv-0", forgery=Forgery(0, automated=True))
    assert not any(check_repetition("p", u, params, rng) for _ in range(1000))


def test_repetition_pass_rate():
    rng = np.random.default_rng(11)
    params = RepetitionParams(p_human=0.99)
    rate = np.mean([check_repetition("p", Utterance(0), params, rng) for _ in range(100_000)])
    assert abs(rate - 0.99) <= 0.005


def test_echo_quality_scales_human_pass():
    rng = np.random.default_rng(5)
    params = RepetitionParams(p_human=1.0)
    rate = np.mean([check_repetition("p", Utterance(0, 0.5), params, rng) for _ in range(20_000)])
    assert abs(rate - 0.5) < 0.02


def test_repetition_params_validation():
    with pytest.raises(ParameterError):
        RepetitionParams(p_human=0.5, p_machine=0.6)
    with pytest.raises(ParameterError):
        RepetitionParams(p_human=1.5)


def _accept_rate(model, utterance, n=100_000, seed=0, owner=1):
    rng = np.random.default_rng(seed)
    return np.mean([verify_speaker(model, owner, utterance, rng) for _ in range(n)])


def test_genuine_accept_rate():
    assert abs(_accept_rate(calibrate(0.02), Utterance(1)) - 0.98) < 0.003


def test_impostor_accept_rate():
    expected = 1 - normal_cdf(SEPARATION_EER_2PCT / 2)
    assert abs(_accept_rate(calibrate(0.02), Utterance(2), seed=1) - expected) < 0.003


def test_forgery_tuned_against_instance():
    m = calibrate(0.02, instance_id=3)
    u = Utterance("adv-0", forgery=Forgery(0, tuned_against=3))
    assert abs(_accept_rate(m, u, seed=2) - 0.5) < 0.006


def test_forgery_against_other_instance():
    m = calibrate(0.02, instance_id=3, mismatch_penalty=1.0)
    u = Utterance("adv-0", forgery=Forgery(0, tuned_against=0))
    assert abs(_accept_rate(m, u, seed=3) - MISMATCH_ACCEPT) < 0.006
    assert m.forged_accept_rate(0) == pytest.approx(MISMATCH_ACCEPT, abs=1e-9)
    assert m.forged_accept_rate(0) < m.forged_accept_rate(3)


def test_lower_threshold_is_monotone_roc():
    m = calibrate(0.02)
    thresholds = [1.0, 0.5, 0.0, -0.5, -1.0]
    fars = [m.with_threshold(t).false_accept_rate() for t in thresholds]
    frrs = [m.with_threshold(t).false_reject_rate() for t in thresholds]
    assert all(a < b for a, b in zip(fars, fars[1:]))
    assert all(a > b for a, b in zip(frrs, frrs[1:]))
    # same direction empirically
    rng = np.random.default_rng(4)
    emp = []
    for t in thresholds:
        mt = m.with_threshold(t)
        emp.append(np.mean([verify_speaker(mt, 1, Utterance(2), rng) for _ in range(20_000)]))
    assert all(a < b for a, b in zip(emp, emp[1:]))


def test_select_instance_single():
    ens = VerifierEnsemble.build(1, 0.02)
    rng = np.random.default_rng(0)
    assert {select_instance(ens, rng).instance_id for _ in range(20)} == {0}


def test_select_instance_uniform():
    ens = VerifierEnsemble.build(4, 0.02)
    rng = np.random.default_rng(9)
    counts = Counter(select_instance(ens, rng).instance_id for _ in range(10_000))
    for i in range(4):
        assert abs(counts[i] / 10_000 - 0.25) <= 0.02


def test_ensemble_dilutes_tuned_forger():
    ens = VerifierEnsemble.build(4, 0.02, mismatch_penalty=1.0)
    total_prob = (0.5 + 3 * MISMATCH_ACCEPT) / 4
    assert total_prob == pytest.approx(0.2439914404485928, abs=1e-12)
    rng = np.random.default_rng(12)
    u = Utterance("adv-0", forgery=Forgery(0, tuned_against=0))
    rate = np.mean([verify_speaker(select_instance(ens, rng), 1, u, rng) for _ in range(100_000)])
    assert abs(rate - total_prob) < 0.006


def test_ensemble_ids_unique():
    m = calibrate(0.02)
    with pytest.raises(ParameterError):
        VerifierEnsemble((m, m))
    with pytest.raises(ParameterError):
        VerifierEnsemble(())


def test_jitter_keeps_error_rates():
    m = calibrate(0.02, jitter=2.5)
    assert m.threshold == 2.5
    assert m.false_accept_rate() == pytest.approx(0.02, abs=1e-9)


@dataclass(frozen=True)
class _Rec:
    sample_count: int


def test_append_sample_counts():
    r = _Rec(1)
    r = append_sample(r, Utterance(0), authenticated=True)
    assert r.sample_count == 2
    for _ in range(4):
        r = append_sample(r, Utterance(0), authenticated=True)
    assert r.sample_count == 6


def test_append_sample_rejects_unauthenticated():
    with pytest.raises(AssertionError):
        append_sample(_Rec(1), Utterance(0), authenticated=False)


def test_score_ignores_everything_but_voice():
    # Only identity and forgery metadata enter the score.
    m = calibrate(0.02)
    a = score_utterance(m, 1, Utterance(1), np.random.default_rng(0))
    b = score_utterance(m, 1, Utterance(1), np.random.default_rng(0))
    assert a == b
