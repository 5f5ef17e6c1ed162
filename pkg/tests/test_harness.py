import dataclasses
import json
import math

import numpy as np
import pytest

from phonevote.adversary import Strategy, Variant
from phonevote.domain import ConfigError, ParameterError
from phonevote.harness import (
    FalseCounting,
    SimConfig,
    cost_to_flip,
    rng_stream,
    run_election,
    run_replications,
    sweep,
    sweep_to_csv,
    winner_of,
)

SMALL = SimConfig(n_voters=60, corpus_size=100, master_seed=5)


def test_rng_streams_are_independent_and_stable():
    a = rng_stream(1, 0, "verify").random(3)
    assert np.array_equal(a, rng_stream(1, 0, "verify").random(3))
    assert not np.array_equal(a, rng_stream(1, 0, "setup").random(3))
    assert not np.array_equal(a, rng_stream(1, 1, "verify").random(3))


def test_determinism():
    assert run_election(SMALL, 3).to_json() == run_election(SMALL, 3).to_json()


def test_replication_independent_of_batch():
    alone = run_election(SMALL, 4).to_json()
    batch = [r.to_json() for r in run_replications(SMALL, range(6))]
    assert batch[4] == alone


def test_honest_receipts_go_to_those_who_asked():
    cfg = dataclasses.replace(SMALL, eer=0.0, p_human=1.0, p_receipt=1.0)
    r = run_election(cfg, 0)
    assert r.receipts_sent == cfg.n_voters
    assert r.official_tally == r.true_preference_tally
    assert r.flipped is None


def test_bluff_changes_nothing_but_cost():
    bluff = dataclasses.replace(SMALL, adversary=Strategy(Variant.BLUFF, params={"n_punished": 4}))
    for rep in range(10):
        a, b = run_election(SMALL, rep), run_election(bluff, rep)
        assert a.official_tally == b.official_tally
        assert a.stop_time == b.stop_time
        assert b.adversary_cost == 4.0


def test_proxy_baseline_in_password_mode_always_flips_when_strong():
    adv = Strategy(Variant.PROXY_BASELINE, candidate=0, n_targets=1000)
    cfg = dataclasses.replace(SMALL, mode="password_only", preference_weights=(0.3, 0.7), adversary=adv)
    r = run_election(cfg, 0)
    # the proxy votes at tau, after every honest call, and nobody revotes in time
    assert r.flipped
    assert r.target_success == 1.0


def test_proxy_baseline_fails_under_voice_check():
    adv = Strategy(Variant.PROXY_BASELINE, candidate=0, n_targets=1000)
    cfg = dataclasses.replace(SMALL, eer=0.0, p_human=1.0, preference_weights=(0.3, 0.7), adversary=adv)
    r = run_election(cfg, 0)
    assert r.target_success == 0.0 and not r.flipped


def test_adversary_does_not_perturb_honest_draws():
    adv = Strategy(Variant.DENIAL, targets=(0,), params={"start": 0.0, "end": 1e-9})
    a = run_election(SMALL, 1)
    b = run_election(dataclasses.replace(SMALL, adversary=adv), 1)
    assert a.official_tally == b.official_tally


def test_commitments_verify():
    cfg = dataclasses.replace(SMALL, n_authorities=3)
    r = run_election(cfg, 0)
    assert r.commitments["stop_time"] is True
    assert r.commitments["counts"] == [True, True, True]


def test_false_counting_flagged():
    cfg = dataclasses.replace(SimConfig(n_voters=6000, corpus_size=100), n_authorities=3,
                              false_counting=FalseCounting(1, 0, 0.1))
    r = run_election(cfg, 0)
    assert [f["authority"] for f in r.false_counter_flags] == [1]
    assert r.detected


def test_excluded_voters_counted_offline():
    cfg = dataclasses.replace(SMALL, excluded_fraction=1.0)
    r = run_election(cfg, 0)
    assert r.n_events == 0
    assert r.official_tally == r.true_preference_tally


def test_winner_ties_go_low():
    assert winner_of([3, 3, 1]) == 0
    assert winner_of([1, 4, 4]) == 1


def test_config_reports_every_bad_path():
    with pytest.raises(ConfigError) as exc:
        SimConfig.from_dict({
            "eer": 0.7, "bogus": 1, "seeds": {"master": -1},
            "adversary": {"variant": "sequester", "params": {"start": 0}, "zzz": 1},
            "audit": {"k_sig": 1},
        })
    text = "\n".join(exc.value.problems)
    for path in ("bogus", "seeds.master", "adversary.zzz"):
        assert path in text
    with pytest.raises(ConfigError) as exc:
        SimConfig.from_dict({"eer": 0.7, "audit": {"k_sig": 1}})
    text = "\n".join(exc.value.problems)
    assert "eer" in text and "audit.k_sig" in text


def test_config_round_trip_of_adversary():
    cfg = SimConfig.from_dict({"adversary": {"variant": "vote_buying", "targets": {"count": 3}, "candidate": 1}})
    assert cfg.adversary.variant is Variant.VOTE_BUYING
    assert cfg.adversary.n_targets == 3 and cfg.adversary.candidate == 1


def test_result_json_is_sorted_and_complete():
    d = json.loads(run_election(SMALL, 0).to_json())
    assert list(d) == sorted(d)
    for key in ("official_tally", "true_preference_tally", "flipped", "adversary_cost",
                "detections", "stop_time", "commitments", "receipts_sent"):
        assert key in d


def test_sweep_and_csv():
    adv = Strategy(Variant.SEQUESTER, candidate=0, n_targets=5)
    cfg = dataclasses.replace(SMALL, adversary=adv, eer=0.0, p_human=1.0)
    rows = sweep(cfg, "sequester_end", [250.0, 350.0], replications=40)
    assert rows[0].target_success < rows[1].target_success
    lines = sweep_to_csv(rows).splitlines()
    assert lines[0] == "axis_value,flip_prob,flip_se,mean_cost,detect_prob"
    assert len(lines) == 3
    assert all(math.isfinite(float(x)) for x in lines[1].split(","))


def test_sweep_rejects_bad_axis():
    with pytest.raises(ParameterError):
        sweep(SMALL, "colour", [1.0])
    with pytest.raises(ParameterError):
        sweep(SMALL, "n_voters", [])
    with pytest.raises(ParameterError):
        sweep(SMALL, "sequester_end", [300.0])


def test_cost_to_flip_is_minimal():
    adv = Strategy(Variant.PROXY_BASELINE, candidate=0)
    cfg = dataclasses.replace(SMALL, mode="password_only", preference_weights=(0.4, 0.6), adversary=adv)
    k, cost = cost_to_flip(cfg, 0)
    assert cost == k * 1.0
    flips = lambda n: run_election(dataclasses.replace(
        cfg, adversary=dataclasses.replace(adv, n_targets=n)), 0).flipped
    assert flips(k) and not flips(k - 1)
