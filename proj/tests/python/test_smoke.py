import json

import numpy as np
import pytest

import vitalhmm


def test_sample_asymmetry_matches_hand_value():
    assert vitalhmm.sample_asymmetry([-3.0, 0.0, 0.0, 0.0, 1.0]) == pytest.approx(1.0 / 9.0, abs=0)


def test_synthetic_corpus_is_reproducible():
    spec = {"patients": 3, "septic_patients": 1, "recording_hours": 1.0}
    a = vitalhmm.synth_generate(spec, seed=4)
    b = vitalhmm.synth_generate(spec, seed=4)
    assert len(a["recordings"]) == 3
    for (ida, ta, xa), (idb, tb, xb) in zip(a["recordings"], b["recordings"]):
        assert (ida, ta) == (idb, tb)
        np.testing.assert_array_equal(xa, xb)
    assert a["events"] == b["events"]
    assert vitalhmm.segment_count(a["recordings"][0][2]) == 3


def test_forward_loglik_is_finite_and_viterbi_has_path_length():
    model = vitalhmm.default_synth_model(0)
    rng = np.random.default_rng(0)
    seq = np.column_stack([rng.normal(50, 3, 40), rng.normal(0.4, 0.02, 40), rng.normal(95, 1, 40)])
    assert np.isfinite(vitalhmm.forward_loglik(model, seq))
    assert len(vitalhmm.viterbi_decode(model, seq)) == 40


def test_features_of_a_frame():
    rng = np.random.default_rng(1)
    frame = rng.normal(size=(1200, 3))
    assert len(vitalhmm.hrci(frame)) == 3
    assert len(vitalhmm.pops(frame)) == 10
    with pytest.raises(vitalhmm.VitalHmmError):
        vitalhmm.hrci(frame[:10])


def test_logreg_fit_separates_points():
    X = np.array([[-2.0], [-1.0], [1.0], [2.0], [-0.5], [0.5]])
    y = [0, 0, 1, 1, 1, 0]
    w, b = vitalhmm.logreg_fit(X, y, 1.0)
    assert w[0] > 0


def test_small_sweep_produces_table():
    cfg = {
        "data": {"synthetic": {"patients": 4, "septic_patients": 2, "recording_hours": 2.0}, "seed": 3},
        "models": ["gmm_hmm", "logreg"],
        "hmm_features": ["raw"],
        "logreg_features": ["hrci"],
        "states": [2],
        "gmm_components": [1],
        "repeats": 1,
        "training": {"gmm_max_iters": 3},
    }
    csv = vitalhmm.run_sweep(cfg)
    lines = csv.strip().splitlines()
    assert lines[0].startswith("model,features,params")
    assert len(lines) == 3
    assert "**" in vitalhmm.render_markdown(csv)


def test_bad_config_raises():
    with pytest.raises(vitalhmm.VitalHmmError):
        vitalhmm.run_sweep({"repeats": 0})
