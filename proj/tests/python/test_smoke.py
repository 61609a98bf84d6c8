import math

import numpy as np
import pytest

import sgda


def test_synthetic_pair_shapes():
    pair = sgda.synthetic_pair(nodes=40, classes=2, dim=4, seed=1)
    src, tgt = pair["source"], pair["target"]
    assert src["adjacency"].shape == (40, 40)
    assert tgt["attributes"].shape == (40, 4)
    assert np.array_equal(src["adjacency"], src["adjacency"].T)
    assert pair["n_classes"] == 2


def test_ppmi_and_propagation():
    counts = np.array([[0.0, 3.0], [3.0, 0.0]])
    p = sgda.ppmi(counts)
    assert p[0, 1] == pytest.approx(math.log(2.0))
    s = sgda.propagation(np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert np.allclose(s, 0.5)


def test_reconstruct_without_ppmi_is_normalized_adjacency():
    a = np.array([[0.0, 1.0], [1.0, 0.0]])
    p, s = sgda.reconstruct(a, use_ppmi=False)
    assert np.array_equal(p, a)
    assert np.allclose(s, 0.5)


def test_scores_weights_and_metrics():
    p = np.zeros((6, 6))
    for a in (0, 3):
        for i in range(a, a + 3):
            for j in range(a, a + 3):
                if i != j:
                    p[i, j] = 1.0
    w = sgda.posterior_scores(p, [0, 0, 0, 1, 1, 1], 2)
    assert all(x > 0 for x in w)
    weights = sgda.anneal_weights([3.0, 1.0])
    assert weights == pytest.approx([1.2, 1.0])
    micro, macro = sgda.f1_scores([0, 0], [0, 0], 3)
    assert micro == 1.0 and macro == pytest.approx(1 / 3)


def test_errors_map_to_python_exceptions():
    with pytest.raises(sgda.ConfigError):
        sgda.posterior_scores(np.eye(2), [0, 0], 1)
    with pytest.raises(sgda.SgdaError):
        sgda.fit_synthetic(0, {"nonsense": "1"})


def test_gradcheck_passes():
    errors = sgda.gradcheck()
    assert set(errors) == {"W1", "W2", "xi1", "xi2", "phi_c", "phi_d"}
    assert max(errors.values()) < 1e-5


def test_short_fit_is_deterministic():
    cfg = {"epochs": "3", "hidden": "16", "embedding": "16", "seed": "2"}
    a = sgda.fit_synthetic(1, cfg)
    b = sgda.fit_synthetic(1, cfg)
    assert a["micro_f1"] == b["micro_f1"]
    assert len(a["micro_f1"]) == 3
    probs = a["target_probabilities"]
    assert probs.shape == (300, 3)
    assert np.allclose(probs.sum(axis=1), 1.0)


def test_cli_entry_point(tmp_path):
    code, out, _ = sgda.run_cli(["synth", "--out", str(tmp_path / "d"), "--nodes", "30", "--dim", "4"])
    assert code == 0
    assert (tmp_path / "d" / "source.edges").exists()
    code, _, err = sgda.run_cli(["synth", "--out", str(tmp_path / "e"), "--classes", "1"])
    assert code == 1 and "classes" in err
