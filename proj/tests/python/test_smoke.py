import json

import numpy as np
import pytest

import ebim


def test_entropy_of_constant_image_is_zero():
    gray = np.full((16, 16), 0.4)
    assert np.all(ebim.local_entropy(gray) == 0.0)
    e = ebim.entropy_strength_map(gray)
    assert e.shape == (16, 16)
    assert ebim.kappa(e) == 0.0


def test_two_level_window_has_one_bit():
    gray = np.zeros((11, 11))
    gray[:, ::2] = 1.0
    h = ebim.local_entropy(gray, radius=5, bins=256)
    # 121 pixels, 66 zeros and 55 ones in the centre window
    p = np.array([66, 55]) / 121
    assert h[5, 5] == pytest.approx(-(p * np.log2(p)).sum(), abs=1e-12)


def test_kappa_and_adjustment():
    e = ebim.perlin_map(64, 64, 16, 4, seed=3)
    assert e.shape == (64, 64)
    assert 0.0 <= e.min() and e.max() <= 1.0
    for target in (0.43, 0.14, 0.04):
        adjusted = ebim.adjust_to_kappa(e, target, 0.005)
        assert abs(ebim.kappa(adjusted) - target) <= 0.005
    with pytest.raises(ValueError):
        ebim.adjust_to_kappa(e, 0.5, method="gamma")


def test_morphology():
    e = np.zeros((7, 7))
    e[3, 3] = 1.0
    assert ebim.dilate(e, 1).sum() == 9
    assert ebim.erode(ebim.dilate(e, 1), 1).sum() == 1


def test_model_gradient_matches_finite_differences():
    m = ebim.Model.reference(8, 8, 1, 3, seed=4)
    rng = np.random.default_rng(0)
    x = rng.uniform(0.05, 0.95, (8, 8))
    label, certainty, probs = m.predict(x)
    assert sum(probs) == pytest.approx(1.0)
    assert certainty == max(probs)
    g = m.input_gradient(x, 1)
    assert g.shape == x.shape
    h = 1e-6
    for i, j in [(0, 0), (3, 4), (7, 7)]:
        xp, xm = x.copy(), x.copy()
        xp[i, j] += h
        xm[i, j] -= h
        fd = (m.loss(xp, 1) - m.loss(xm, 1)) / (2 * h)
        assert g[i, j] == pytest.approx(fd, abs=1e-6)


def test_attacks_keep_their_bounds():
    m = ebim.Model.reference(16, 16, 3, 4, seed=2)
    rng = np.random.default_rng(1)
    x = rng.uniform(0, 1, (16, 16, 3))
    f = ebim.fgsm(m, x, 0.01)
    assert f["linf"] <= 0.01 + 1e-12
    r = ebim.bim(m, x, linf_budget=0.03, max_iter=50, stepsize=0.01)
    assert r["adversarial"].shape == x.shape
    assert r["linf"] <= 0.03 + 1e-12
    ones = np.ones((16, 16))
    loc = ebim.localized_bim(m, x, ones, linf_budget=0.03, max_iter=50, stepsize=0.01)
    assert np.array_equal(loc["adversarial"], r["adversarial"])
    mask = np.zeros((16, 16))
    mask[4:12, 4:12] = 1.0
    loc = ebim.localized_bim(m, x, mask, max_iter=20, stepsize=0.01)
    moved = np.abs(loc["adversarial"] - x).max(axis=2) > 0
    assert not moved[mask == 0].any()
    with pytest.raises(ValueError):
        ebim.bim(m, x, target_label=9)


def test_statistics():
    r = ebim.paired_t([3.0, 2.0, 4.0], [1.0, 1.0, 1.0])
    assert r["p_value"] == pytest.approx(0.03708995011372427, abs=1e-12)
    assert r["df"] == 2
    sw = ebim.shapiro_wilk([148, 154, 158, 160, 161, 162, 166, 170, 182, 195, 236])
    assert sw["statistic"] == pytest.approx(0.7888146948631716, abs=1e-6)
    w = ebim.wilcoxon([1.0] * 35)
    assert w["p_value"] < 1e-6
    assert ebim.t_power(2.0, 35) > 0.9999
    with pytest.raises(ValueError):
        ebim.paired_t([1.0], [2.0], tail="two")


def test_io_errors(tmp_path):
    with pytest.raises(OSError):
        ebim.load_image(tmp_path / "missing.pgm")
    img = np.linspace(0, 1, 12).reshape(3, 4)
    ebim.save_image(img, tmp_path / "a.pgm")
    back = ebim.load_image(tmp_path / "a.pgm")
    assert np.abs(back - img).max() <= 0.5 / 255 + 1e-12


def test_aggregate_empty_log(tmp_path):
    log = tmp_path / "r.jsonl"
    log.write_text("")
    report = json.loads(ebim.aggregate_responses(log))
    assert report["records"] == 0


def test_train_synthetic_returns_a_usable_model():
    model, train_acc, test_acc = ebim.train_synthetic(per_class=4, test_per_class=2, epochs=1)
    assert 0.0 <= train_acc <= 1.0 and 0.0 <= test_acc <= 1.0
    images, labels = ebim.synthetic_dataset(1, seed=3)
    assert len(images) == 10 and labels == list(range(10))
    r = ebim.ebim(model, images[0], target_label=1, max_iter=5)
    assert r["adversarial"].shape == images[0].shape
