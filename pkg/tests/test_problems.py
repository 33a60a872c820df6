import gzip
import struct

import numpy as np
import pytest
from scipy.special import expit

from bilevel_vr.core import make_rng
from bilevel_vr.oracle import dir_v, dir_x, exact_directions
from bilevel_vr.problems import (
    HyperCleanDataset,
    HyperCleanProblem,
    IDXFormatError,
    SyntheticDataset,
    SyntheticProblem,
    corrupt_labels,
    load_idx,
    make_hyperclean_synthetic,
    make_synthetic,
    read_idx_images,
    read_idx_labels,
    synthetic_exact,
)
from bilevel_vr.problems.idx import write_idx_images, write_idx_labels
from bilevel_vr.problems.synthetic import load_csv, save_csv
from bilevel_vr.problems.hyperclean import hyperclean_hvp_y, hyperclean_jvp_x, hyperclean_ll_grad_y

from conftest import one_d_problem


# ---------- synthetic ----------

def test_exact_zero_targets_give_zero_solution():
    u = np.array([[0.3, 1.0], [-0.2, 1.0], [0.1, 1.0]])
    train = SyntheticDataset(u, np.zeros(3), 0.5)
    val = SyntheticDataset(u, np.zeros(3), 0.5)
    sol = synthetic_exact(train, val, np.zeros(2))
    np.testing.assert_array_equal(sol.y_star, 0.0)
    np.testing.assert_array_equal(sol.v_star, 0.0)
    assert sol.phi == 0.0


def test_exact_one_d_values():
    # y* = (b + r x) / (1 + r) with A = 1, b = 1, r = 0.5
    prob = one_d_problem(train_label=1.0, val_label=1.0)
    sol = synthetic_exact(prob.train, prob.val, np.array([1.0]))
    assert sol.y_star[0] == pytest.approx(1.0, abs=1e-15)
    assert sol.v_star[0] == pytest.approx(0.0, abs=1e-15)
    assert sol.phi == pytest.approx(0.0, abs=1e-15)
    sol0 = synthetic_exact(prob.train, prob.val, np.array([0.0]))
    assert sol0.y_star[0] == pytest.approx(2.0 / 3.0, abs=1e-15)
    # grad Phi = 2 (x - 1) + r v*, v* = (y* - 1) / 1.5
    assert sol0.grad_phi[0] == pytest.approx(-2.0 + 0.5 * (-1.0 / 3.0) / 1.5, abs=1e-14)


def test_cached_exact_matches_independent_path(small_synthetic):
    rng = np.random.default_rng(0)
    for _ in range(5):
        x = rng.normal(size=small_synthetic.dim_x)
        a = small_synthetic.exact(x)
        b = synthetic_exact(small_synthetic.train, small_synthetic.val, x)
        np.testing.assert_allclose(a.y_star, b.y_star, rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(a.grad_phi, b.grad_phi, rtol=1e-11, atol=1e-12)
        assert a.phi == pytest.approx(b.phi, rel=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_grad_phi_matches_finite_differences(small_synthetic, seed):
    prob = small_synthetic
    x = np.random.default_rng(seed).normal(size=prob.dim_x)
    grad = prob.exact(x).grad_phi
    h = 1e-5
    fd = np.array([(prob.exact(x + h * e).phi - prob.exact(x - h * e).phi) / (2 * h) for e in np.eye(prob.dim_x)])
    np.testing.assert_allclose(grad, fd, atol=1e-5, rtol=1e-6)


def test_exact_triple_is_stationary(small_synthetic):
    prob = small_synthetic
    x = np.random.default_rng(4).normal(size=prob.dim_x)
    sol = prob.exact(x)
    d_x, d_y, d_v = exact_directions(prob, x, sol.y_star, sol.v_star)
    assert np.linalg.norm(d_y) <= 1e-8
    assert np.linalg.norm(d_v) <= 1e-8
    np.testing.assert_allclose(d_x, sol.grad_phi, atol=1e-10)


def test_lyapunov_is_phi_at_exact_triple(small_synthetic):
    prob = small_synthetic
    x = np.random.default_rng(6).normal(size=prob.dim_x)
    sol = prob.exact(x)
    assert prob.lyapunov(x, sol.y_star, sol.v_star) == pytest.approx(sol.phi, rel=1e-14)
    assert prob.lyapunov(x, sol.y_star + 1.0, sol.v_star) == pytest.approx(sol.phi + prob.dim_y, rel=1e-12)
    assert prob.lyapunov(x, np.zeros(prob.dim_y), np.zeros(prob.dim_y)) >= 0.0


def test_make_synthetic_layout():
    train, val = make_synthetic(200, 6, seed=1)
    assert train.features.shape == val.features.shape == (200, 6)
    np.testing.assert_array_equal(train.features[:, -1], 1.0)
    np.testing.assert_array_equal(val.features[:, -1], 1.0)
    # e ~ N(0, 0.01): sample std near 0.1
    assert 0.08 < np.std(train.features[:, :-1]) < 0.12
    again = make_synthetic(200, 6, seed=1)
    assert train.labels.tobytes() == again[0].labels.tobytes()
    assert not np.array_equal(train.labels, make_synthetic(200, 6, seed=2)[0].labels)


def test_synthetic_csv_round_trip(tmp_path):
    train, _ = make_synthetic(25, 4, seed=9)
    save_csv(train, tmp_path / "train.csv")
    back = load_csv(tmp_path / "train.csv")
    assert back.features.tobytes() == train.features.tobytes()
    assert back.labels.tobytes() == train.labels.tobytes()


def test_synthetic_rejects_mismatched_dims():
    a, _ = make_synthetic(5, 3)
    b, _ = make_synthetic(5, 4)
    with pytest.raises(ValueError):
        SyntheticProblem(a, b)


# ---------- hyper-cleaning ----------

def _binary_dataset(u_train, lab_train, u_val=None, lab_val=None, reg=0.0):
    u_train = np.atleast_2d(np.asarray(u_train, dtype=float))
    u_val = u_train if u_val is None else np.atleast_2d(np.asarray(u_val, dtype=float))
    lab_train = np.asarray(lab_train)
    lab_val = lab_train if lab_val is None else np.asarray(lab_val)
    return HyperCleanDataset(
        train_features=u_train, train_labels=lab_train,
        val_features=u_val, val_labels=lab_val,
        test_features=u_val, test_labels=lab_val,
        corruption_mask=np.zeros(len(lab_train), dtype=bool), corruption_prob=0.0,
        n_classes=2, reg=reg,
    )


def test_binary_gradient_hand_value():
    # sigmoid(0) = 1/2 weight, residual sigmoid(0) - 1 = -1/2, u = (1, 0)
    data = _binary_dataset([[1.0, 0.0]], [1])
    g = hyperclean_ll_grad_y(data, np.zeros(1), np.zeros(2), np.array([0]))
    np.testing.assert_allclose(g, [-0.25, 0.0], atol=1e-16)


def test_zero_weight_and_reg_give_zero_gradient():
    data = _binary_dataset([[1.0, 0.0]], [1])
    g = hyperclean_ll_grad_y(data, np.array([-1e3]), np.zeros(2), np.array([0]))
    np.testing.assert_allclose(g, 0.0, atol=1e-300)


def test_jvp_coordinate_hand_value():
    data = _binary_dataset([[1.0, 0.0], [0.0, 2.0]], [1, 0])
    v = np.array([0.4, -1.0])
    out = hyperclean_jvp_x(data, np.zeros(2), np.zeros(2), v, np.array([0]))
    # sigmoid'(0) = 1/4, grad_y L_0 = (-1/2, 0)
    np.testing.assert_allclose(out, [0.25 * (-0.5 * 0.4), 0.0], atol=1e-16)


def test_jvp_counts_repeated_indices():
    data = _binary_dataset([[1.0, 0.0], [0.0, 2.0]], [1, 0])
    v = np.array([0.4, -1.0])
    single = hyperclean_jvp_x(data, np.zeros(2), np.zeros(2), v, np.array([0]))
    rep = hyperclean_jvp_x(data, np.zeros(2), np.zeros(2), v, np.array([0, 0, 1]))
    assert rep[0] == pytest.approx(2.0 / 3.0 * single[0], rel=1e-14)


def test_hvp_reg_only():
    data = _binary_dataset([[1.0, 0.0]], [1], reg=0.01)
    out = hyperclean_hvp_y(data, np.array([-1e3]), np.zeros(2), np.array([1.0, 0.0]), np.array([0]))
    np.testing.assert_allclose(out, [0.02, 0.0], atol=1e-15)


@pytest.mark.parametrize("fixture", ["small_hyperclean", "binary_hyperclean"])
def test_lower_objective_strongly_convex(fixture, request):
    prob = request.getfixturevalue(fixture)
    rng = np.random.default_rng(0)
    idx = prob.all_lower()
    for _ in range(10):
        x = rng.normal(size=prob.dim_x)
        y, v = rng.normal(size=prob.dim_y), rng.normal(size=prob.dim_y)
        assert v @ prob.lower_hvp_yy(x, y, v, idx) >= 2 * prob.reg * (v @ v) * (1 - 1e-12)
        y2 = y + v
        diff = prob.lower_grad_y(x, y2, idx) - prob.lower_grad_y(x, y, idx)
        assert diff @ v >= 2 * prob.reg * (v @ v) * (1 - 1e-12)


def test_hvp_symmetric(small_hyperclean):
    prob = small_hyperclean
    rng = np.random.default_rng(1)
    x, y = rng.normal(size=prob.dim_x), rng.normal(size=prob.dim_y)
    a, b = rng.normal(size=prob.dim_y), rng.normal(size=prob.dim_y)
    idx = prob.all_lower()
    assert a @ prob.lower_hvp_yy(x, y, b, idx) == pytest.approx(b @ prob.lower_hvp_yy(x, y, a, idx), rel=1e-12)


def test_lower_minimizer_zeroes_gradient(small_hyperclean):
    prob = small_hyperclean
    x = np.random.default_rng(2).normal(size=prob.dim_x)
    y = prob.lower_minimizer(x)
    assert np.linalg.norm(prob.lower_grad_y(x, y, prob.all_lower())) < 1e-8


def test_softmax_accuracy_and_validation_loss(small_hyperclean):
    prob = small_hyperclean
    assert prob.validation_loss(np.zeros(prob.dim_y)) == pytest.approx(np.log(3), rel=1e-14)
    acc = prob.test_accuracy(prob.lower_minimizer(np.zeros(prob.dim_x)))
    assert 0.0 <= acc <= 1.0


def test_corruption_extremes():
    labels = np.arange(100) % 10
    same, mask = corrupt_labels(make_rng(0), labels, 10, 0.0)
    np.testing.assert_array_equal(same, labels)
    assert not mask.any()
    flipped, mask = corrupt_labels(make_rng(0), labels, 10, 1.0)
    assert mask.all()
    assert np.all(flipped != labels)
    assert flipped.min() >= 0 and flipped.max() <= 9


def test_corruption_rate_binomial():
    labels = np.zeros(1000, dtype=np.int64)
    counts = [int(corrupt_labels(make_rng(s), labels, 5, 0.3)[1].sum()) for s in range(20)]
    sd = np.sqrt(1000 * 0.3 * 0.7)
    assert all(abs(c - 300) <= 4 * sd for c in counts)


def test_corruption_rejects_bad_probability():
    with pytest.raises(ValueError):
        corrupt_labels(make_rng(0), np.zeros(3, dtype=int), 2, 1.5)


def test_hyperclean_synthetic_layout():
    data = make_hyperclean_synthetic(50, 20, 30, 4, 3, 0.4, seed=1)
    assert data.train_features.shape == (50, 4)
    assert data.val_features.shape == (20, 4)
    assert data.test_features.shape == (30, 4)
    np.testing.assert_array_equal(data.corruption_mask, data.train_labels != data.true_train_labels)
    prob = HyperCleanProblem(data)
    assert (prob.dim_x, prob.dim_y, prob.n_upper, prob.n_lower) == (50, 12, 20, 50)


def test_binary_uses_single_weight_vector(binary_hyperclean):
    assert binary_hyperclean.dim_y == binary_hyperclean.data.dim


def test_upper_has_no_direct_x_gradient(small_hyperclean):
    prob = small_hyperclean
    out = prob.upper_grad_x(np.ones(prob.dim_x), np.ones(prob.dim_y), prob.all_upper())
    np.testing.assert_array_equal(out, 0.0)


def test_hyperclean_directions_match_formula(small_hyperclean):
    prob = small_hyperclean
    rng = np.random.default_rng(3)
    x, y, v = rng.normal(size=prob.dim_x), rng.normal(size=prob.dim_y), rng.normal(size=prob.dim_y)
    from bilevel_vr.oracle import full_tuple

    batch = full_tuple(prob)
    np.testing.assert_allclose(
        dir_v(prob, x, y, v, batch),
        prob.lower_hvp_yy(x, y, v, batch.lower) - prob.upper_grad_y(x, y, batch.upper),
    )
    np.testing.assert_allclose(dir_x(prob, x, y, v, batch), -prob.lower_jvp_xy(x, y, v, batch.lower))


# ---------- IDX ----------

def test_idx_labels_read(tmp_path):
    path = tmp_path / "labels.idx"
    path.write_bytes(struct.pack(">II", 0x801, 2) + bytes([3, 7]))
    np.testing.assert_array_equal(read_idx_labels(path), [3, 7])


def test_idx_bad_magic(tmp_path):
    path = tmp_path / "labels.idx"
    path.write_bytes(struct.pack(">II", 0x802, 2) + bytes([3, 7]))
    with pytest.raises(IDXFormatError, match="0x00000802"):
        read_idx_labels(path)


def test_idx_pixel_scaling(tmp_path):
    path = tmp_path / "images.idx"
    write_idx_images(path, np.array([[[255, 0], [0, 255]]], dtype=np.uint8))
    out = read_idx_images(path)
    assert out.shape == (1, 4)
    np.testing.assert_array_equal(out[0], [1.0, 0.0, 0.0, 1.0])


def test_idx_truncated(tmp_path):
    path = tmp_path / "images.idx"
    path.write_bytes(struct.pack(">IIII", 0x803, 2, 2, 2) + bytes(5))
    with pytest.raises(IDXFormatError, match="truncated"):
        read_idx_images(path)
    path.write_bytes(struct.pack(">I", 0x803))
    with pytest.raises(IDXFormatError, match="truncated"):
        read_idx_images(path)


def test_idx_count_mismatch(tmp_path):
    write_idx_images(tmp_path / "i.idx", np.zeros((3, 2, 2), dtype=np.uint8))
    write_idx_labels(tmp_path / "l.idx", np.zeros(2, dtype=np.uint8))
    with pytest.raises(IDXFormatError, match="count mismatch"):
        load_idx(tmp_path / "i.idx", tmp_path / "l.idx")


def test_idx_gzip(tmp_path):
    write_idx_labels(tmp_path / "l.idx", np.array([1, 2, 9], dtype=np.uint8))
    (tmp_path / "l.idx.gz").write_bytes(gzip.compress((tmp_path / "l.idx").read_bytes()))
    np.testing.assert_array_equal(read_idx_labels(tmp_path / "l.idx.gz"), [1, 2, 9])


def test_idx_round_trip(tmp_path):
    imgs = np.random.default_rng(0).integers(0, 256, size=(4, 3, 5), dtype=np.uint8)
    write_idx_images(tmp_path / "i.idx", imgs)
    write_idx_labels(tmp_path / "l.idx", np.arange(4, dtype=np.uint8))
    x, y = load_idx(tmp_path / "i.idx", tmp_path / "l.idx")
    np.testing.assert_allclose(x * 255.0, imgs.reshape(4, 15), atol=1e-12)
    np.testing.assert_array_equal(y, np.arange(4))
