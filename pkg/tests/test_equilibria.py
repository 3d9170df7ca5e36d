import json

import numpy as np
import pytest
from scipy.optimize import fsolve

from lss.dynamics import DampingFunction, LambdaFunction
from lss.equilibria import (DNE, NON_HYPERBOLIC, NON_NASH_LASE, UNSTABLE, analyze,
                            check_eigenvector_assumption, classify, fd_jacobian,
                            find_critical_points)
from lss.errors import ConfigError, DimensionError
from lss.game import Game, eval_omega


def test_counterexample_spectrum(counterexample):
    found, reports = analyze(counterexample, (-2.0, 2.0), 5)
    assert len(found) == 1
    np.testing.assert_allclose(found[0].coords, [0.0, 0.0], atol=1e-14)
    rep = reports[0]
    assert rep.classification == NON_NASH_LASE
    expected = np.sort_complex(np.roots([1.0, -0.9, 0.9]))
    np.testing.assert_allclose(rep.jacobian_eigs, expected, atol=1e-12)
    np.testing.assert_allclose(rep.jacobian_eigs.real, [0.45, 0.45], atol=1e-12)
    np.testing.assert_allclose(np.abs(rep.jacobian_eigs.imag), [0.83516, 0.83516], atol=1e-5)
    # the adjusted flow linearizes to the symmetric part, whose -0.1 repels
    np.testing.assert_allclose(rep.h_eigs.real, [-0.1, 1.0], atol=1e-6)
    np.testing.assert_allclose(rep.s_eigs, [-0.1, 1.0], atol=1e-14)


@pytest.mark.parametrize("matrix, label", [
    ([[2.0, 0.0], [0.0, -1.0]], DNE),
    ([[-1.0, 0.0], [0.0, -1.0]], UNSTABLE),
    ([[0.0, 1.0], [1.0, 0.0]], NON_HYPERBOLIC),
    ([[1.0, 1.0], [1.0, 0.1]], NON_NASH_LASE),
])
def test_labels_on_quadratics(matrix, label):
    rep = classify(Game.quadratic(matrix, 1, 1), [0.0, 0.0], with_h=False)
    assert rep.classification == label
    assert rep.hyperbolic is (label != NON_HYPERBOLIC)


def test_threshold_tau_is_respected():
    # eigenvalues of the game Jacobian at 0.5e-8: inside the band, so not hyperbolic
    game = Game.quadratic([[0.5e-8, 0.0], [0.0, -0.5e-8]], 1, 1)
    assert classify(game, [0.0, 0.0], with_h=False).classification == NON_HYPERBOLIC
    game = Game.quadratic([[2e-8, 0.0], [0.0, -2e-8]], 1, 1)
    assert classify(game, [0.0, 0.0], with_h=False).classification == DNE


def test_non_critical_point_rejected(counterexample):
    with pytest.raises(ConfigError, match="not a critical point"):
        classify(counterexample, [0.1, 0.0])


def test_toy2d_small_box_against_independent_root_finder(toy2d):
    found = find_critical_points(toy2d, (-4.0, 4.0), 40)
    assert len(found) == 3
    for p in found:
        assert p.omega_residual <= 1e-10
        root = fsolve(lambda q: eval_omega(toy2d, q), p.coords, xtol=1e-13)
        np.testing.assert_allclose(root, p.coords, atol=1e-9)
    labels = sorted(classify(toy2d, p).classification for p in found)
    assert labels == sorted([NON_NASH_LASE, UNSTABLE, UNSTABLE])


def test_h_linearization_matches_symmetric_part_on_toy2d(toy2d):
    found, reports = analyze(toy2d, (-16.0, 16.0), 40)
    for rep in reports:
        np.testing.assert_allclose(np.sort(rep.h_eigs.real), rep.s_eigs,
                                   atol=1e-5 * max(1.0, np.abs(rep.s_eigs).max()))
        np.testing.assert_allclose(rep.h_eigs.imag, 0.0, atol=1e-5)
        assert rep.residual <= 1e-10


def test_search_bookkeeping():
    # omega = (x, 0): every seed has a singular Jacobian
    game = Game.quadratic([[1.0, 0.0], [0.0, 0.0]], 1, 1)
    found = find_critical_points(game, (-1.0, 1.0), 4)
    assert len(found) == 0 and found.seeds == 16 and found.singular_seeds == 16


def test_dedup_and_box_filter():
    game = Game.quadratic([[1.0, 0.0], [0.0, -1.0]], 1, 1)
    found = find_critical_points(game, (1.0, 3.0), 3, seeds=[[0.1, 0.2], [-0.3, 0.5]],
                                 keep_outside=True)
    assert len(found) == 1
    found = find_critical_points(game, (1.0, 3.0), 3, seeds=[[0.1, 0.2], [-0.3, 0.5]])
    assert len(found) == 0 and found.outside_box == 2


@pytest.mark.parametrize("box, err", [((2.0, 1.0), ConfigError), ((0.0, np.inf), ConfigError),
                                      ([(0, 1), (0, 1), (0, 1)], DimensionError)])
def test_bad_boxes(counterexample, box, err):
    with pytest.raises(err):
        find_critical_points(counterexample, box, 4)


def test_fd_jacobian_on_linear_map():
    m = np.array([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_allclose(fd_jacobian(lambda z: z @ m.T, np.array([0.3, 0.1])), m,
                               atol=1e-10)


def test_adjustment_never_cancels_the_field(toy2d, counterexample):
    rng = np.random.default_rng(3)
    for game, scale in ((toy2d, 16.0), (counterexample, 2.0)):
        samples = rng.uniform(-scale, scale, size=(2000, 2))
        rep = check_eigenvector_assumption(game, np.vstack([samples, [[0.0, 0.0]]]),
                                           LambdaFunction(1e-4))
        assert rep.ok and rep.skipped_critical == 1
        assert rep.min_relative_gap > 1e-3


def test_report_serializes(counterexample):
    rep = classify(counterexample, [0.0, 0.0], LambdaFunction(1e-4), DampingFunction(1e-4))
    data = json.loads(json.dumps(rep.to_dict()))
    assert data["classification"] == NON_NASH_LASE
    assert set(data["jacobian_eigs"][0]) == {"re", "im"}
