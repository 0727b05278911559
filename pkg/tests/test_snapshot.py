
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from snapspace.errors import ConfigError, MalformedFileError, ShapeMismatchError
from snapspace.snapshot import (
    ColumnStream,
    SnapshotMatrix,
    SpaceGrid,
    TimeGrid,
    add_noise,
    assemble,
    averaged_output_grid,
    averaging_gain,
    load_matrix,
    noise_block,
    save_matrix,
    trajectory_stream,
    trapezoid_weights,
    window_average,
)
from snapspace.spectral import CoefficientFamily, EigenFamily, trajectory_eval


def test_trapezoid_weights_integrate_linear_exactly():
    x = np.linspace(0, 2, 11)
    w = trapezoid_weights(x)
    assert w.sum() == pytest.approx(2.0)
    assert w @ x == pytest.approx(2.0)
    assert w[0] == pytest.approx(0.1) and w[1] == pytest.approx(0.2)


def test_grid_weights_2d():
    sg = SpaceGrid.uniform((1.0, 0.5), (11, 21))
    assert sg.shape == (11, 21) and sg.size == 231
    assert sg.weights.sum() == pytest.approx(0.5)
    x, y = sg.coordinates()
    assert sg.inner(x * y, np.ones(sg.size)) == pytest.approx(0.5 * 0.125)


def test_time_grids():
    tg = TimeGrid.log(1e-6, 1.0, 7)
    assert tg.times[0] == pytest.approx(1e-6) and tg.times[-1] == pytest.approx(1.0)
    assert np.allclose(np.diff(np.log10(tg.times)), 1.0)
    u = TimeGrid.with_step(1e-6, 1e-2, 1e-3)
    assert u.dt == pytest.approx(1e-3)
    with pytest.raises(ConfigError):
        TimeGrid.uniform(1.0, 0.5, 10)


def test_assemble_1d_matches_pointwise(small_dirichlet):
    m = small_dirichlet
    fam = EigenFamily.dirichlet1d()
    c = CoefficientFamily.alternating_inverse_square()
    x = m.space_grid.axes[0]
    for j in (0, 57, 299):
        t = m.time_grid.times[j]
        ref = np.array([trajectory_eval(fam, c, xi, t).value for xi in x[::20]])
        assert np.allclose(m.values[::20, j], ref, atol=1e-14)


def test_assemble_2d_factored_matches_pointwise():
    fam = EigenFamily.rect2d()
    sg = SpaceGrid.for_family(fam, 41)
    tg = TimeGrid.log(1e-3, 1.0, 20)
    m = assemble(fam, CoefficientFamily.product_inverse_square(), sg, tg)
    assert m.is_factored
    x, y = sg.coordinates()
    for j in (0, 10, 19):
        for k in (5, 400, 1500):
            ref = trajectory_eval(fam, CoefficientFamily.product_inverse_square(), (x[k], y[k]), tg.times[j]).value
            assert m.values[k, j] == pytest.approx(ref, abs=1e-14)


@settings(max_examples=15, deadline=None)
@given(st.floats(-2, 2), st.floats(-2, 2))
def test_assembly_linear(a, b):
    fam = EigenFamily.dirichlet1d()
    sg = SpaceGrid.for_family(fam, 51)
    tg = TimeGrid.log(1e-3, 1.0, 15)
    u = [1.0, 0.0, -0.3, 0.2]
    v = [0.0, 0.7, 0.1, -1.0]
    mu = assemble(fam, CoefficientFamily.explicit(u), sg, tg).values
    mv = assemble(fam, CoefficientFamily.explicit(v), sg, tg).values
    mw = assemble(fam, CoefficientFamily.explicit([a * p + b * q for p, q in zip(u, v)]), sg, tg).values
    assert np.allclose(mw, a * mu + b * mv, atol=1e-13)


def test_matrix_is_read_only(small_dirichlet):
    with pytest.raises(ValueError):
        small_dirichlet.values[0, 0] = 1.0


def test_noise_is_deterministic_and_column_local():
    a = noise_block(3, 0, 3000, 5, 1e-3)
    b = noise_block(3, 1500, 700, 5, 1e-3)
    assert np.array_equal(a[:, 1500:2200], b)
    assert np.all(np.abs(a) <= 1e-3)


def test_noise_variance():
    d = 1e-3
    z = noise_block(11, 0, 4000, 50, d)
    assert z.var() == pytest.approx(d * d / 3, rel=0.05)
    assert abs(z.mean()) < 1e-5


def test_add_noise_provenance(small_dirichlet):
    n = add_noise(small_dirichlet, 1e-3, 5)
    assert n.provenance.startswith("noisy")
    assert np.max(np.abs(n.values - small_dirichlet.values)) <= 1e-3
    with pytest.raises(ConfigError):
        add_noise(n, 1e-3, 5)


def _direct_average(M, S, starts):
    return np.stack([M[:, k : k + S + 1].mean(axis=1) for k in starts], axis=1)


@pytest.mark.parametrize("S", [0, 1, 7, 100])
def test_window_average_matches_direct_mean(S):
    fam = EigenFamily.dirichlet1d()
    sg = SpaceGrid.for_family(fam, 31)
    fine = TimeGrid.with_step(1e-6, 0.5, 1e-3)
    m = assemble(fam, CoefficientFamily.alternating_inverse_square(), sg, fine)
    m = add_noise(m, 1e-3, 1)
    out = averaged_output_grid(fine, S, stride=3)
    avg = window_average(ColumnStream.from_matrix(m, chunk=37), S, out)
    starts = np.rint((out.times - fine.t0) / fine.dt).astype(int)
    assert np.allclose(avg.values, _direct_average(m.values, S, starts), rtol=0, atol=1e-15)


def test_stream_matches_matrix():
    fam = EigenFamily.dirichlet1d()
    sg = SpaceGrid.for_family(fam, 21)
    fine = TimeGrid.with_step(1e-6, 3.0, 1e-3)
    c = CoefficientFamily.alternating_inverse_square()
    m = add_noise(assemble(fam, c, sg, fine), 1e-3, 9)
    st_ = trajectory_stream(fam, c, sg, fine, noise=1e-3, seed=9)
    out = averaged_output_grid(fine, 10, 50)
    a = window_average(st_, 10, out).values
    b = window_average(m, 10, out).values
    assert np.allclose(a, b, atol=1e-16)


def test_averaging_gain_closed_form():
    rate, S, dt = 30.0, 99, 1e-3
    direct = np.mean(np.exp(-rate * dt * np.arange(S + 1)))
    assert averaging_gain(rate, S, dt) == pytest.approx(direct, rel=1e-14)
    assert averaging_gain(0.0, S, dt) == 1.0


def test_window_too_long():
    fine = TimeGrid.with_step(1e-6, 0.01, 1e-3)
    with pytest.raises(ConfigError):
        averaged_output_grid(fine, 100)


def test_csv_roundtrip(tmp_path, small_dirichlet):
    p = tmp_path / "u.csv"
    save_matrix(small_dirichlet, p)
    back = load_matrix(p)
    assert np.array_equal(back.values, small_dirichlet.values)
    assert back.space_grid.matches(small_dirichlet.space_grid)
    assert np.array_equal(back.time_grid.times, small_dirichlet.time_grid.times)


def test_csv_shape_mismatch(tmp_path, small_dirichlet):
    p = tmp_path / "u.csv"
    save_matrix(small_dirichlet, p)
    np.savetxt(p, small_dirichlet.values[:, :10], delimiter=",")
    with pytest.raises(ShapeMismatchError):
        load_matrix(p)


def test_csv_malformed(tmp_path, small_dirichlet):
    p = tmp_path / "u.csv"
    save_matrix(small_dirichlet, p)
    p.write_text("1,2,abc\n")
    with pytest.raises((MalformedFileError, ShapeMismatchError)):
        load_matrix(p)


def test_snapshot_matrix_shape_checked():
    sg = SpaceGrid.uniform((1.0,), (5,))
    tg = TimeGrid.uniform(0.1, 1.0, 3)
    with pytest.raises(ShapeMismatchError):
        SnapshotMatrix(sg, tg, np.zeros((4, 3)))
    assert SnapshotMatrix(sg, tg, np.ones((5, 3))).column_norms() == pytest.approx([1.0] * 3)
