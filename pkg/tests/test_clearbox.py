import json

import numpy as np
import pytest
from sklearn.base import clone

from grovermesh.calibration import (
    ClearBoxCalibrator,
    TrainingSet,
    clearbox_invert,
    clearbox_train,
    compile_program,
    gauge_directions,
    generate_training_set,
    phase_rmse,
    tvd,
)
from grovermesh.calibration.clearbox import _forward_loss, _mesh
from grovermesh.exceptions import (
    DegenerateStateError,
    DimensionError,
    InfeasibleInversionError,
)
from grovermesh.grover import GroverSpec, grover_unitary, schedule_for
from grovermesh.hardware import (
    ImperfectionConfig,
    factory_voltages,
    mesh_transfer,
    phases_from_voltages,
    sample_hardware,
)
from grovermesh.mesh import BALANCED_ANGLE, canonical_slots, clements_decompose

TWO_PI = 2 * np.pi


@pytest.fixture(scope="module")
def hw4():
    return sample_hardware(7, mode_count=12).submesh(4)


@pytest.fixture(scope="module")
def model4(hw4):
    data = generate_training_set(hw4, 300, shots=None, seed=0)
    return clearbox_train(data, hw4, random_state=0, max_epochs=600)


def fitted(crosstalk, passive, vmax=10.0):
    """A model with given parameters and balanced couplers."""
    n = int(round((1 + np.sqrt(1 + 4 * len(passive))) / 2))
    m = ClearBoxCalibrator()
    m.crosstalk_ = np.asarray(crosstalk, float)
    m.passive_ = np.asarray(passive, float)
    m.splitter_angles_ = np.full((len(canonical_slots(n)), 2), BALANCED_ANGLE)
    m.max_voltage_ = vmax
    m.mode_count_ = n
    m.history_ = [1.0]
    m.n_epochs_ = 1
    m.final_loss_ = 1.0
    return m


def test_training_set_validation(hw4):
    with pytest.raises(DegenerateStateError):
        generate_training_set(hw4, 0)
    with pytest.raises(DegenerateStateError):
        TrainingSet(np.zeros((0, 12)), np.zeros((0, 4, 4)))
    with pytest.raises(DimensionError):
        TrainingSet(np.zeros((3, 12)), np.zeros((2, 4, 4)))


def test_training_set_shapes_and_determinism(hw4):
    a = generate_training_set(hw4, 20, shots=1000, seed=5)
    b = generate_training_set(hw4, 20, shots=1000, seed=5)
    assert a.voltages.shape == (20, 12) and a.distributions.shape == (20, 4, 4)
    np.testing.assert_array_equal(a.distributions, b.distributions)
    np.testing.assert_allclose(a.distributions.sum(axis=1), 1.0)
    assert np.all((a.voltages >= 0) & (a.voltages <= hw4.max_voltage))
    train, test = a.split(15)
    assert len(train) == 15 and len(test) == 5


def test_noiseless_set_matches_hardware(hw4):
    data = generate_training_set(hw4, 5, shots=None, seed=1)
    t = mesh_transfer(data.voltages, hw4)
    expected = np.abs(t / hw4.output_transmission[:, None] / hw4.input_transmission) ** 2
    np.testing.assert_allclose(data.distributions, expected, atol=1e-12)


def test_loss_gradient_matches_finite_differences(hw4):
    rng = np.random.default_rng(2)
    n, h = 4, hw4.n_heaters
    mesh = _mesh(n)
    scaled = np.diag(rng.uniform(4, 8, h)) + 0.1 * rng.normal(size=(h, h))
    passive = rng.uniform(0, TWO_PI, h)
    angles = BALANCED_ANGLE + 0.05 * rng.normal(size=(len(canonical_slots(n)), 2))
    u = rng.uniform(-0.5, 0.5, (6, h))
    y = rng.dirichlet(np.ones(n), size=(6, n)).transpose(0, 2, 1)
    _, grads = _forward_loss(mesh, scaled, passive, angles, u, y)
    eps = 1e-6
    for param, grad in zip((scaled, passive, angles), grads):
        for idx in list(np.ndindex(param.shape))[:: max(1, param.size // 15)]:
            old = param[idx]
            param[idx] = old + eps
            up = _forward_loss(mesh, scaled, passive, angles, u, y, grad=False)[0]
            param[idx] = old - eps
            down = _forward_loss(mesh, scaled, passive, angles, u, y, grad=False)[0]
            param[idx] = old
            fd = (up - down) / (2 * eps)
            assert grad[idx] == pytest.approx(fd, rel=1e-5, abs=1e-11)


def test_fit_reaches_low_tvd(hw4, model4):
    test = generate_training_set(hw4, 100, shots=None, seed=99)
    assert -model4.score(test.voltages, test.distributions) < 0.01
    assert phase_rmse(model4, hw4, test.voltages) < 0.05


def test_epoch_loss_trend_non_increasing(model4):
    h = np.asarray(model4.history_)
    window = 20
    smoothed = np.convolve(h, np.ones(window) / window, mode="valid")[::window]
    assert np.all(np.diff(smoothed) <= 1e-12 + 1e-3 * smoothed[:-1])
    assert h[-1] < h[0]


def test_zero_crosstalk_recovered():
    cfg = ImperfectionConfig(crosstalk_scale=0.0)
    hw = sample_hardware(4, cfg, mode_count=12).submesh(4)
    data = generate_training_set(hw, 300, shots=None, seed=2)
    model = clearbox_train(data, hw, random_state=2, max_epochs=600)
    c = model.crosstalk_
    off = np.abs(c - np.diag(np.diag(c)))
    assert off.max() <= 0.05 * np.median(np.diag(c))


def test_training_is_deterministic(hw4):
    data = generate_training_set(hw4, 40, shots=None, seed=3)
    a = clearbox_train(data, hw4, random_state=1, max_epochs=20)
    b = clearbox_train(data, hw4, random_state=1, max_epochs=20)
    np.testing.assert_array_equal(a.crosstalk_, b.crosstalk_)
    assert a.history_ == b.history_


def test_invert_at_passive_phase_is_zero_voltage():
    rng = np.random.default_rng(0)
    c = np.diag(rng.uniform(0.1, 0.2, 12)) + 0.002 * rng.random((12, 12))
    c0 = rng.uniform(0, TWO_PI, 12)
    np.testing.assert_allclose(clearbox_invert(fitted(c, c0), c0), 0.0, atol=1e-9)


def test_invert_diagonal_closed_form():
    rng = np.random.default_rng(1)
    diag = rng.uniform(0.1, 0.2, 12)
    c0 = rng.uniform(0, TWO_PI, 12)
    desired = rng.uniform(0, TWO_PI, 12)
    v = clearbox_invert(fitted(np.diag(diag), c0), desired)
    np.testing.assert_allclose(v, np.sqrt(np.mod(desired - c0, TWO_PI) / diag), rtol=1e-10)


def test_invert_round_trip(model4):
    rng = np.random.default_rng(4)
    for _ in range(10):
        desired = rng.uniform(0, TWO_PI, 12)
        v = clearbox_invert(model4, desired)
        err = np.mod(model4.transform(v[None])[0] - desired + np.pi, TWO_PI) - np.pi
        assert np.abs(err).max() < 1e-8


def test_invert_infeasible():
    # response too weak to reach a full period within range
    model = fitted(np.diag(np.full(12, 0.01)), np.zeros(12))
    desired = np.full(12, 0.5)
    desired[3] = 3.0
    with pytest.raises(InfeasibleInversionError) as info:
        clearbox_invert(model, desired)
    assert 3 in info.value.heaters
    with pytest.raises(DimensionError):
        clearbox_invert(model, np.zeros(5))


def test_compiled_voltages_realise_phases(hw4, model4):
    spec = GroverSpec(4, (1,), "deterministic")
    u = grover_unitary(spec, schedule_for(spec))
    program = clements_decompose(u)
    v = compile_program(model4, program, refine=False)
    got = phases_from_voltages(hw4, v[None])[0]
    err = np.mod(got - program.heater_phases() + np.pi, TWO_PI) - np.pi
    null = gauge_directions(4)
    err = err - (err @ null.T) @ null
    assert np.sqrt(np.mean(err ** 2)) < 0.05
    v = compile_program(model4, program)
    dist = np.abs(mesh_transfer(v, hw4, input_modes=[0])[:, 0]) ** 2
    naive = np.abs(mesh_transfer(factory_voltages(hw4, program), hw4, input_modes=[0])[:, 0]) ** 2
    target = np.abs(u[:, 0]) ** 2
    assert tvd(dist / dist.sum(), target) < tvd(naive / naive.sum(), target)


def test_gauge_directions_leave_intensities_unchanged():
    null = gauge_directions(5)
    assert null.shape[0] == 4
    np.testing.assert_allclose(null @ null.T, np.eye(len(null)), atol=1e-10)
    rng = np.random.default_rng(0)
    model = fitted(np.eye(20), np.zeros(20))
    ph = rng.uniform(0, TWO_PI, 20)
    a = np.abs(model.program_transfer(ph)) ** 2
    b = np.abs(model.program_transfer(ph + 0.7 * null[0] - 1.3 * null[-1])) ** 2
    np.testing.assert_allclose(a, b, atol=1e-10)


def test_estimator_api(model4, tmp_path):
    params = model4.get_params()
    assert params["max_epochs"] == 600 and params["random_state"] == 0
    assert clone(model4).get_params() == params
    path = tmp_path / "model.json"
    model4.save(path)
    again = ClearBoxCalibrator.load(path)
    np.testing.assert_array_equal(again.crosstalk_, model4.crosstalk_)
    np.testing.assert_array_equal(again.splitter_angles_, model4.splitter_angles_)
    x = np.full((1, 12), 3.0)
    np.testing.assert_array_equal(again.predict(x), model4.predict(x))
    assert json.loads(path.read_text())["schema_version"] == 1
    bad = model4.to_dict()
    bad["schema_version"] = 99
    with pytest.raises(ValueError):
        ClearBoxCalibrator.from_dict(bad)
    csv_path = tmp_path / "loss.csv"
    model4.history_to_csv(csv_path)
    assert len(csv_path.read_text().splitlines()) == model4.n_epochs_ + 1


def test_unfitted_and_bad_shapes(hw4):
    from sklearn.exceptions import NotFittedError
    with pytest.raises(NotFittedError):
        ClearBoxCalibrator().transform(np.zeros((1, 12)))
    with pytest.raises(DimensionError):
        ClearBoxCalibrator().fit(np.zeros((3, 11)), np.zeros((3, 4, 4)))
    with pytest.raises(DimensionError):
        ClearBoxCalibrator().fit(np.zeros((3, 12)), np.zeros((3, 3, 3)))
    with pytest.raises(ValueError):
        ClearBoxCalibrator().fit(-np.ones((3, 12)), np.zeros((3, 4, 4)))
