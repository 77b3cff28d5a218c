import numpy as np
import pytest
from numpy.testing import assert_allclose

from drls.analysis import (
    build_averaged_system,
    check_mean_stability,
    check_mse_stability,
    covariance_recursion_iterate,
    mean_stability_bound,
    noise_covariances,
    steady_state_solve,
    to_db,
)
from drls.errors import AssemblyError, ModelError, StabilityError
from drls.signals import iid_scenario
from drls.topology import from_edges, random_geometric


def _pair_system(c=4.0, lam=0.95, sigma2_eta=0.1, sigma2_eps=0.5):
    """Two sensors, one link, scalar parameter: everything is computable
    by hand."""
    top = from_edges(2, [(0, 1)])
    model = iid_scenario(2, 1, seed=0, sigma2_eta=sigma2_eta,
                         sigma2_eps=sigma2_eps)
    return top, model, build_averaged_system(top, model, lam, c)


def test_pair_oracle_coupling_and_mixing():
    _, _, system = _pair_system()
    lap = np.array([[1.0, -1.0], [-1.0, 1.0]])
    assert_allclose(system.lap_scaled, 2.0 * lap)
    assert_allclose(system.rh_lam_inv, 0.05 * np.eye(2))
    # c/4 = 1 here, so the mixing maps are bare selection matrices
    assert_allclose(system.recv_mix, [[0.0, 1.0], [1.0, 0.0]])
    assert_allclose(system.bcast_mix, np.eye(2))
    assert_allclose(system.lifted_mix, lap / 4.0, atol=1e-12)


def test_pair_oracle_transitions():
    _, _, system = _pair_system()
    lap2 = system.lap_scaled
    eye = np.eye(2)
    assert_allclose(system.raw_transition,
                    np.block([[-lap2, -eye], [lap2, eye]]))
    assert_allclose(system.mean_transition,
                    np.block([[-0.05 * lap2, -0.05 * eye], [lap2, eye]]))
    # fluctuation transition contracts at exactly 1 - (1-lam)(c/2)*2 = 0.8
    assert check_mse_stability(system).rho == pytest.approx(0.8, abs=1e-12)


def test_pair_oracle_mean_stability_bound():
    top, model, _ = _pair_system()
    assert mean_stability_bound(top, model, 0.95) == pytest.approx(40.0)
    assert mean_stability_bound(top, model, 1.0) == np.inf


def test_pair_oracle_mean_eigenstructure():
    _, _, system = _pair_system()
    report = check_mean_stability(system)
    assert report.unit_eigen_count == 1
    assert report.expected_unit_count == 1
    assert report.semisimple
    assert report.max_other_modulus == pytest.approx(0.8, abs=1e-9)
    assert report.left_upper_norm < 1e-10
    assert report.left_null_residual < 1e-10
    assert report.stable


def test_pair_oracle_noise_covariances():
    top, model, system = _pair_system()
    noise = noise_covariances(system, model)
    assert_allclose(noise.r_eta, 0.1 * np.eye(2))
    assert_allclose(noise.r_eta_bar, 0.025 * np.eye(2))
    assert_allclose(noise.r_eps_inf, 0.5 / (1 - 0.95 ** 2) * np.eye(2))
    # after the first absorbed sample the data-noise power is exactly rh*sigma2
    assert_allclose(noise.r_eps(0), 0.5 * np.eye(2), atol=1e-12)
    expected_feed = 0.05 ** 2 * np.array([[0.225, -0.2], [-0.2, 0.225]])
    assert_allclose(noise.feedthrough, expected_feed, atol=1e-14)


def test_intertwining_identity():
    """bdiag(I, lap) maps the fluctuation transition onto the mean one."""
    for seed, p in [(1, 1), (2, 2), (3, 3)]:
        top = random_geometric(6, 0.6, seed=seed)
        model = iid_scenario(top.J, p, seed=seed)
        system = build_averaged_system(top, model, 0.95, 0.1)
        jp = top.J * p
        lift = np.block([
            [np.eye(jp), np.zeros((jp, jp))],
            [np.zeros((jp, jp)), system.lap_scaled],
        ])
        left = lift @ system.inner_transition
        right = system.mean_transition @ lift
        assert np.abs(left - right).max() < 1e-10


def test_mixing_maps_agree_with_per_receiver_sums():
    """recv_mix/bcast_mix reproduce loop-computed noise aggregates.

    The simulation hands receiver-major rows (row m = what link_owner[m]
    hears); the analysis stacks transmitter-major supervectors. The flip
    permutation converts between them.
    """
    top = random_geometric(7, 0.6, seed=4)
    p, c = 2, 0.4
    model = iid_scenario(top.J, p, seed=0)
    system = build_averaged_system(top, model, 0.95, c)
    rng = np.random.default_rng(0)
    eta_rx = rng.standard_normal((top.n_links, p))
    eta_tx = eta_rx[top.link_flip]
    supervec = eta_tx.reshape(-1)

    heard = system.recv_mix @ supervec
    echoed = system.bcast_mix @ supervec
    for j in range(top.J):
        mine = slice(int(top.link_start[j]), int(top.link_start[j + 1]))
        # everything sensor j hears, straight off the receiver-major rows
        assert_allclose(heard[j * p:(j + 1) * p],
                        c / 4.0 * eta_rx[mine].sum(axis=0), atol=1e-12)
        # every corruption of sensor j's own broadcast
        own = np.flatnonzero(top.link_peer == j)
        assert_allclose(echoed[j * p:(j + 1) * p],
                        c / 4.0 * eta_rx[own].sum(axis=0), atol=1e-12)


def test_lift_and_projector_residuals():
    top = random_geometric(8, 0.55, seed=2)
    model = iid_scenario(top.J, 2, seed=2)
    system = build_averaged_system(top, model, 0.95, 0.1)
    diff = system.bcast_mix - system.recv_mix
    assert np.linalg.norm(system.lap_scaled @ system.lifted_mix - diff) < 1e-10
    proj = system.inner_transition[top.J * 2:, :top.J * 2]
    assert np.linalg.norm(proj @ proj - proj) < 1e-10


def test_build_rejects_degenerate_parameters():
    top = from_edges(2, [(0, 1)])
    model = iid_scenario(2, 1, seed=0)
    with pytest.raises(AssemblyError, match="forgetting factor"):
        build_averaged_system(top, model, 1.0, 0.1)
    with pytest.raises(AssemblyError, match="consensus step"):
        build_averaged_system(top, model, 0.95, 0.0)
    with pytest.raises(ModelError, match="sensors"):
        build_averaged_system(from_edges(3, [(0, 1), (1, 2)]), model, 0.95, 0.1)


def test_noise_covariances_use_receiver_profiles():
    """Block k of the stacked link-noise covariance belongs to the
    receiving end of directed link k."""
    top = from_edges(3, [(0, 1), (1, 2)])
    model = iid_scenario(3, 1, seed=0)
    r_eta = np.stack([(0.1 * (j + 1)) * np.eye(1) for j in range(3)])
    from drls.signals import SensorEnsembleModel
    model = SensorEnsembleModel(
        p=1, s0=model.s0, rh=model.rh, sigma2_eps=model.sigma2_eps,
        r_eta=r_eta, regressor_kind="iid_gaussian",
    )
    system = build_averaged_system(top, model, 0.95, 0.1)
    noise = noise_covariances(system, model)
    expected = np.diag([0.1 * (int(top.link_peer[k]) + 1)
                        for k in range(top.n_links)])
    assert_allclose(noise.r_eta, expected)
    assert_allclose(np.diag(noise.r_eta_bar),
                    [d / 4.0 * 0.1 * (j + 1) for j, d in enumerate(top.degrees)])


def test_steady_state_routes_agree():
    top = random_geometric(5, 0.7, seed=3)
    model = iid_scenario(top.J, 2, seed=3, sigma2_eta=0.1)
    system = build_averaged_system(top, model, 0.95, 0.1)
    noise = noise_covariances(system, model)
    direct = steady_state_solve(system, noise, method="vec")
    iterated = steady_state_solve(system, noise, method="iterate")
    rel = np.linalg.norm(direct.r_z - iterated.r_z) / np.linalg.norm(direct.r_z)
    assert rel < 1e-6
    assert direct.method == "vec"
    assert iterated.method == "iterate"
    assert_allclose(direct.msd, iterated.msd, rtol=1e-6)


def test_steady_state_report_consistency():
    top, model, system = _pair_system()
    noise = noise_covariances(system, model)
    report = steady_state_solve(system, noise)
    assert_allclose(report.mse, report.emse + model.sigma2_eps)
    assert report.msd_global == pytest.approx(report.msd.mean())
    assert (report.msd > 0).all()
    # symmetric PSD stationary covariance
    assert_allclose(report.r_z, report.r_z.T, atol=1e-12)
    assert np.linalg.eigvalsh(report.r_z).min() > -1e-12
    assert report.rho == pytest.approx(0.8, abs=1e-9)


def test_steady_state_refuses_unstable_dynamics():
    top, model, system = _pair_system(c=45.0)
    noise = noise_covariances(system, model)
    with pytest.raises(StabilityError, match="spectral radius"):
        steady_state_solve(system, noise)


def test_steady_state_unknown_method():
    top, model, system = _pair_system()
    noise = noise_covariances(system, model)
    with pytest.raises(ValueError, match="unknown steady-state method"):
        steady_state_solve(system, noise, method="magic")


def test_link_noise_raises_the_prediction():
    top = random_geometric(6, 0.6, seed=1)
    levels = []
    for sigma2_eta in (0.0, 0.1, 0.2):
        model = iid_scenario(top.J, 2, seed=1, sigma2_eta=sigma2_eta)
        system = build_averaged_system(top, model, 0.95, 0.1)
        report = steady_state_solve(system, noise_covariances(system, model))
        levels.append(report.emse_global)
    assert levels[0] < levels[1] < levels[2]


def test_covariance_trajectory_fixed_step_mode():
    top, model, system = _pair_system()
    noise = noise_covariances(system, model)
    traj = covariance_recursion_iterate(system, noise, steps=50)
    assert traj.steps == 50
    assert traj.converged
    assert traj.network_msd.shape == (50,)
    # from a zero start the error power ramps up monotonically here
    assert (np.diff(traj.network_msd) > 0).all()


def test_covariance_trajectory_converges_to_the_fixed_point():
    top, model, system = _pair_system()
    noise = noise_covariances(system, model)
    traj = covariance_recursion_iterate(system, noise)
    assert traj.converged
    report = steady_state_solve(system, noise, method="vec")
    assert traj.network_msd[-1] == pytest.approx(float(np.trace(report.r_y1)),
                                                 rel=1e-6)


def test_report_csv_schema(tmp_path):
    top, model, system = _pair_system()
    noise = noise_covariances(system, model)
    report = steady_state_solve(system, noise)
    path = tmp_path / "prediction.csv"
    report.to_csv(path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "sensor_id,msd_lin,msd_db,emse_lin,emse_db,mse_lin,mse_db"
    assert len(lines) == 1 + top.J + 1
    assert lines[-1].startswith("global,")
    cells = lines[1].split(",")
    assert cells[0] == "0"
    assert float(cells[1]) == pytest.approx(report.msd[0])
    assert float(cells[2]) == pytest.approx(to_db(report.msd[0]), abs=1e-6)


def test_to_db_floor():
    assert to_db(0.0) == pytest.approx(-3000.0)
    assert to_db(1.0) == 0.0
    assert to_db(100.0) == pytest.approx(20.0)
