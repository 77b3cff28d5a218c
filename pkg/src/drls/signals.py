"""
Sensor observation models and seeded snapshot streams.

Each sensor j observes x_j(t) = h_j(t)^T s0 + eps_j(t) with its own
regressor covariance R_hj and observation-noise variance. Two regressor
kinds are supported:

* ``iid_gaussian``: h_j(t) drawn i.i.d. Gaussian(0, R_hj) across time.
* ``ar1_shift``: shift-structure regressors built from one scalar AR(1)
  process per sensor, h_j(t) = [h_j(t), h_j(t-1), ..., h_j(t-p+1)], with
  h_j(t) = (1-rho)*beta_j*h_j(t-1) + sqrt(rho)*omega_j(t) and uniform
  driving noise of variance sigma2_omega_j. The model carries the exact
  stationary autocovariance (Toeplitz) so the analysis module can use it.

Inter-sensor links add receiver-side noise with per-receiver covariance
R_eta_j, applied to both the estimate exchange and the multiplier exchange
(independent draws). Streams are deterministic per seed and keep one child
generator per noise kind, with per-sensor scaling applied after the
unit-variance draws, so changing one sensor's noise level or disabling a
noise source never perturbs any other draw.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ModelError, SequencingError

REGRESSOR_KINDS = ("iid_gaussian", "ar1_shift")

#: scalar AR(1) steps taken before t = 1 so streams start near-stationary
AR_WARMUP_STEPS = 200


def ar_stationary_covariance(rho, beta, sigma2_omega, p):
    """Exact stationary covariance of a shift-structure AR(1) regressor.

    For h(t) = a h(t-1) + sqrt(rho) omega(t) with a = (1-rho)*beta and
    Var(omega) = sigma2_omega, the scalar process has stationary variance
    rho*sigma2_omega / (1 - a^2) and lag-k autocovariance var * a^k; the
    regressor covariance is the p x p Toeplitz matrix of those lags.
    """
    a = (1.0 - rho) * beta
    if not abs(a) < 1.0:
        raise ModelError(f"AR coefficient (1-rho)*beta = {a} is not stable")
    var = rho * sigma2_omega / (1.0 - a * a)
    lags = np.arange(p)
    return var * a ** np.abs(lags[:, None] - lags[None, :])


def _check_spd(m, name):
    if not np.allclose(m, m.T, atol=1e-12):
        raise ModelError(f"{name} must be symmetric")
    try:
        np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        raise ModelError(f"{name} is not positive definite")


def _psd_factor(m, name):
    """Symmetric square root of a PSD matrix (handles exact zeros)."""
    if not np.allclose(m, m.T, atol=1e-12):
        raise ModelError(f"{name} must be symmetric")
    w, v = np.linalg.eigh(m)
    floor = -1e-10 * max(1.0, float(np.max(np.abs(w))))
    if (w < floor).any():
        raise ModelError(f"{name} is not positive semidefinite")
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


@dataclass(frozen=True)
class SensorEnsembleModel:
    """Per-sensor signal model shared by all Monte Carlo runs.

    Attributes
    ----------
    p : int
        Regressor length.
    s0 : ndarray
        (p,) common parameter vector being estimated.
    rh : ndarray
        (J, p, p) regressor covariances (draw covariance for iid, exact
        stationary covariance for the AR kind).
    sigma2_eps : ndarray
        (J,) observation-noise variances.
    r_eta : ndarray
        (J, p, p) per-receiver link-noise covariances, used for both the
        estimate and the multiplier exchange.
    regressor_kind : str
        One of ``iid_gaussian`` / ``ar1_shift``.
    ar_rho, ar_beta, ar_sigma2_omega
        AR parameters (``ar1_shift`` only).
    """

    p: int
    s0: np.ndarray
    rh: np.ndarray
    sigma2_eps: np.ndarray
    r_eta: np.ndarray
    regressor_kind: str
    ar_rho: float | None = None
    ar_beta: np.ndarray | None = None
    ar_sigma2_omega: np.ndarray | None = None

    def __post_init__(self):
        if self.regressor_kind not in REGRESSOR_KINDS:
            raise ModelError(f"unknown regressor kind {self.regressor_kind!r}")
        if self.p < 1:
            raise ModelError(f"regressor length must be >= 1, got {self.p}")
        j = self.sigma2_eps.shape[0]
        if self.s0.shape != (self.p,):
            raise ModelError(f"s0 must have shape ({self.p},), got {self.s0.shape}")
        if self.rh.shape != (j, self.p, self.p):
            raise ModelError(f"rh must have shape ({j}, {self.p}, {self.p})")
        if self.r_eta.shape != (j, self.p, self.p):
            raise ModelError(f"r_eta must have shape ({j}, {self.p}, {self.p})")
        if (self.sigma2_eps < 0).any():
            raise ModelError("observation-noise variances must be >= 0")
        for k in range(j):
            _check_spd(self.rh[k], f"rh[{k}]")
        if self.regressor_kind == "ar1_shift":
            if self.ar_rho is None or self.ar_beta is None or self.ar_sigma2_omega is None:
                raise ModelError("ar1_shift needs ar_rho, ar_beta and ar_sigma2_omega")
            if not 0.0 < self.ar_rho < 1.0:
                raise ModelError(f"ar_rho must lie in (0, 1), got {self.ar_rho}")
            if ((self.ar_beta < 0) | (self.ar_beta > 1)).any():
                raise ModelError("ar_beta entries must lie in [0, 1]")
            if (self.ar_sigma2_omega <= 0).any():
                raise ModelError("ar_sigma2_omega entries must be positive")

    @property
    def J(self):
        return self.sigma2_eps.shape[0]

    def with_link_noise(self, enabled):
        """Copy of the model with link noise kept or zeroed."""
        r_eta = self.r_eta if enabled else np.zeros_like(self.r_eta)
        return SensorEnsembleModel(
            p=self.p, s0=self.s0, rh=self.rh, sigma2_eps=self.sigma2_eps,
            r_eta=r_eta, regressor_kind=self.regressor_kind, ar_rho=self.ar_rho,
            ar_beta=self.ar_beta, ar_sigma2_omega=self.ar_sigma2_omega,
        )


def iid_scenario(j, p, seed, sigma2_eta=0.1, rh=None, sigma2_eps=None):
    """Gaussian-regressor benchmark model.

    Parameters
    ----------
    j, p : int
        Sensor count and regressor length.
    seed : int
        Spatial-profile seed (draws the default observation-noise profile).
    sigma2_eta : float
        Link-noise variance; R_eta_j = sigma2_eta * I_p at every receiver.
    rh : None, float or ndarray
        None = identity covariance at every sensor; a float scales the
        identity; a (J, p, p) array is used as given.
    sigma2_eps : None, float or ndarray
        None = 1e-3 * U[0,1) per sensor (drawn from `seed`); a float is a
        common variance; a (J,) array is per sensor.
    """
    rng = np.random.default_rng(seed)
    alpha = rng.uniform(size=j)
    if sigma2_eps is None:
        eps = 1e-3 * alpha
    else:
        eps = np.broadcast_to(np.asarray(sigma2_eps, dtype=np.float64), (j,)).copy()
    if rh is None:
        rh = 1.0
    if np.ndim(rh) == 0:
        rh = np.broadcast_to(float(rh) * np.eye(p), (j, p, p)).copy()
    else:
        rh = np.asarray(rh, dtype=np.float64)
    r_eta = np.broadcast_to(sigma2_eta * np.eye(p), (j, p, p)).copy()
    return SensorEnsembleModel(
        p=p, s0=np.ones(p), rh=rh, sigma2_eps=eps, r_eta=r_eta,
        regressor_kind="iid_gaussian",
    )


def ar_scenario(j, seed, sigma2_eta=0.1):
    """AR(1) shift-structure benchmark model (p = 4).

    Per-sensor profiles drawn from `seed`, in this order: alpha, beta,
    gamma, each U[0,1). Observation noise is 1e-3*alpha_j, the AR memory
    coefficient is beta_j with pole rho = 0.5, and the uniform driving
    noise has variance 2*gamma_j. Every receiver gets link-noise
    covariance sigma2_eta * I_4.
    """
    p = 4
    rho = 0.5
    rng = np.random.default_rng(seed)
    alpha = rng.uniform(size=j)
    beta = rng.uniform(size=j)
    gamma = rng.uniform(size=j)
    sigma2_omega = 2.0 * gamma
    # driving noise must be nondegenerate for the stationary covariance
    sigma2_omega = np.maximum(sigma2_omega, 1e-8)
    rh = np.stack([
        ar_stationary_covariance(rho, beta[k], sigma2_omega[k], p) for k in range(j)
    ])
    r_eta = np.broadcast_to(sigma2_eta * np.eye(p), (j, p, p)).copy()
    return SensorEnsembleModel(
        p=p, s0=np.ones(p), rh=rh, sigma2_eps=1e-3 * alpha, r_eta=r_eta,
        regressor_kind="ar1_shift", ar_rho=rho, ar_beta=beta,
        ar_sigma2_omega=sigma2_omega,
    )


class SnapshotStream:
    """Seeded source of regressors, observations, and link-noise draws.

    One stream backs one Monte Carlo run. Each draw kind (regressors,
    observation noise, estimate-exchange noise, multiplier-exchange noise)
    owns an independent child generator, and each kind keeps its own
    sequential clock: snapshots are served for t = 1, 2, ... and the two
    link-noise kinds for t = 0, 1, ... Requesting any t out of order
    raises SequencingError.
    """

    def __init__(self, model, topology, seed, warmup=AR_WARMUP_STEPS):
        if model.J != topology.J:
            raise ModelError(
                f"model has {model.J} sensors but topology has {topology.J}"
            )
        self.model = model
        self.topology = topology
        ss = np.random.SeedSequence(seed)
        reg_ss, eps_ss, eta_ss, etabar_ss = ss.spawn(4)
        self._rng_reg = np.random.default_rng(reg_ss)
        self._rng_eps = np.random.default_rng(eps_ss)
        self._rng_eta = np.random.default_rng(eta_ss)
        self._rng_etabar = np.random.default_rng(etabar_ss)
        self._t_snap = 0
        self._t_eta = 0
        self._t_etabar = 0

        self._sigma_eps = np.sqrt(model.sigma2_eps)
        if model.regressor_kind == "iid_gaussian":
            self._chol_rh = np.linalg.cholesky(model.rh)
        else:
            self._ar_a = (1.0 - model.ar_rho) * model.ar_beta
            self._ar_gain = np.sqrt(model.ar_rho)
            self._ar_sigma = np.sqrt(model.ar_sigma2_omega)
            self._buf = np.zeros((model.J, model.p))
            for _ in range(max(warmup, model.p)):
                self._ar_step()

        eta_norm = float(np.max(np.abs(model.r_eta))) if model.r_eta.size else 0.0
        self.link_noise_active = eta_norm > 0.0
        if self.link_noise_active:
            factors = np.stack([
                _psd_factor(model.r_eta[k], f"r_eta[{k}]") for k in range(model.J)
            ])
            # receiver of directed link k is its owner in the rx-major table
            self._eta_factor = factors[topology.link_owner]

    def _ar_step(self):
        omega = self._ar_sigma * self._rng_reg.uniform(
            -np.sqrt(3.0), np.sqrt(3.0), size=self.model.J
        )
        new = self._ar_a * self._buf[:, 0] + self._ar_gain * omega
        self._buf[:, 1:] = self._buf[:, :-1]
        self._buf[:, 0] = new

    def snapshot(self, t):
        """Regressors (J, p) and observations (J,) for time t (sequential)."""
        if t != self._t_snap + 1:
            raise SequencingError(
                f"snapshot requested for t={t}, expected t={self._t_snap + 1}"
            )
        self._t_snap = t
        m = self.model
        if m.regressor_kind == "iid_gaussian":
            z = self._rng_reg.standard_normal((m.J, m.p))
            h = np.einsum("jab,jb->ja", self._chol_rh, z)
        else:
            self._ar_step()
            h = self._buf.copy()
        x = h @ m.s0 + self._sigma_eps * self._rng_eps.standard_normal(m.J)
        return h, x

    def _link_draw(self, rng):
        if not self.link_noise_active:
            return None
        d = self.topology.n_links
        z = rng.standard_normal((d, self.model.p))
        return np.einsum("kab,kb->ka", self._eta_factor, z)

    def estimate_noise(self, t):
        """Receiver noise on the estimate exchange at time t, (D, p) or None.

        Row k is the noise sensor ``link_owner[k]`` sees on the broadcast
        from ``link_peer[k]``. None means ideal links.
        """
        if t != self._t_eta:
            raise SequencingError(
                f"estimate noise requested for t={t}, expected t={self._t_eta}"
            )
        self._t_eta = t + 1
        return self._link_draw(self._rng_eta)

    def multiplier_noise(self, t):
        """Receiver noise on the multiplier exchange at time t, (D, p) or None."""
        if t != self._t_etabar:
            raise SequencingError(
                f"multiplier noise requested for t={t}, expected t={self._t_etabar}"
            )
        self._t_etabar = t + 1
        return self._link_draw(self._rng_etabar)
