"""
Recursive least-squares estimators over a sensor network.

All variants minimize the same exponentially weighted LS cost with
forgetting factor ``lam`` and a vanishing ridge term: the per-sensor data
matrix after n steps is sum_{tau=1..n} lam^(n-tau) h h^T + lam^n/delta I,
realized by initializing the inverse at delta*I before any datum arrives.

* ``CentralizedRls`` pools every sensor's datum each step (the benchmark
  the distributed schemes try to match).
* ``LocalRls`` runs an isolated RLS per sensor (no cooperation).
* ``DrlsState`` is the single-time-scale distributed RLS: per step each
  sensor broadcasts its estimate, updates one price/multiplier per
  neighbor from the (possibly noise-corrupted) received estimates,
  exchanges the multipliers, absorbs its new datum through a rank-one
  inverse update, and re-solves for its estimate. One consensus iteration
  per datum, O(p^2) per sensor per step.
* ``AdmomState`` is the augmented-Lagrangian variant: same multiplier
  recursion, but the estimate update solves a dense p x p system whose
  matrix carries an extra c*deg_j*I term, O(p^3) per sensor per step.
* ``drls_batch_ama`` freezes the data at one instant and iterates the
  consensus rounds to convergence (the two-time-scale limit); with ideal
  links it converges to the centralized solution for small enough c.

Per-link quantities follow the topology's directed-link table: row k of a
(D, p) array belongs to ``link_owner[k]`` and concerns its neighbor
``link_peer[k]``. Noise arrays passed to ``step`` use the same layout
(row k = what owner k actually receives on that link).
"""

from dataclasses import dataclass

import numpy as np

from .errors import DivergenceError

#: growth factor over a 100-iteration window that trips divergence watchdogs
WATCHDOG_FACTOR = 10.0
WATCHDOG_WINDOW = 100


def _matvec(mats, vecs):
    """Batched matrix-vector product: (J, p, p) @ (J, p) -> (J, p)."""
    return np.einsum("jab,jb->ja", mats, vecs)


# ---------------------------------------------------------------------------
# per-sensor RLS kernel
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RlsKernelState:
    """Inverse data matrix and cross-correlation of one sensor's RLS kernel."""

    pinv: np.ndarray   # (p, p) inverse of the weighted data matrix
    psi: np.ndarray    # (p,) weighted input-output correlation
    lam: float
    delta: float


def rls_kernel_init(p, lam, delta):
    """Fresh kernel: pinv = delta * I (no data absorbed yet), psi = 0."""
    if not 0.0 < lam <= 1.0:
        raise ValueError(f"forgetting factor must lie in (0, 1], got {lam}")
    if delta <= 0:
        raise ValueError(f"delta must be positive, got {delta}")
    return RlsKernelState(pinv=delta * np.eye(p), psi=np.zeros(p), lam=lam, delta=delta)


def rls_kernel_step(state, h, x):
    """Absorb one datum through the rank-one inverse update.

    Matrix-inversion-lemma form of inverting lam*Phi + h h^T given
    Phi^{-1}: new_pinv = (pinv - (pinv h)(pinv h)^T / (lam + h^T pinv h)) / lam.
    """
    h = np.asarray(h, dtype=np.float64)
    ph = state.pinv @ h
    den = state.lam + h @ ph
    pinv = (state.pinv - np.outer(ph, ph) / den) / state.lam
    psi = state.lam * state.psi + h * float(x)
    return RlsKernelState(pinv=pinv, psi=psi, lam=state.lam, delta=state.delta)


def ewlse_centralized(regressors, observations, lam, phi0):
    """Exact exponentially weighted LS minimizer over pooled history.

    Parameters
    ----------
    regressors : ndarray
        (T, J, p): regressor of sensor j at sample index tau.
    observations : ndarray
        (T, J) matching observations.
    lam : float
        Forgetting factor; sample tau gets weight lam^(T-1-tau).
    phi0 : float or ndarray
        Ridge matrix (a float means phi0 * I_p), discounted by the same
        factor as the oldest sample. To reproduce a recursive kernel that
        took T steps from pinv(0) = delta*I, pass phi0 = lam * J / delta.

    Returns the (p,) minimizer of
    sum_tau lam^(T-1-tau) sum_j (x_j(tau) - h_j(tau)^T s)^2
    + lam^(T-1) s^T phi0 s.
    """
    hs = np.asarray(regressors, dtype=np.float64)
    xs = np.asarray(observations, dtype=np.float64)
    if hs.ndim != 3 or xs.shape != hs.shape[:2]:
        raise ValueError(
            f"need regressors (T, J, p) and observations (T, J), got {hs.shape} / {xs.shape}"
        )
    t, _, p = hs.shape
    phi0 = np.asarray(phi0, dtype=np.float64)
    if phi0.ndim == 0:
        phi0 = float(phi0) * np.eye(p)
    w = lam ** np.arange(t - 1, -1, -1, dtype=np.float64)
    phi = np.einsum("t,tja,tjb->ab", w, hs, hs) + (w[0] if t else 1.0) * phi0
    b = np.einsum("t,tja,tj->a", w, hs, xs) if t else np.zeros(p)
    return np.linalg.solve(phi, b)


# ---------------------------------------------------------------------------
# flop cost model (documented analytic counts, incremented at runtime)
# ---------------------------------------------------------------------------

def ama_step_flops(p, degree):
    """Per-sensor per-step arithmetic of the single-time-scale AMA variant.

    Rank-one inverse update 6p^2 + 2p + 1, correlation update 3p, estimate
    solve via the stored inverse 2p^2 + 2p, plus 7p per neighbor for the
    multiplier update and aggregation. O(p^2).
    """
    return 8 * p * p + 7 * p + 1 + 7 * p * degree


def admom_step_flops(p, degree):
    """Per-sensor per-step arithmetic of the augmented-Lagrangian variant.

    Data-matrix update 3p^2 + p, correlation update 3p, dense p x p solve
    (2/3)p^3 + 2p^2, plus 9p per neighbor for the estimate/multiplier
    sums. O(p^3) because the extra c*deg*I term rules out rank-one
    inverse updates.
    """
    return (2 * p ** 3) // 3 + 5 * p * p + 4 * p + 9 * p * degree


# ---------------------------------------------------------------------------
# network estimators
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DrlsSensorState:
    """Read-only view of one sensor inside a network state."""

    s: np.ndarray          # (p,) current estimate
    v: dict                # neighbor id -> (p,) multiplier owned by this sensor
    kernel: RlsKernelState


class _NetworkBase:
    """Shared plumbing: batched per-sensor arrays plus the link tables."""

    def __init__(self, topology, p, lam, c):
        if not 0.0 < lam <= 1.0:
            raise ValueError(f"forgetting factor must lie in (0, 1], got {lam}")
        if c < 0:
            raise ValueError(f"consensus step c must be >= 0, got {c}")
        self.topology = topology
        self.p = p
        self.lam = lam
        self.c = c
        self.s = np.zeros((topology.J, p))
        self.v = np.zeros((topology.n_links, p))
        self.t = 0
        self.flops = 0

    def _exchange(self, eta, eta_bar):
        """Multiplier recursion from broadcast estimates; returns what each
        owner aggregates from its own and its neighbors' multipliers."""
        top = self.topology
        recv_s = self.s[top.link_peer]
        if eta is not None:
            recv_s = recv_s + eta
        v_new = self.v + 0.5 * self.c * (self.s[top.link_owner] - recv_s)
        recv_v = v_new[top.link_flip]
        if eta_bar is not None:
            recv_v = recv_v + eta_bar
        return recv_s, v_new, recv_v

    def _persensor_sum(self, per_link):
        """Sum a (D, p) per-link array into (J, p) per-owner totals."""
        if self.topology.n_links == 0:
            return np.zeros((self.topology.J, self.p))
        return np.add.reduceat(per_link, self.topology.link_start[:-1], axis=0)

    def multiplier_imbalance(self):
        """Largest violation of the pairwise antisymmetry v_ij = -v_ji.

        Exactly zero for all time under ideal links (each update adds
        opposite quantities to the two directions of a link); receiver
        noise makes it drift.
        """
        if self.topology.n_links == 0:
            return 0.0
        return float(np.abs(self.v + self.v[self.topology.link_flip]).max())


class DrlsState(_NetworkBase):
    """Single-time-scale distributed RLS (one consensus round per datum)."""

    def __init__(self, topology, p, lam, c, delta):
        super().__init__(topology, p, lam, c)
        if delta <= 0:
            raise ValueError(f"delta must be positive, got {delta}")
        self.delta = delta
        self.pinv = np.broadcast_to(delta * np.eye(p), (topology.J, p, p)).copy()
        self.psi = np.zeros((topology.J, p))
        self._step_flops = int(
            sum(ama_step_flops(p, int(d)) for d in topology.degrees)
        )

    def step(self, h, x, eta=None, eta_bar=None):
        """One time step: exchange at time t, absorb datum t+1, re-estimate.

        `h` (J, p) and `x` (J,) are the new snapshot; `eta` / `eta_bar`
        are (D, p) receiver-noise arrays for the estimate and multiplier
        exchanges (None = ideal links).
        """
        _, v_new, recv_v = self._exchange(eta, eta_bar)
        # rank-one inverse update, batched over sensors
        ph = _matvec(self.pinv, h)
        den = self.lam + np.einsum("ja,ja->j", h, ph)
        self.pinv = (self.pinv - ph[:, :, None] * ph[:, None, :] / den[:, None, None]) / self.lam
        self.psi = self.lam * self.psi + h * x[:, None]
        agg = self._persensor_sum(v_new - recv_v)
        self.s = _matvec(self.pinv, self.psi - 0.5 * agg)
        self.v = v_new
        self.t += 1
        self.flops += self._step_flops
        return self

    def sensor(self, j):
        """Per-sensor view (estimate, multiplier map, kernel)."""
        top = self.topology
        vmap = {
            int(top.link_peer[k]): self.v[k].copy()
            for k in range(top.link_start[j], top.link_start[j + 1])
        }
        kern = RlsKernelState(
            pinv=self.pinv[j].copy(), psi=self.psi[j].copy(),
            lam=self.lam, delta=self.delta,
        )
        return DrlsSensorState(s=self.s[j].copy(), v=vmap, kernel=kern)


class AdmomState(_NetworkBase):
    """Augmented-Lagrangian distributed RLS (dense per-step solves).

    Keeps the weighted data matrix directly; the estimate update inverts
    data_matrix + c*deg_j*I every step, so there is no rank-one shortcut.
    """

    def __init__(self, topology, p, lam, c, delta):
        super().__init__(topology, p, lam, c)
        if delta <= 0:
            raise ValueError(f"delta must be positive, got {delta}")
        self.delta = delta
        self.phi = np.broadcast_to(np.eye(p) / delta, (topology.J, p, p)).copy()
        self.psi = np.zeros((topology.J, p))
        self._ridge = c * self.topology.degrees[:, None, None] * np.eye(p)
        self._step_flops = int(
            sum(admom_step_flops(p, int(d)) for d in topology.degrees)
        )

    def step(self, h, x, eta=None, eta_bar=None):
        top = self.topology
        recv_s, v_new, recv_v = self._exchange(eta, eta_bar)
        self.phi = self.lam * self.phi + h[:, :, None] * h[:, None, :]
        self.psi = self.lam * self.psi + h * x[:, None]
        # own estimate plus each received one, summed over neighbors
        nbr = top.degrees[:, None] * self.s + self._persensor_sum(recv_s)
        rhs = self.psi + 0.5 * self.c * nbr - 0.5 * self._persensor_sum(v_new - recv_v)
        self.s = np.linalg.solve(self.phi + self._ridge, rhs[:, :, None])[:, :, 0]
        self.v = v_new
        self.t += 1
        self.flops += self._step_flops
        return self


class LocalRls:
    """Isolated per-sensor RLS (the no-cooperation baseline)."""

    def __init__(self, topology, p, lam, c, delta):
        self.topology = topology
        self.p = p
        self.lam = lam
        self.delta = delta
        self.pinv = np.broadcast_to(delta * np.eye(p), (topology.J, p, p)).copy()
        self.psi = np.zeros((topology.J, p))
        self.s = np.zeros((topology.J, p))
        self.t = 0
        self.flops = 0

    def step(self, h, x, eta=None, eta_bar=None):
        ph = _matvec(self.pinv, h)
        den = self.lam + np.einsum("ja,ja->j", h, ph)
        self.pinv = (self.pinv - ph[:, :, None] * ph[:, None, :] / den[:, None, None]) / self.lam
        self.psi = self.lam * self.psi + h * x[:, None]
        self.s = _matvec(self.pinv, self.psi)
        self.t += 1
        return self


class CentralizedRls:
    """All data pooled each step; the consensus benchmark trajectory."""

    def __init__(self, topology, p, lam, c, delta):
        self.topology = topology
        self.p = p
        self.lam = lam
        self.delta = delta
        self.phi = (topology.J / delta) * np.eye(p)
        self.psi_c = np.zeros(p)
        self.s_c = np.zeros(p)
        self.t = 0
        self.flops = 0

    @property
    def s(self):
        return np.broadcast_to(self.s_c, (self.topology.J, self.p))

    def step(self, h, x, eta=None, eta_bar=None):
        self.phi = self.lam * self.phi + h.T @ h
        self.psi_c = self.lam * self.psi_c + h.T @ x
        self.s_c = np.linalg.solve(self.phi, self.psi_c)
        self.t += 1
        return self


def drls_step(state, h, x, eta=None, eta_bar=None):
    """Advance any network estimator by one step (functional spelling)."""
    return state.step(h, x, eta=eta, eta_bar=eta_bar)


# ---------------------------------------------------------------------------
# batch consensus mode
# ---------------------------------------------------------------------------

@dataclass
class BatchConsensusResult:
    s: np.ndarray              # (J, p) estimates after the final iteration
    iterations: int
    disagreement: float        # max over links of ||s_i - s_j|| at exit
    history: np.ndarray        # per-iteration disagreement trace


def drls_batch_ama(pinv, psi, topology, c, iters, s_init=None, tol=None):
    """Iterate the consensus rounds with the data frozen.

    `pinv` (J, p, p) and `psi` (J, p) are the per-sensor kernel states at
    the frozen instant; multipliers start at zero and `s_init` defaults to
    the local estimates pinv @ psi. Stops early once the maximum link
    disagreement drops to `tol` (when given). Raises DivergenceError if
    the disagreement grows 10x over any 100-iteration window.

    With ideal links and c inside its (topology-dependent) convergence
    range, the iterates approach the pooled EWLS solution.
    """
    if iters < 0:
        raise ValueError(f"iteration count must be >= 0, got {iters}")
    if c <= 0:
        raise ValueError(f"consensus step c must be positive, got {c}")
    pinv = np.asarray(pinv, dtype=np.float64)
    psi = np.asarray(psi, dtype=np.float64)
    j, p = psi.shape
    base = _matvec(pinv, psi)
    s = base.copy() if s_init is None else np.array(s_init, dtype=np.float64)
    v = np.zeros((topology.n_links, p))
    owner, peer, flip = topology.link_owner, topology.link_peer, topology.link_flip

    def disagreement(est):
        if topology.n_links == 0:
            return 0.0
        return float(np.max(np.linalg.norm(est[owner] - est[peer], axis=1)))

    history = []
    d = disagreement(s)
    k = 0
    for k in range(1, iters + 1):
        v = v + 0.5 * c * (s[owner] - s[peer])
        if topology.n_links:
            agg = np.add.reduceat(v - v[flip], topology.link_start[:-1], axis=0)
        else:
            agg = np.zeros((j, p))
        s = base - 0.5 * _matvec(pinv, agg)
        d = disagreement(s)
        history.append(d)
        if (
            k > WATCHDOG_WINDOW
            and d > WATCHDOG_FACTOR * history[k - 1 - WATCHDOG_WINDOW]
            and d > 1e-12
        ):
            raise DivergenceError(
                f"batch consensus diverging: disagreement {d:.3e} at iteration {k} "
                f"is over {WATCHDOG_FACTOR:.0f}x its value {WATCHDOG_WINDOW} iterations ago"
            )
        if tol is not None and d <= tol:
            break
    return BatchConsensusResult(
        s=s, iterations=k, disagreement=d, history=np.asarray(history)
    )
