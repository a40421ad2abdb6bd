"""Process and observation models and trajectory linearization.

Process models define a discrete-time transition ``x' = f(x, u, w)`` with
zero-mean process noise ``w``.  Observation models define a measurement
map ``z = h(x) + v`` together with a state-dependent weighting matrix
used by the planner to score predicted estimation error.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, LinearizationError, SingularObservationError

TWO_PI = 2.0 * np.pi


def wrap_angle(a):
    """Wrap angles to the interval (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(a, dtype=np.float64), TWO_PI)


def _fd_jacobian(fun, x0, out_dim):
    """Central finite-difference Jacobian of ``fun`` at ``x0``.

    Uses a per-coordinate step ``1e-6 * (1 + |x0_j|)``.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    jac = np.empty((out_dim, x0.size))
    for j in range(x0.size):
        h = 1e-6 * (1.0 + abs(x0[j]))
        xp = x0.copy()
        xm = x0.copy()
        xp[j] += h
        xm[j] -= h
        jac[:, j] = (np.asarray(fun(xp)) - np.asarray(fun(xm))) / (2.0 * h)
    return jac


class ProcessModel:
    """Base class for discrete-time process models.

    Subclasses must set ``n_x``, ``n_u``, ``n_w`` and implement ``f``.
    Jacobians default to central finite differences; models with known
    derivatives should override them.
    """

    n_x: int
    n_u: int
    n_w: int

    def f(self, x, u, w):
        """Transition map; returns the successor state."""
        raise NotImplementedError

    def zero_noise(self):
        return np.zeros(self.n_w)

    def sample_noise(self, rng, size=None):
        """Draw process noise; returns (n_w,) or (size, n_w)."""
        raise NotImplementedError

    def propagate(self, states, u, noises):
        """Apply ``f`` row-wise to a batch of states with per-row noise."""
        out = np.empty((states.shape[0], self.n_x))
        for i in range(states.shape[0]):
            out[i] = self.f(states[i], u, noises[i])
        return out

    def jac_x(self, x, u):
        return _fd_jacobian(lambda s: self.f(s, u, self.zero_noise()), x, self.n_x)

    def jac_u(self, x, u):
        return _fd_jacobian(lambda c: self.f(x, c, self.zero_noise()), u, self.n_x)

    def jac_w(self, x, u):
        return _fd_jacobian(lambda w: self.f(x, u, w), self.zero_noise(), self.n_x)


class LinearProcess(ProcessModel):
    """Linear transition ``x' = A x + B u + G w`` with Gaussian noise.

    ``noise_std`` gives per-component standard deviations of ``w``; a
    zero vector yields a deterministic model.
    """

    def __init__(self, A, B, G=None, noise_std=None):
        self.A = np.array(A, dtype=np.float64)
        self.B = np.array(B, dtype=np.float64)
        if self.A.ndim != 2 or self.A.shape[0] != self.A.shape[1]:
            raise ConfigurationError("A must be square")
        self.n_x = self.A.shape[0]
        if self.B.ndim != 2 or self.B.shape[0] != self.n_x:
            raise ConfigurationError("B must have the same number of rows as A")
        self.n_u = self.B.shape[1]
        self.G = np.eye(self.n_x) if G is None else np.array(G, dtype=np.float64)
        if self.G.ndim != 2 or self.G.shape[0] != self.n_x:
            raise ConfigurationError("G must have the same number of rows as A")
        self.n_w = self.G.shape[1]
        if noise_std is None:
            noise_std = np.zeros(self.n_w)
        self.noise_std = np.broadcast_to(
            np.asarray(noise_std, dtype=np.float64), (self.n_w,)
        ).copy()
        if np.any(self.noise_std < 0):
            raise ConfigurationError("noise_std must be nonnegative")

    def f(self, x, u, w):
        return self.A @ x + self.B @ u + self.G @ w

    def sample_noise(self, rng, size=None):
        shape = (self.n_w,) if size is None else (size, self.n_w)
        return rng.standard_normal(shape) * self.noise_std

    def propagate(self, states, u, noises):
        return states @ self.A.T + self.B @ u + noises @ self.G.T

    def jac_x(self, x, u):
        return self.A.copy()

    def jac_u(self, x, u):
        return self.B.copy()

    def jac_w(self, x, u):
        return self.G.copy()


class UnicycleProcess(ProcessModel):
    """Planar unicycle: state (x, y, heading), control (speed, turn rate).

    ``x' = x + dt * [v cos(th), v sin(th), omega] + w`` with additive
    Gaussian noise on all three state components.
    """

    n_x = 3
    n_u = 2
    n_w = 3

    def __init__(self, dt=0.1, noise_std=None):
        if dt <= 0:
            raise ConfigurationError("dt must be positive")
        self.dt = float(dt)
        if noise_std is None:
            noise_std = np.zeros(3)
        self.noise_std = np.broadcast_to(
            np.asarray(noise_std, dtype=np.float64), (3,)
        ).copy()
        if np.any(self.noise_std < 0):
            raise ConfigurationError("noise_std must be nonnegative")

    def f(self, x, u, w):
        theta = x[2]
        step = np.array(
            [u[0] * np.cos(theta), u[0] * np.sin(theta), u[1]], dtype=np.float64
        )
        return np.asarray(x, dtype=np.float64) + self.dt * step + w

    def sample_noise(self, rng, size=None):
        shape = (3,) if size is None else (size, 3)
        return rng.standard_normal(shape) * self.noise_std

    def propagate(self, states, u, noises):
        theta = states[:, 2]
        out = states + noises
        out[:, 0] += self.dt * u[0] * np.cos(theta)
        out[:, 1] += self.dt * u[0] * np.sin(theta)
        out[:, 2] += self.dt * u[1]
        return out

    def jac_x(self, x, u):
        theta = x[2]
        jac = np.eye(3)
        jac[0, 2] = -self.dt * u[0] * np.sin(theta)
        jac[1, 2] = self.dt * u[0] * np.cos(theta)
        return jac

    def jac_u(self, x, u):
        theta = x[2]
        return self.dt * np.array(
            [[np.cos(theta), 0.0], [np.sin(theta), 0.0], [0.0, 1.0]]
        )

    def jac_w(self, x, u):
        return np.eye(3)


def step(model, x, u, rng=None):
    """Advance one state through ``model``, sampling noise when ``rng`` is given."""
    x = np.asarray(x, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    if x.shape != (model.n_x,):
        raise ConfigurationError(
            f"state has shape {x.shape}, expected ({model.n_x},)"
        )
    if u.shape != (model.n_u,):
        raise ConfigurationError(
            f"control has shape {u.shape}, expected ({model.n_u},)"
        )
    w = model.zero_noise() if rng is None else model.sample_noise(rng)
    return np.asarray(model.f(x, u, w), dtype=np.float64)


@dataclass(frozen=True)
class LinearizedSystem:
    """Per-step linearization of a process model along a nominal trajectory.

    For nominal states ``x_t`` and controls ``u_t`` (t = 0..K-1):

    - ``A`` (K, n_x, n_x): state Jacobians
    - ``B`` (K, n_x, n_u): control Jacobians
    - ``G`` (K, n_x, n_w): noise Jacobians
    - ``drift`` (K, n_x): ``f(x_t, u_t, 0) - A_t x_t - B_t u_t``

    so that near the nominal, ``x_{t+1} ~= A_t x_t + B_t u_t + drift_t``.
    """

    A: np.ndarray
    B: np.ndarray
    G: np.ndarray
    drift: np.ndarray

    @property
    def horizon(self):
        return self.A.shape[0]

    @property
    def n_x(self):
        return self.A.shape[1]

    @property
    def n_u(self):
        return self.B.shape[2]


def linearize_process(model, nominal_states, nominal_controls):
    """Linearize ``model`` along a nominal trajectory.

    nominal_states   : (K+1, n_x) — only the first K rows are expansion points
    nominal_controls : (K, n_u)

    Raises LinearizationError (with the offending step) if any Jacobian
    or drift entry is non-finite.
    """
    states = np.asarray(nominal_states, dtype=np.float64)
    controls = np.asarray(nominal_controls, dtype=np.float64)
    if states.ndim != 2 or states.shape[1] != model.n_x:
        raise ConfigurationError("nominal_states must have shape (K+1, n_x)")
    if controls.ndim != 2 or controls.shape[1] != model.n_u:
        raise ConfigurationError("nominal_controls must have shape (K, n_u)")
    horizon = controls.shape[0]
    if states.shape[0] != horizon + 1:
        raise ConfigurationError(
            "nominal_states must have exactly one more row than nominal_controls"
        )
    A = np.empty((horizon, model.n_x, model.n_x))
    B = np.empty((horizon, model.n_x, model.n_u))
    G = np.empty((horizon, model.n_x, model.n_w))
    drift = np.empty((horizon, model.n_x))
    for t in range(horizon):
        x_t, u_t = states[t], controls[t]
        A[t] = model.jac_x(x_t, u_t)
        B[t] = model.jac_u(x_t, u_t)
        G[t] = model.jac_w(x_t, u_t)
        drift[t] = model.f(x_t, u_t, model.zero_noise()) - A[t] @ x_t - B[t] @ u_t
        if not (
            np.all(np.isfinite(A[t]))
            and np.all(np.isfinite(B[t]))
            and np.all(np.isfinite(G[t]))
            and np.all(np.isfinite(drift[t]))
        ):
            raise LinearizationError(
                f"non-finite linearization at step {t}", step=t
            )
    return LinearizedSystem(A=A, B=B, G=G, drift=drift)


class ObservationModel:
    """Base class for observation models ``z = h(x) + v``.

    ``v`` has diagonal covariance given by ``noise_variances(x)``; the
    planner scores predicted error through ``weight_matrix(x)``, a
    positive semidefinite matrix that may vary with the state.
    """

    n_z: int
    n_x: int

    def h(self, x):
        raise NotImplementedError

    def h_batch(self, states):
        out = np.empty((states.shape[0], self.n_z))
        for i in range(states.shape[0]):
            out[i] = self.h(states[i])
        return out

    def jac(self, x):
        return _fd_jacobian(self.h, np.asarray(x, dtype=np.float64), self.n_z)

    def noise_variances(self, x):
        """Diagonal measurement-noise variances at ``x``; shape (n_z,)."""
        raise NotImplementedError

    def noise_variances_batch(self, states):
        out = np.empty((states.shape[0], self.n_z))
        for i in range(states.shape[0]):
            out[i] = self.noise_variances(states[i])
        return out

    def sample_noise(self, rng, x):
        return rng.standard_normal(self.n_z) * np.sqrt(self.noise_variances(x))

    def innovation(self, z, z_pred):
        """Residual ``z - z_pred``; broadcast over rows of ``z_pred``."""
        return np.asarray(z, dtype=np.float64) - z_pred

    def error_weights(self, x):
        """Diagonal of the per-channel weighting R(x); shape (n_z,)."""
        raise NotImplementedError

    def weight_matrix(self, x):
        """State-dependent quadratic error weighting ``H(x)^T R(x) H(x)``."""
        hjac = self.jac(x)
        return hjac.T @ (self.error_weights(x)[:, None] * hjac)

    def weight_quadratic(self, x, smat):
        """``trace(weight_matrix(x) @ smat)``, or +inf where undefined."""
        try:
            wmat = self.weight_matrix(x)
        except SingularObservationError:
            return np.inf
        val = float(np.einsum("ij,ji->", wmat, smat))
        return val if np.isfinite(val) else np.inf

    def weight_quadratic_with_grad(self, x, smat):
        """Value and state gradient of ``weight_quadratic``; (+inf, None) where undefined."""
        x = np.asarray(x, dtype=np.float64)
        val = self.weight_quadratic(x, smat)
        if not np.isfinite(val):
            return np.inf, None
        grad = np.empty(x.size)
        for j in range(x.size):
            h = 1e-6 * (1.0 + abs(x[j]))
            xp = x.copy()
            xm = x.copy()
            xp[j] += h
            xm[j] -= h
            fp = self.weight_quadratic(xp, smat)
            fm = self.weight_quadratic(xm, smat)
            if not (np.isfinite(fp) and np.isfinite(fm)):
                return np.inf, None
            grad[j] = (fp - fm) / (2.0 * h)
        return val, grad

    def weight_quadratic_path(self, states, smats):
        """Values and gradients of ``weight_quadratic`` along a path.

        states : (T, n_x); smats : (T, n_x, n_x).  Returns (values (T,),
        grads (T, n_x)); entries where the weighting is undefined hold
        +inf values and NaN gradients.
        """
        num = states.shape[0]
        values = np.empty(num)
        grads = np.full((num, states.shape[1]), np.nan)
        for t in range(num):
            val, grad = self.weight_quadratic_with_grad(states[t], smats[t])
            values[t] = val
            if grad is not None:
                grads[t] = grad
        return values, grads


def observe(model, x, rng=None):
    """Measure state ``x`` through ``model``, adding noise when ``rng`` is given."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.n_x,):
        raise ConfigurationError(
            f"state has shape {x.shape}, expected ({model.n_x},)"
        )
    z = np.asarray(model.h(x), dtype=np.float64)
    if rng is None:
        return z
    return z + model.sample_noise(rng, x)


def linearize_observation(model, x):
    """Observation Jacobian ``H(x)`` with shape (n_z, n_x).

    Raises SingularObservationError where the map is not differentiable
    (propagated from the model) and LinearizationError on non-finite
    entries.
    """
    hjac = np.asarray(model.jac(x), dtype=np.float64)
    if hjac.shape != (model.n_z, model.n_x):
        raise ConfigurationError(
            f"observation Jacobian has shape {hjac.shape}, "
            f"expected ({model.n_z}, {model.n_x})"
        )
    if not np.all(np.isfinite(hjac)):
        raise LinearizationError("non-finite observation Jacobian")
    return hjac


class RangeObservation(ObservationModel):
    """Distances to fixed planar landmarks.

    ``h_i(x) = ||pos(x) - L_i||`` where ``pos`` is the first two state
    components.  The per-channel error weighting grows with the squared
    distance, so far-away (low-information) geometry is penalized more.
    Measurement noise is homoscedastic with standard deviation
    ``noise_std``.
    """

    def __init__(self, landmarks, noise_std=0.1, n_x=2):
        self.landmarks = np.atleast_2d(np.asarray(landmarks, dtype=np.float64))
        if self.landmarks.ndim != 2 or self.landmarks.shape[1] != 2:
            raise ConfigurationError("landmarks must have shape (m, 2)")
        if noise_std <= 0:
            raise ConfigurationError("noise_std must be positive")
        if n_x < 2:
            raise ConfigurationError("state must contain a planar position")
        self.noise_std = float(noise_std)
        self.n_z = self.landmarks.shape[0]
        self.n_x = int(n_x)

    def _deltas(self, x):
        return np.asarray(x, dtype=np.float64)[:2] - self.landmarks

    def h(self, x):
        return np.linalg.norm(self._deltas(x), axis=1)

    def h_batch(self, states):
        diff = states[:, None, :2] - self.landmarks[None, :, :]
        return np.sqrt(np.sum(diff * diff, axis=2))

    def jac(self, x):
        deltas = self._deltas(x)
        dists = np.linalg.norm(deltas, axis=1)
        if np.any(dists < 1e-12):
            raise SingularObservationError(
                "range Jacobian is undefined at a landmark"
            )
        jac = np.zeros((self.n_z, self.n_x))
        jac[:, :2] = deltas / dists[:, None]
        return jac

    def noise_variances(self, x):
        return np.full(self.n_z, self.noise_std**2)

    def noise_variances_batch(self, states):
        return np.full((states.shape[0], self.n_z), self.noise_std**2)

    def error_weights(self, x):
        deltas = self._deltas(x)
        return np.sum(deltas * deltas, axis=1)

    def weight_matrix(self, x):
        # H^T R H with R_ii = d_i^2 and H rows delta_i / d_i: the distances
        # cancel, leaving sum_i delta_i delta_i^T.
        deltas = self._deltas(x)
        wmat = np.zeros((self.n_x, self.n_x))
        wmat[:2, :2] = deltas.T @ deltas
        return wmat

    def weight_quadratic(self, x, smat):
        deltas = self._deltas(x)
        return float(np.einsum("id,de,ie->", deltas, smat[:2, :2], deltas))

    def weight_quadratic_with_grad(self, x, smat):
        x = np.asarray(x, dtype=np.float64)
        deltas = self._deltas(x)
        sym = smat[:2, :2] + smat[:2, :2].T
        val = 0.5 * float(np.einsum("id,de,ie->", deltas, sym, deltas))
        grad = np.zeros(x.size)
        grad[:2] = sym @ deltas.sum(axis=0)
        return val, grad

    def weight_quadratic_path(self, states, smats):
        deltas = states[:, None, :2] - self.landmarks[None, :, :]
        sym = smats[:, :2, :2] + np.swapaxes(smats[:, :2, :2], 1, 2)
        values = 0.5 * np.einsum("tid,tde,tie->t", deltas, sym, deltas)
        grads = np.zeros_like(states)
        grads[:, :2] = np.einsum("tde,te->td", sym, deltas.sum(axis=1))
        return values, grads


class BearingObservation(ObservationModel):
    """Relative bearings to fixed planar landmarks from a heading state.

    ``h_i(x) = wrap(atan2(y - L_y, x - L_x) - heading)`` for state
    (x, y, heading).  The error weighting per channel is the squared
    distance to the landmark, which removes the geometric attenuation of
    bearing information with range.
    """

    n_x = 3

    def __init__(self, landmarks, noise_std=0.05):
        self.landmarks = np.atleast_2d(np.asarray(landmarks, dtype=np.float64))
        if self.landmarks.ndim != 2 or self.landmarks.shape[1] != 2:
            raise ConfigurationError("landmarks must have shape (m, 2)")
        if noise_std <= 0:
            raise ConfigurationError("noise_std must be positive")
        self.noise_std = float(noise_std)
        self.n_z = self.landmarks.shape[0]

    def _deltas(self, x):
        return np.asarray(x, dtype=np.float64)[:2] - self.landmarks

    def h(self, x):
        deltas = self._deltas(x)
        return wrap_angle(np.arctan2(deltas[:, 1], deltas[:, 0]) - x[2])

    def h_batch(self, states):
        diff = states[:, None, :2] - self.landmarks[None, :, :]
        return wrap_angle(np.arctan2(diff[:, :, 1], diff[:, :, 0]) - states[:, 2:3])

    def jac(self, x):
        deltas = self._deltas(x)
        sq = np.sum(deltas * deltas, axis=1)
        if np.any(sq < 1e-24):
            raise SingularObservationError(
                "bearing Jacobian is undefined at a landmark"
            )
        jac = np.empty((self.n_z, 3))
        jac[:, 0] = -deltas[:, 1] / sq
        jac[:, 1] = deltas[:, 0] / sq
        jac[:, 2] = -1.0
        return jac

    def innovation(self, z, z_pred):
        return wrap_angle(np.asarray(z, dtype=np.float64) - z_pred)

    def noise_variances(self, x):
        return np.full(self.n_z, self.noise_std**2)

    def noise_variances_batch(self, states):
        return np.full((states.shape[0], self.n_z), self.noise_std**2)

    def error_weights(self, x):
        deltas = self._deltas(x)
        return np.sum(deltas * deltas, axis=1)


class LightDarkObservation(ObservationModel):
    """Direct state observation whose accuracy improves with the first coordinate.

    ``h(x) = x`` for a planar state.  Both the measurement-noise variance
    and the planner's error weighting are ``1 / (2 x_1 + 1)`` per channel,
    so measurements sharpen as ``x_1`` grows ("light") and degrade toward
    the pole at ``x_1 = -0.5`` ("dark").  For sampling and filtering the
    variance is evaluated with ``x_1`` clipped to ``x1_floor`` to keep it
    finite; the planner weighting is left exact and is undefined at or
    below the pole.
    """

    n_x = 2
    n_z = 2

    def __init__(self, x1_floor=-0.45):
        if 2.0 * x1_floor + 1.0 <= 0.0:
            raise ConfigurationError("x1_floor must exceed the pole at -0.5")
        self.x1_floor = float(x1_floor)

    def h(self, x):
        return np.asarray(x, dtype=np.float64).copy()

    def h_batch(self, states):
        return states.copy()

    def jac(self, x):
        return np.eye(2)

    def noise_variances(self, x):
        v = 1.0 / (2.0 * max(x[0], self.x1_floor) + 1.0)
        return np.array([v, v])

    def noise_variances_batch(self, states):
        v = 1.0 / (2.0 * np.maximum(states[:, 0], self.x1_floor) + 1.0)
        return np.repeat(v[:, None], 2, axis=1)

    def error_weights(self, x):
        denom = 2.0 * x[0] + 1.0
        if denom <= 0.0:
            raise SingularObservationError(
                "light-dark weighting is undefined for 2*x1 + 1 <= 0"
            )
        return np.array([1.0 / denom, 1.0 / denom])

    def weight_matrix(self, x):
        return np.diag(self.error_weights(x))

    def weight_quadratic(self, x, smat):
        denom = 2.0 * x[0] + 1.0
        if denom <= 0.0:
            return np.inf
        return float(np.trace(smat)) / denom

    def weight_quadratic_with_grad(self, x, smat):
        denom = 2.0 * x[0] + 1.0
        if denom <= 0.0:
            return np.inf, None
        trace = float(np.trace(smat))
        grad = np.array([-2.0 * trace / denom**2, 0.0])
        return trace / denom, grad

    def weight_quadratic_path(self, states, smats):
        denom = 2.0 * states[:, 0] + 1.0
        traces = np.trace(smats, axis1=1, axis2=2)
        values = np.where(denom > 0.0, traces / np.where(denom > 0, denom, 1.0), np.inf)
        grads = np.full_like(states, np.nan)
        ok = denom > 0.0
        grads[ok, 0] = -2.0 * traces[ok] / denom[ok] ** 2
        grads[ok, 1] = 0.0
        return values, grads
