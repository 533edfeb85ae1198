"""Line-energy quantities of interest and their Ito coefficients.

The state vector is laid out as ``z = [v, omega, delta, eta]`` (length 4n),
so the 0-based position of ``delta_i`` (1-based bus ``i``) is ``2n + i - 1``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .case_model import LineId, PowerCase, _as_line

__all__ = [
    "LineQoi",
    "ResponseSamples",
    "QoiDerivatives",
    "line_energy",
    "line_energy_drift",
    "line_responses",
    "qoi_derivatives",
    "ito_coefficients",
    "coordinate_projection_coeffs",
    "state_index",
]

_BLOCKS = {"v": 0, "omega": 1, "delta": 2, "eta": 3}


def state_index(n: int, block: str, bus: int) -> int:
    """0-based position of ``block`` (v/omega/delta/eta) of 1-based ``bus`` in z."""
    return _BLOCKS[block] * n + bus - 1


@dataclass(frozen=True)
class LineQoi:
    line: LineId
    b_ij: float

    def __post_init__(self):
        object.__setattr__(self, "line", _as_line(self.line))
        if self.b_ij == 0:
            raise ValueError(f"line {self.line} has zero susceptance")

    @classmethod
    def from_case(cls, case: PowerCase, line) -> "LineQoi":
        """Capture ``b_ij`` from ``case`` (use the pre-trip case)."""
        line = _as_line(line)
        if not case.has_edge(line):
            raise KeyError(f"line {line} not in case")
        return cls(line, case.b(line))


@dataclass(frozen=True)
class ResponseSamples:
    u: np.ndarray
    mu_u: np.ndarray
    d_u: np.ndarray


@dataclass(frozen=True)
class QoiDerivatives:
    """Sparse derivatives: entries live at z positions ``index`` (v_i, v_j, delta_i, delta_j)."""

    index: np.ndarray  # (4,)
    grad: np.ndarray  # (m, 4)
    hess: np.ndarray  # (m, 4, 4)

    def dense_grad(self, N: int) -> np.ndarray:
        out = np.zeros((self.grad.shape[0], N))
        out[:, self.index] = self.grad
        return out

    def dense_hess(self, N: int) -> np.ndarray:
        out = np.zeros((self.hess.shape[0], N, N))
        out[:, self.index[:, None], self.index[None, :]] = self.hess
        return out


def _endpoints(state, q: LineQoi):
    i, j = q.line.i - 1, q.line.j - 1
    return state.v[:, i], state.v[:, j], state.delta[:, i] - state.delta[:, j]


def line_energy(state, q: LineQoi) -> np.ndarray:
    """u = b^2/2 [v_i^2 - 2 v_i v_j cos(delta_i - delta_j) + v_j^2]."""
    vi, vj, dd = _endpoints(state, q)
    return 0.5 * q.b_ij**2 * (vi * vi - 2.0 * vi * vj * np.cos(dd) + vj * vj)


def line_energy_drift(state, q: LineQoi) -> np.ndarray:
    """Closed-form Ito drift b^2 v_i v_j sin(delta_i - delta_j)(omega_i - omega_j)."""
    vi, vj, dd = _endpoints(state, q)
    i, j = q.line.i - 1, q.line.j - 1
    return q.b_ij**2 * vi * vj * np.sin(dd) * (state.omega[:, i] - state.omega[:, j])


def line_responses(state, q: LineQoi) -> ResponseSamples:
    u = line_energy(state, q)
    return ResponseSamples(u, line_energy_drift(state, q), np.zeros_like(u))


def qoi_derivatives(state, q: LineQoi) -> QoiDerivatives:
    """Analytic gradient and Hessian of the line energy.

    Only v_i, v_j, delta_i, delta_j enter the energy, so everything outside
    that 4x4 block is zero (including the mixed v-delta terms inside it,
    which are not).
    """
    n = state.v.shape[1]
    vi, vj, dd = _endpoints(state, q)
    b2 = q.b_ij**2
    c, s = np.cos(dd), np.sin(dd)
    m = vi.shape[0]

    grad = np.empty((m, 4))
    grad[:, 0] = b2 * (vi - vj * c)
    grad[:, 1] = b2 * (vj - vi * c)
    grad[:, 2] = b2 * vi * vj * s
    grad[:, 3] = -grad[:, 2]

    hess = np.zeros((m, 4, 4))
    hess[:, 0, 0] = hess[:, 1, 1] = b2
    hess[:, 0, 1] = hess[:, 1, 0] = -b2 * c
    cdd = b2 * vi * vj * c
    hess[:, 2, 2] = hess[:, 3, 3] = cdd
    hess[:, 2, 3] = hess[:, 3, 2] = -cdd
    # mixed voltage/angle block
    hess[:, 0, 2] = hess[:, 2, 0] = b2 * vj * s
    hess[:, 0, 3] = hess[:, 3, 0] = -b2 * vj * s
    hess[:, 1, 2] = hess[:, 2, 1] = b2 * vi * s
    hess[:, 1, 3] = hess[:, 3, 1] = -b2 * vi * s

    i, j = q.line.i, q.line.j
    index = np.array(
        [state_index(n, "v", i), state_index(n, "v", j), state_index(n, "delta", i), state_index(n, "delta", j)]
    )
    return QoiDerivatives(index, grad, hess)


def ito_coefficients(state, q: LineQoi, case: PowerCase, noise) -> ResponseSamples:
    """Assemble mu^u = grad.mu + tr(sigma^T H sigma)/2 and D^u = grad^T (sigma sigma^T / 2) grad.

    Uses the full drift of the swing model and the constant diffusion matrix,
    restricted to the rows where the QoI derivatives live.
    """
    from .stochastic_sim import diffusion_matrix, system_drift

    der = qoi_derivatives(state, q)
    mu = system_drift(state, case, noise)
    sigma = diffusion_matrix(noise, case.n)[der.index]  # (4, 4n)
    drift_part = np.einsum("mk,mk->m", der.grad, mu[:, der.index])
    trace_part = 0.5 * np.einsum("ka,mkl,la->m", sigma, der.hess, sigma)
    gs = der.grad @ sigma  # (m, 4n)
    diffusion = 0.5 * np.einsum("ma,ma->m", gs, gs)
    return ResponseSamples(line_energy(state, q), drift_part + trace_part, diffusion)


def coordinate_projection_coeffs(state, k: int, case: PowerCase, noise):
    """Drift samples mu_k and constant D_kk = [sigma sigma^T]_kk / 2 for u = z_k (1-based k)."""
    from .stochastic_sim import diffusion_matrix, system_drift

    n = case.n
    if not 1 <= k <= 4 * n:
        raise IndexError(f"coordinate index {k} outside 1..{4 * n}")
    mu = system_drift(state, case, noise)[:, k - 1]
    sig = diffusion_matrix(noise, n)[k - 1]
    return mu, 0.5 * float(sig @ sig)
