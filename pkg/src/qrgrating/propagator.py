"""Close-coupling propagation on a uniform z-grid.

The coupled equations are written as psi'' = Q(z) psi with

    Q = (2M / hbar^2) [V(z) T - i diag(V_WS,n(z))] - diag(k_nz^2),

where T holds the grating coupling factors (1 on the diagonal).  The
log-derivative Y = psi' psi^-1 of the solution regular at the inner wall is
carried outward with Johnson's method: free propagation over each step
(Y -> (1 + hY)^-1 Y) alternated with Simpson-weighted potential kicks.  Y
stays bounded through closed channels, so no renormalization is needed.

An odd number of intervals is closed with a final Simpson panel of half
width, which keeps the scheme fourth order for any point count.
"""

from dataclasses import dataclass

import numpy as np
from threadpoolctl import threadpool_limits

from .errors import NumericalBlowup, ValidationError
from .potential import ABSORBER_CLASSES, absorber_value, channel_class, coupling_factor, eval_vertical
from .units import UNITS

INNER_BOUNDARIES = ("wall", "wkb")


@dataclass(frozen=True)
class RadialGrid:
    """Uniform grid from ``z_start`` to ``z_end`` (angstrom) with ``n_points`` points."""

    z_start: float
    z_end: float
    n_points: int

    def __post_init__(self):
        if not self.z_end > self.z_start:
            raise ValidationError("z_end must exceed z_start", key="z_end")
        if self.n_points < 3:
            raise ValidationError("need at least 3 grid points", key="n_points")

    @property
    def spacing(self):
        return (self.z_end - self.z_start) / (self.n_points - 1)

    def points(self):
        return np.linspace(self.z_start, self.z_end, self.n_points)


class CouplingBuilder:
    """Evaluates the channel potential matrix for one incidence condition.

    Parameters
    ----------
    vertical : MorseCasimirPotential
    grating : GratingSpec
    channels : ChannelSet
    mass : float
        Total particle mass in amu.
    absorber : WoodsSaxonAbsorber or None
        Imaginary absorber on the diagonal; ``None`` gives a real symmetric problem.
    formula_mode : str
        Coupling formula, see :func:`qrgrating.potential.coupling_factor`.
    """

    def __init__(self, vertical, grating, channels, mass, absorber=None, formula_mode="as_printed"):
        self.vertical = vertical
        self.grating = grating
        self.channels = channels
        self.mass = mass
        self.absorber = absorber
        self.formula_mode = formula_mode
        n = channels.orders
        self.factors = np.asarray(coupling_factor(np.subtract.outer(n, n), grating, formula_mode), dtype=float)
        self.reduced = 1.0 / UNITS.hbar2_over_2m(mass)  # 2M/hbar^2 in 1/(meV A^2)
        self.kz2 = channels.kz2
        self._classes = [channel_class(k) for k in n]

    @property
    def is_complex(self):
        return self.absorber is not None

    def _absorber_diag(self, z):
        z = np.atleast_1d(z)
        out = np.zeros((len(z), len(self._classes)))
        for cls in ABSORBER_CLASSES:
            cols = [i for i, c in enumerate(self._classes) if c == cls]
            if cols:
                out[:, cols] = absorber_value(self.absorber, cls, z)[:, None]
        return out

    def potential_matrix(self, z):
        """Channel potential matrix W(z) in meV.

        Diagonal: V(z) - i V_WS,n(z) - E_n with E_n = hbar^2 k_nz^2 / 2M; off
        diagonal: V_{n-n'}(z).
        """
        v = eval_vertical(self.vertical, float(z))
        w = v * self.factors.astype(complex)
        idx = np.arange(len(self.kz2))
        w[idx, idx] -= self.kz2 / self.reduced
        if self.absorber is not None:
            w[idx, idx] -= 1j * self._absorber_diag(z)[0]
        return w

    def q_stack(self, z):
        """Q(z) = (2M / hbar^2) W(z) for an array of points, shape (len(z), N, N)."""
        z = np.atleast_1d(np.asarray(z, dtype=float))
        v = np.asarray(eval_vertical(self.vertical, z)) * self.reduced
        dtype = complex if self.is_complex else float
        q = np.empty((len(z),) + self.factors.shape, dtype=dtype)
        q[...] = v[:, None, None] * self.factors[None]
        idx = np.arange(len(self.kz2))
        q[:, idx, idx] -= self.kz2[None, :]
        if self.is_complex:
            q[:, idx, idx] -= 1j * self.reduced * self._absorber_diag(z)
        return q


def build_coupling_matrix(z, channels, vertical, absorber, beam, grating, formula_mode="as_printed"):
    """W(z) in meV for a single point; see :meth:`CouplingBuilder.potential_matrix`."""
    builder = CouplingBuilder(vertical, grating, channels, beam.total_mass, absorber, formula_mode)
    return builder.potential_matrix(z)


@dataclass(frozen=True)
class PropagationResult:
    """Log-derivative matrix at the last grid point plus diagnostics.

    ``max_phase_per_step`` is h * max_z sqrt(-Re Q_nn) over classically
    allowed regions, the largest local phase accumulated in one step; values
    well below 1 mean the local wavelength is resolved.
    """

    log_derivative: np.ndarray
    z_end: float
    n_steps: int
    spacing: float
    max_phase_per_step: float
    inner_boundary: str


def inner_boundary(grid, builder, kind="wall"):
    """Initial log-derivative at ``grid.z_start``.

    ``"wall"`` places a node there (infinite Y, returned as ``None``).
    ``"wkb"`` uses the diagonal local wave number: sqrt(Q_nn) in forbidden
    channels (solution decaying inward) and -i k_n in allowed ones (wave
    leaving through the inner edge).
    """
    if kind not in INNER_BOUNDARIES:
        raise ValidationError(f"inner boundary must be one of {INNER_BOUNDARIES}", key="inner_boundary")
    if kind == "wall":
        return None
    q = np.diagonal(builder.q_stack(grid.z_start)[0]).astype(complex)
    y = np.where(q.real > 0, np.sqrt(q), -1j * np.sqrt(-q))
    return np.diag(y)


def _kick_terms(builder, z, h):
    q = builder.q_stack(z)
    eye = np.eye(q.shape[1])
    u = np.linalg.solve(eye[None] - (h * h / 6.0) * q, q)
    return q, u


def propagate(grid, builder, inner="wall", chunk=512):
    """Carry the log-derivative from ``grid.z_start`` to ``grid.z_end``.

    Returns
    -------
    PropagationResult

    Raises
    ------
    NumericalBlowup
        If the log-derivative stops being finite.
    """
    z = grid.points()
    h = grid.spacing
    m = grid.n_points - 1
    m_full = m - (m % 2)
    n = len(builder.kz2)
    eye = np.eye(n)
    y0 = inner_boundary(grid, builder, inner)
    max_phase = 0.0

    def note_phase(q, step):
        nonlocal max_phase
        k2 = -np.real(np.diagonal(q, axis1=1, axis2=2))
        max_phase = max(max_phase, step * float(np.sqrt(max(k2.max(), 0.0))))

    with threadpool_limits(limits=1, user_api="blas"):
        if y0 is None:
            y = None
        else:
            q0 = builder.q_stack(z[0])
            note_phase(q0, h)
            y = y0 + (h / 3.0) * q0[0]

        for start in range(1, m_full + 1, chunk):
            js = np.arange(start, min(start + chunk, m_full + 1))
            q = builder.q_stack(z[js])
            note_phase(q, h)
            odd = js % 2 == 1
            if odd.any():
                q[odd] = np.linalg.solve(eye[None] - (h * h / 6.0) * q[odd], q[odd])
            for k, j in enumerate(js):
                if y is None:
                    y = eye / h
                else:
                    y = np.linalg.solve(eye + h * y, y)
                w = 4.0 if j % 2 else (1.0 if j == m_full else 2.0)
                y = y + (h * w / 3.0) * q[k]
            if not np.all(np.isfinite(y)):
                raise NumericalBlowup(f"log-derivative not finite near z={z[js[-1]]:.4g} A")

        if m % 2:
            hh = 0.5 * h
            q_a = builder.q_stack(z[m - 1])[0]
            q_mid, u_mid = _kick_terms(builder, z[m - 1] + hh, hh)
            q_b = builder.q_stack(z[m])[0]
            if y is None:
                y = eye / hh
            else:
                y = y + (hh / 3.0) * q_a
                y = np.linalg.solve(eye + hh * y, y)
            y = y + (4.0 * hh / 3.0) * u_mid[0]
            y = np.linalg.solve(eye + hh * y, y)
            y = y + (hh / 3.0) * q_b
            if not np.all(np.isfinite(y)):
                raise NumericalBlowup("log-derivative not finite at the last grid point")

    return PropagationResult(
        log_derivative=y,
        z_end=float(z[-1]),
        n_steps=m,
        spacing=h,
        max_phase_per_step=max_phase,
        inner_boundary=inner,
    )
