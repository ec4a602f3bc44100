"""Asymptotic matching and scattering observables.

Open channels are matched to flux-normalized plane waves,

    psi_n(z) ~ delta_n0 e^{-i k_0 z} / sqrt(k_0) - S_n0 e^{+i k_n z} / sqrt(k_n),

and closed channels to e^{-kappa_n (z - z_end)}.  Closed-channel amplitudes
enter the linear solve but not the observables.
"""

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import IllConditionedMatch

DEFAULT_COND_BOUND = 1e12
CSV_HEADER = ("n", "kz2", "open", "re_S", "im_S", "intensity", "efficiency")


def _asymptotic_forms(kz2, open_, z):
    n = len(kz2)
    inc = np.zeros(n, complex)
    inc_d = np.zeros(n, complex)
    out = np.zeros(n, complex)
    out_d = np.zeros(n, complex)
    k = np.sqrt(np.abs(kz2))
    o = open_
    norm = 1.0 / np.sqrt(k[o])
    inc[o] = np.exp(-1j * k[o] * z) * norm
    inc_d[o] = -1j * k[o] * inc[o]
    out[o] = np.exp(1j * k[o] * z) * norm
    out_d[o] = 1j * k[o] * out[o]
    # closed (and threshold, kappa = 0): bounded solution, unit amplitude at z
    out[~o] = 1.0
    out_d[~o] = -k[~o]
    return inc, inc_d, out, out_d


def match_asymptotic(prop_result, channels, cond_bound=DEFAULT_COND_BOUND, incident=None):
    """S_n0 for every channel (closed entries are the decaying amplitudes).

    ``incident`` selects another open channel index as the incoming one
    (default: the specular channel).

    Raises
    ------
    IllConditionedMatch
        If the matching matrix has condition number above ``cond_bound``.
    """
    y = np.asarray(prop_result.log_derivative, dtype=complex)
    z = prop_result.z_end
    inc, inc_d, out, out_d = _asymptotic_forms(channels.kz2, channels.open, z)
    a = y * out[None, :] - np.diag(out_d)
    cond = float(np.linalg.cond(a))
    if not np.isfinite(cond) or cond > cond_bound:
        raise IllConditionedMatch(
            f"matching matrix condition number {cond:.3e} exceeds {cond_bound:.1e}", condition=cond
        )
    j = channels.incident_index if incident is None else incident
    rhs = y[:, j] * inc[j]
    rhs[j] -= inc_d[j]
    return np.linalg.solve(a, rhs)


@dataclass
class ScatteringSolution:
    """S-matrix column and derived observables for one incidence condition.

    All per-channel arrays cover every channel of the expansion; closed
    channels carry zero intensity and efficiency.
    """

    orders: np.ndarray
    kz2: np.ndarray
    open: np.ndarray
    s_column: np.ndarray
    intensities: np.ndarray
    p_qr: float
    efficiencies: np.ndarray
    emerging: np.ndarray
    metadata: dict = field(default_factory=dict)

    def index(self, n):
        hits = np.nonzero(self.orders == n)[0]
        if hits.size == 0:
            raise KeyError(f"order {n} not in the channel set")
        return int(hits[0])

    def intensity(self, n):
        return float(self.intensities[self.index(n)])

    def efficiency(self, n):
        return float(self.efficiencies[self.index(n)])

    @property
    def specular(self):
        return self.intensity(0)

    @property
    def open_orders(self):
        return [int(n) for n in self.orders[self.open]]

    def rows(self):
        for i, n in enumerate(self.orders):
            s = self.s_column[i] if self.open[i] else 0.0
            yield (
                int(n), float(self.kz2[i]), bool(self.open[i]), float(np.real(s)), float(np.imag(s)),
                float(self.intensities[i]), float(self.efficiencies[i]),
            )

    def to_csv(self, only_open=True):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in self.rows():
            if only_open and not r[2]:
                continue
            w.writerow([r[0], fmt(r[1]), int(r[2])] + [fmt(x) for x in r[3:]])
        return buf.getvalue()

    def summary(self):
        return {
            "p_qr": fmt(self.p_qr),
            "specular_intensity": fmt(self.specular),
            "open_orders": self.open_orders,
            "emerging_orders": [int(n) for n in self.orders[self.emerging]],
            "metadata": self.metadata,
        }

    def to_json(self):
        return json.dumps(self.summary(), indent=2, sort_keys=True) + "\n"


def fmt(x):
    """12 significant digits in scientific notation."""
    return f"{x:.11e}"


def observables(s_column, channels, metadata=None):
    """Intensities, P^QR and efficiencies from a matched S-matrix column.

    Channels with |k_nz^2| within 10 times the threshold guard are flagged as
    emerging.
    """
    s = np.asarray(s_column, dtype=complex)
    open_ = np.asarray(channels.open, dtype=bool)
    inten = np.where(open_, np.abs(s) ** 2, 0.0)
    p = float(inten.sum())
    eff = inten / p if p > 0 else np.zeros_like(inten)
    emerging = np.abs(channels.kz2) <= 10.0 * channels.threshold_eps
    return ScatteringSolution(
        orders=np.asarray(channels.orders),
        kz2=np.asarray(channels.kz2),
        open=open_,
        s_column=s,
        intensities=inten,
        p_qr=p,
        efficiencies=eff,
        emerging=emerging,
        metadata=dict(metadata or {}),
    )
