"""Shared helpers: small synthetic models whose structure is known by construction."""

import numpy as np

from beamfeedback.state_grid import GridSpec, TransitionModel


def tilted_rows(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    """Stochastic matrix of exponentially tilted copies of one base row.

    Increasing tilt pushes mass rightward, so later rows dominate earlier
    rows in the tail-sum order; this holds exactly, not just statistically.
    """
    base = rng.random(cols) + 0.05
    lam = np.sort(rng.random(rows) * 2.0)
    out = base[None, :] * np.exp(lam[:, None] * np.arange(cols)[None, :])
    return out / out.sum(axis=1, keepdims=True)


def synthetic_setup(rng: np.random.Generator, M: int = 3, N: int = 4, L: int = 3,
                    quantized: bool = False):
    """Random small (GridSpec, TransitionModel) pair with monotone kernels.

    The no-feedback rows and the exact-feedback row come from one tilted
    family, drawn with the feedback row last, so the feedback row dominates
    every no-feedback row.  The quantized row, when requested, is a mixture
    of the exact row and the top no-feedback row, which places it between
    them in the same order.
    """
    g_pts = np.sort(rng.gamma(float(L), 1.0, size=M))
    inner = 0.5 * (g_pts[:-1] + g_pts[1:])
    g_edges = np.concatenate(([0.0], inner, [np.inf]))
    z_edges = np.arange(N + 1) / N
    z_pts = (z_edges[:-1] + z_edges[1:]) / 2
    spec = GridSpec(M=M, N=N, g_edges=g_edges, g_points=g_pts,
                    z_edges=z_edges, z_points=z_pts)
    Ptilde = tilted_rows(rng, M, M)
    family = tilted_rows(rng, N + 1, N)
    P0, p1 = family[:N], family[N]
    peps1 = 0.5 * p1 + 0.5 * P0[-1] if quantized else None
    model = TransitionModel(Ptilde=Ptilde, P0=P0, P1_row=p1,
                            Peps1_row=peps1, sample_count=1)
    return spec, model
