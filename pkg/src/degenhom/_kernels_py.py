"""Pure numpy versions of the element kernels (fallback backend)."""

import numpy as np


def element_gradients(conn, etype, gref, values):
    """Per-element gradients ``(n_el, m, d)`` of nodal ``values`` ``(n_nodes, m)``."""
    nt = gref.shape[0]
    n_el = conn.shape[0]
    m = values.shape[1]
    d = gref.shape[2]
    out = np.empty((n_el, m, d))
    if n_el % nt == 0 and np.array_equal(etype[:nt], np.arange(nt)):
        for k in range(nt):
            ue = values[conn[k::nt]]  # (n_k, d+1, m)
            out[k::nt] = np.einsum("nam,ad->nmd", ue, gref[k])
        return out
    for k in range(nt):
        sel = np.flatnonzero(etype == k)
        out[sel] = np.einsum("nam,ad->nmd", values[conn[sel]], gref[k])
    return out


def scatter_flux(conn, etype, gref, flux, vol, n_nodes):
    """Nodal vector ``sum_e vol * flux_e . grad(phi_a)`` of shape ``(n_nodes, m)``."""
    nt = gref.shape[0]
    m = flux.shape[1]
    out = np.zeros((n_nodes, m))
    for k in range(nt):
        sel = np.flatnonzero(etype == k) if conn.shape[0] % nt else slice(k, None, nt)
        contrib = np.einsum("nmd,ad->nam", flux[sel], gref[k]) * vol
        nodes = conn[sel].ravel()
        for c in range(m):
            out[:, c] += np.bincount(nodes, weights=contrib[:, :, c].ravel(), minlength=n_nodes)
    return out


def power_energy_grad(conn, etype, gref, values, A, Lam, vol, p, s, delta, lam_w):
    """Energy and nodal gradient of ``sum_e vol (s R(|grad u A|_F) + lam_w Lam)``.

    ``R(r) = (delta^2 + r^2)^{p/2} - delta^p`` (``delta = 0`` gives ``r^p``).
    """
    g = element_gradients(conn, etype, gref, values)
    eta = g * A[:, None, :]
    r2 = np.einsum("nij,nij->n", eta, eta)
    if delta > 0:
        base = delta * delta + r2
        val = base ** (p / 2.0) - delta**p
        dval = p * base ** (p / 2.0 - 1.0)
    else:
        val = r2 ** (p / 2.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            dval = np.where(r2 > 0, p * r2 ** (p / 2.0 - 1.0), 0.0) if p < 2 else p * r2 ** (p / 2.0 - 1.0)
    energy = vol * float(np.sum(s * val + lam_w * Lam))
    flux = (s * dval)[:, None, None] * eta * A[:, None, :]
    return energy, scatter_flux(conn, etype, gref, flux, vol, values.shape[0])
