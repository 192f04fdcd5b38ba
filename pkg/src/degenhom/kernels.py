"""Backend selection for the element kernels.

The compiled extension is used when it imports; otherwise the numpy
implementation. ``use_backend`` switches explicitly (tests, benchmarks).
"""

import numpy as np

from . import _kernels_py

try:
    from . import _kernels as _kernels_c
except ImportError:  # extension not built
    _kernels_c = None

__all__ = ["BACKEND", "available_backends", "use_backend", "element_gradients", "scatter_flux", "power_energy_grad"]

_impl = _kernels_c if _kernels_c is not None else _kernels_py
BACKEND = "cython" if _kernels_c is not None else "python"


def available_backends() -> list[str]:
    return ["python"] + (["cython"] if _kernels_c is not None else [])


def use_backend(name: str) -> str:
    """Select ``"python"`` or ``"cython"``; returns the previous backend name."""
    global _impl, BACKEND
    if name == "cython" and _kernels_c is None:
        raise RuntimeError("compiled kernels are not built")
    if name not in ("python", "cython"):
        raise ValueError(f"unknown backend {name!r}")
    prev = BACKEND
    _impl = _kernels_c if name == "cython" else _kernels_py
    BACKEND = name
    return prev


def _prep(conn, etype, gref):
    return (
        np.ascontiguousarray(conn, dtype=np.int_),
        np.ascontiguousarray(etype, dtype=np.int_),
        np.ascontiguousarray(gref, dtype=float),
    )


def element_gradients(conn, etype, gref, values):
    conn, etype, gref = _prep(conn, etype, gref)
    return _impl.element_gradients(conn, etype, gref, np.ascontiguousarray(values, dtype=float))


def scatter_flux(conn, etype, gref, flux, vol, n_nodes):
    conn, etype, gref = _prep(conn, etype, gref)
    return _impl.scatter_flux(conn, etype, gref, np.ascontiguousarray(flux, dtype=float), float(vol), int(n_nodes))


def power_energy_grad(conn, etype, gref, values, A, Lam, vol, p, s, delta, lam_w):
    conn, etype, gref = _prep(conn, etype, gref)
    return _impl.power_energy_grad(
        conn, etype, gref,
        np.ascontiguousarray(values, dtype=float),
        np.ascontiguousarray(A, dtype=float),
        np.ascontiguousarray(Lam, dtype=float),
        float(vol), float(p), float(s), float(delta), float(lam_w),
    )
