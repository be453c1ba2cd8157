"""Procedural test phantoms."""

from __future__ import annotations

import numpy as np

# (centre x, centre y, semi-axis a, semi-axis b, rotation deg, value, smooth)
# in units of the half-width of the image; "smooth" adds a radial taper.
_ELLIPSES = [
    (0.00, 0.05, 0.72, 0.80, 0.0, 0.45, False),
    (0.00, 0.05, 0.66, 0.74, 0.0, -0.15, False),
    (-0.25, 0.20, 0.22, 0.12, 35.0, 0.55, True),
    (0.28, 0.25, 0.15, 0.24, -20.0, 0.40, True),
    (0.05, -0.35, 0.30, 0.10, 10.0, 0.35, False),
    (-0.10, -0.05, 0.08, 0.08, 0.0, 0.60, True),
    (0.30, -0.10, 0.06, 0.12, 45.0, -0.20, False),
    (0.00, 0.55, 0.05, 0.18, 90.0, 0.30, True),
]


def ellipses_phantom(side: int) -> np.ndarray:
    """Piecewise-smooth phantom of overlapping ellipses, values in ``[0, 1]``.

    The support lies inside the inscribed disc so every projection sees the
    whole object.
    """
    u = (np.arange(side) + 0.5) / side * 2.0 - 1.0
    x, y = np.meshgrid(u, -u)
    img = np.zeros((side, side))
    for cx, cy, a, b, rot, val, smooth in _ELLIPSES:
        t = np.deg2rad(rot)
        xr = (x - cx) * np.cos(t) + (y - cy) * np.sin(t)
        yr = -(x - cx) * np.sin(t) + (y - cy) * np.cos(t)
        rho = (xr / a) ** 2 + (yr / b) ** 2
        inside = rho <= 1.0
        img[inside] += val * ((1.0 - rho[inside]) if smooth else 1.0)
    return np.clip(img, 0.0, 1.0)


BUILTIN = {"ellipses": ellipses_phantom}


def builtin_phantom(name: str, side: int) -> np.ndarray:
    try:
        return BUILTIN[name](side)
    except KeyError:
        raise ValueError(f"unknown builtin phantom {name!r}; choose from {sorted(BUILTIN)}") from None
