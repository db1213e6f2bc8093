import math

import numpy as np
import pytest


def ridge_image(size: int, phi: float, period: float = 10.0) -> np.ndarray:
    """Sinusoidal ridges running along direction phi (x = column, y = row)."""
    y, x = np.mgrid[0:size, 0:size].astype(np.float64)
    # intensity varies along the ridge normal (-sin phi, cos phi)
    u = -x * math.sin(phi) + y * math.cos(phi)
    return 127.5 + 127.5 * np.sin(2 * math.pi * u / period)


def brute_orientation(pix: np.ndarray, block: int):
    """Per-pixel loop reference for block angles and coherence."""
    pix = np.asarray(pix, dtype=np.float64)
    h, w = pix.shape
    gx = np.zeros_like(pix)
    gy = np.zeros_like(pix)
    for r in range(h):
        for c in range(w):
            if c == 0:
                gx[r, c] = pix[r, 1] - pix[r, 0]
            elif c == w - 1:
                gx[r, c] = pix[r, c] - pix[r, c - 1]
            else:
                gx[r, c] = (pix[r, c + 1] - pix[r, c - 1]) / 2
            if r == 0:
                gy[r, c] = pix[1, c] - pix[0, c]
            elif r == h - 1:
                gy[r, c] = pix[r, c] - pix[r - 1, c]
            else:
                gy[r, c] = (pix[r + 1, c] - pix[r - 1, c]) / 2
    rows, cols = h // block, w // block
    angles = np.zeros((rows, cols))
    coh = np.zeros((rows, cols))
    for br in range(rows):
        for bc in range(cols):
            sxy = sxx = en = 0.0
            for r in range(br * block, (br + 1) * block):
                for c in range(bc * block, (bc + 1) * block):
                    sxy += 2 * gx[r, c] * gy[r, c]
                    sxx += gx[r, c] ** 2 - gy[r, c] ** 2
                    en += gx[r, c] ** 2 + gy[r, c] ** 2
            a = 0.5 * math.atan2(sxy, sxx) + math.pi / 2
            angles[br, bc] = a % math.pi
            coh[br, bc] = math.hypot(sxx, sxy) / (en + 1e-12)
    return angles, coh


def circ_diff(a, b):
    """Smallest absolute difference between axial angles (period pi)."""
    d = np.abs(np.asarray(a) - np.asarray(b)) % math.pi
    return np.minimum(d, math.pi - d)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
