"""Low-level spectral kernels on uniform periodic grids.

Everything here works on bare numpy arrays; domain length is 2*pi per axis.
Conventions:

* complex FFTs use norm="forward" so coefficients are mode amplitudes;
* odd-order derivatives zero the Nyquist mode to stay real and symmetric;
* the real trigonometric layout per axis of size n (even) is
  ``[a_0, a_1..a_{n/2-1}, a_{n/2}, b_1..b_{n/2-1}]`` for the basis
  ``1, cos(kx), cos(nx/2), sin(kx)``.
"""

from __future__ import annotations

import numpy as np

TWO_PI = 2.0 * np.pi


def wavenumbers(n: int) -> np.ndarray:
    """Integer wavenumbers in FFT order for an axis of size n."""
    return np.fft.fftfreq(n, d=1.0 / n)


def fft_derivative(values: np.ndarray, axis: int, order: int = 1) -> np.ndarray:
    """Spectral derivative of given order along one axis (period 2*pi)."""
    n = values.shape[axis]
    k = wavenumbers(n)
    if order % 2 == 1:
        k = k.copy()
        k[n // 2] = 0.0  # Nyquist has no well-defined odd derivative
    mult = (1j * k) ** order
    shape = [1] * values.ndim
    shape[axis] = n
    spec = np.fft.fft(values, axis=axis, norm="forward")
    spec *= mult.reshape(shape)
    return np.fft.ifft(spec, axis=axis, norm="forward").real


# ---------------------------------------------------------------------------
# real trigonometric transform (tensor-product basis {1, cos kx, sin kx})
# ---------------------------------------------------------------------------

def trig_analyze_axis(values: np.ndarray, axis: int) -> np.ndarray:
    """Real trig coefficients along one axis, layout as in the module docstring."""
    n = values.shape[axis]
    v = np.moveaxis(values, axis, -1)
    r = np.fft.rfft(v, axis=-1) / n
    out = np.empty_like(v)
    out[..., 0] = r[..., 0].real
    out[..., 1 : n // 2] = 2.0 * r[..., 1 : n // 2].real
    out[..., n // 2] = r[..., n // 2].real
    out[..., n // 2 + 1 :] = -2.0 * r[..., 1 : n // 2].imag
    return np.moveaxis(out, -1, axis)


def trig_synthesize_axis(coeffs: np.ndarray, axis: int) -> np.ndarray:
    """Inverse of trig_analyze_axis."""
    n = coeffs.shape[axis]
    c = np.moveaxis(coeffs, axis, -1)
    r = np.zeros(c.shape[:-1] + (n // 2 + 1,), dtype=complex)
    r[..., 0] = c[..., 0]
    r[..., 1 : n // 2] = 0.5 * (c[..., 1 : n // 2] - 1j * c[..., n // 2 + 1 :])
    r[..., n // 2] = c[..., n // 2]
    v = np.fft.irfft(r * n, n=n, axis=-1)
    return np.moveaxis(v, -1, axis)


def trig_forward(values: np.ndarray) -> np.ndarray:
    """Tensor real-trig coefficients over every axis."""
    out = values
    for ax in range(values.ndim):
        out = trig_analyze_axis(out, ax)
    return out


def trig_inverse(coeffs: np.ndarray) -> np.ndarray:
    out = coeffs
    for ax in range(coeffs.ndim):
        out = trig_synthesize_axis(out, ax)
    return out


def trig_axis_weights(n: int) -> np.ndarray:
    """Discrete L2 weights of the 1-D trig basis on the n-point grid.

    Cosine/sine modes integrate to pi; the constant and the Nyquist cosine
    (which samples to +-1) integrate to 2*pi in the rectangle rule.
    """
    w = np.full(n, np.pi)
    w[0] = TWO_PI
    w[n // 2] = TWO_PI
    return w


def trig_parseval_weights(shape: tuple[int, ...]) -> np.ndarray:
    """Tensor weights so that sum(w * coeffs**2) equals the grid L2 norm squared."""
    w = np.ones((1,) * len(shape))
    for ax, n in enumerate(shape):
        v = trig_axis_weights(n)
        sh = [1] * len(shape)
        sh[ax] = n
        w = w * v.reshape(sh)
    return np.broadcast_to(w, shape).copy()


# ---------------------------------------------------------------------------
# 3/2-rule dealiased products
# ---------------------------------------------------------------------------

def _pad_spectrum_axis(spec: np.ndarray, axis: int, m: int) -> np.ndarray:
    """Zero-pad a forward-normalized spectrum from n to m along one axis.

    The input Nyquist mode is dropped (band limit n/2 - 1 by convention).
    """
    n = spec.shape[axis]
    half = n // 2
    shape = list(spec.shape)
    shape[axis] = m
    out = np.zeros(shape, dtype=spec.dtype)
    src = np.moveaxis(spec, axis, 0)
    dst = np.moveaxis(out, axis, 0)
    dst[:half] = src[:half]
    dst[m - half + 1 :] = src[n - half + 1 :]
    return out


def _truncate_spectrum_axis(spec: np.ndarray, axis: int, n: int) -> np.ndarray:
    """Truncate a forward-normalized spectrum from m to n; Nyquist set to zero."""
    m = spec.shape[axis]
    half = n // 2
    shape = list(spec.shape)
    shape[axis] = n
    out = np.zeros(shape, dtype=spec.dtype)
    src = np.moveaxis(spec, axis, 0)
    dst = np.moveaxis(out, axis, 0)
    dst[:half] = src[:half]
    dst[n - half + 1 :] = src[m - half + 1 :]
    return out


def pad_to_grid(values: np.ndarray, factor: float = 1.5) -> np.ndarray:
    """Band-limited upsampling of a real field by zero padding."""
    spec = np.fft.fftn(values, norm="forward")
    for ax, n in enumerate(values.shape):
        m = int(round(n * factor))
        spec = _pad_spectrum_axis(spec, ax, m)
    return np.fft.ifftn(spec, norm="forward").real


def truncate_to_grid(values: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Spectral truncation of a real field back to the target shape."""
    spec = np.fft.fftn(values, norm="forward")
    for ax, n in enumerate(shape):
        spec = _truncate_spectrum_axis(spec, ax, n)
    return np.fft.ifftn(spec, norm="forward").real


def dealiased_product(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pointwise product with 3/2-rule zero padding.

    Exact (no aliasing) for factors band-limited below the Nyquist mode,
    which is the convention used throughout.
    """
    au = pad_to_grid(a)
    bu = pad_to_grid(b)
    return truncate_to_grid(au * bu, a.shape)


def mode_truncate(values: np.ndarray, kmax: int) -> np.ndarray:
    """Keep only modes with |k| <= kmax along every axis."""
    spec = np.fft.fftn(values, norm="forward")
    for ax, n in enumerate(values.shape):
        k = np.abs(wavenumbers(n))
        mask = (k <= kmax).astype(float)
        sh = [1] * values.ndim
        sh[ax] = n
        spec = spec * mask.reshape(sh)
    return np.fft.ifftn(spec, norm="forward").real


def sobolev_norm(values: np.ndarray, order: int) -> float:
    """H^order norm with multiplier (1 + |k|^2)^order on the 2*pi torus."""
    spec = np.fft.fftn(values, norm="forward")
    k2 = np.zeros(values.shape)
    for ax, n in enumerate(values.shape):
        k = wavenumbers(n)
        sh = [1] * values.ndim
        sh[ax] = n
        k2 = k2 + (k.reshape(sh)) ** 2
    weight = (1.0 + k2) ** order
    vol = TWO_PI ** values.ndim
    return float(np.sqrt(vol * np.sum(weight * np.abs(spec) ** 2)))
