"""Spectral and profile diagnostics.

Normalization
-------------
For a cell field ``a`` on ``N`` cells of volume ``dV`` the static spectrum is

    S(k) = dV * |sum_j (a_j - <a>) exp(-i k x_j)|^2 / N,

so uncorrelated cell values of variance ``s^2`` give the flat spectrum
``s^2 dV`` and continuum equilibrium covariances (``kT/(rho mu_c)`` for
concentration) can be compared without rescaling.  Spectra of column
averages use the same convention, so ``S(k_x, k_y = 0)`` of a 2D field
equals the spectrum of its column average.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import OptimizeWarning, curve_fit
from scipy.signal import welch

from .errors import FitError, StatisticsError
from .fields import Grid2D
from .theory_lin import TheoryParams, noneq_Scc_full, noneq_Scc_simplified

__all__ = [
    "SpectrumEstimate",
    "TheoryParams",
    "DynamicSpectrum",
    "mode_amplitudes",
    "LorentzianFit",
    "effective_wavenumber",
    "batch_statistics",
    "sample_spectra",
    "static_spectrum",
    "theory_Scc",
    "horizontal_profile",
    "profile_statistics",
    "interface_observables",
    "interface_spectra",
    "dynamic_structure_factor",
    "lorentzian_fit",
    "write_spectrum_csv",
    "write_profile_csv",
    "write_dynamic_csv",
]


@dataclass
class SpectrumEstimate:
    """Batch-averaged spectrum.

    Attributes
    ----------
    k, k_eff : ndarray
        Physical and effective (finite-difference) wavenumbers.
    mean, stderr : ndarray
        Mean spectrum and standard error of the mean over batches.
    n_samples : int
        Number of snapshots that entered the average.
    """

    k: np.ndarray
    k_eff: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    n_samples: int


def effective_wavenumber(k, dx: float):
    """Wavenumber seen by the centred second difference, ``k sin(k dx/2)/(k dx/2)``."""
    k = np.asarray(k, dtype=float)
    return k * np.sinc(k * dx / (2.0 * np.pi))


def batch_statistics(per_sample, n_batches: int | None = None):
    """Mean and standard error over contiguous batches of samples.

    Parameters
    ----------
    per_sample : ndarray
        Values with samples along axis 0.
    n_batches : int, optional
        Number of batches; defaults to one batch per sample.

    Returns
    -------
    mean, stderr : ndarray
    """
    x = np.asarray(per_sample, dtype=float)
    n = x.shape[0]
    nb = n if n_batches is None else int(n_batches)
    if nb < 2 or n < nb:
        raise StatisticsError(f"need at least 2 batches, got {nb} from {n} samples")
    size = n // nb
    means = x[: nb * size].reshape(nb, size, *x.shape[1:]).mean(axis=1)
    return means.mean(axis=0), means.std(axis=0, ddof=1) / np.sqrt(nb)


def _wavenumbers(n: int, h: float):
    m = np.arange(n // 2 + 1)
    return 2.0 * np.pi * m / (n * h)


def sample_spectra(samples, grid: Grid2D, direction: str = "x", mean=None):
    """Spectrum of every snapshot (see :func:`static_spectrum` for options).

    Returns
    -------
    k, k_eff : ndarray
    S : ndarray
        One spectrum per snapshot, snapshots flattened along axis 0.
    """
    a = np.asarray(samples, dtype=float)
    a = a.reshape(-1, *grid.shape)
    if mean is None:
        a = a - a.mean(axis=(-2, -1), keepdims=True)
    else:
        a = a - mean
    nx, ny = grid.shape
    dV = grid.cell_volume
    if direction == "x":
        F = np.fft.rfft(a.sum(axis=-1), axis=-1)
        S = dV * np.abs(F) ** 2 / (nx * ny)
        k = _wavenumbers(nx, grid.dx)
        return k, effective_wavenumber(k, grid.dx), S
    if direction == "y":
        F = np.fft.rfft(a.sum(axis=-2), axis=-1)
        S = dV * np.abs(F) ** 2 / (nx * ny)
        k = _wavenumbers(ny, grid.dy)
        return k, effective_wavenumber(k, grid.dy), S
    if direction == "rows":
        F = np.fft.rfft(a, axis=-2)
        S = (dV * np.abs(F) ** 2 / nx).mean(axis=-1)
        k = _wavenumbers(nx, grid.dx)
        return k, effective_wavenumber(k, grid.dx), S
    if direction == "cols":
        F = np.fft.rfft(a, axis=-1)
        S = (dV * np.abs(F) ** 2 / ny).mean(axis=-2)
        k = _wavenumbers(ny, grid.dy)
        return k, effective_wavenumber(k, grid.dy), S
    if direction == "2d":
        F = np.fft.fft2(a)
        S = dV * np.abs(F) ** 2 / (nx * ny)
        kx = 2.0 * np.pi * np.fft.fftfreq(nx, grid.dx)
        ky = 2.0 * np.pi * np.fft.fftfreq(ny, grid.dy)
        KX, KY = np.meshgrid(kx, ky, indexing="ij")
        k = np.hypot(KX, KY)
        ke = np.hypot(effective_wavenumber(KX, grid.dx), effective_wavenumber(KY, grid.dy))
        return k, ke, S
    raise ValueError(f"unknown direction {direction!r}")


def static_spectrum(samples, grid: Grid2D, direction: str = "x", n_batches: int | None = None,
                    mean=None) -> SpectrumEstimate:
    """Static spectrum of a cell field.

    Parameters
    ----------
    samples : ndarray
        Snapshots of shape ``(..., nx, ny)``; all leading axes are samples.
    grid : Grid2D
    direction : {"x", "y", "rows", "cols", "2d"}
        ``"x"``: ``S(k_x, k_y = 0)``; ``"y"``: ``S(k_x = 0, k_y)``;
        ``"rows"``/``"cols"``: 1D spectra of each row/column, averaged;
        ``"2d"``: the full 2D spectrum in FFT order.
    n_batches : int, optional
        Contiguous batches for error bars (default: each sample).
    mean : array_like, optional
        Reference subtracted before transforming; defaults to the spatial
        mean of each sample.

    Returns
    -------
    SpectrumEstimate
    """
    k, ke, S = sample_spectra(samples, grid, direction, mean)
    m, se = batch_statistics(S, n_batches)
    return SpectrumEstimate(k, ke, m, se, S.shape[0])


def theory_Scc(k_perp, tp: TheoryParams, simplified: bool = False,
               include_equilibrium: bool = True):
    """Concentration spectrum under a gradient.

    With ``simplified=True`` the large-Schmidt-number form without the
    gradient-direction term is returned (non-equilibrium part only, plus
    the equilibrium part if requested).
    """
    if simplified:
        out = noneq_Scc_simplified(k_perp, tp)
        return out + tp.inv_mu / tp.rho if include_equilibrium else out
    return noneq_Scc_full(k_perp, tp, include_equilibrium)


def horizontal_profile(rho1, axis: int = -2):
    """Average over the direction ``axis`` (default x), leaving a profile in y."""
    return np.asarray(rho1, dtype=float).mean(axis=axis)


def profile_statistics(samples, n_batches: int | None = None, axis: int = -2):
    """Batch mean and standard error of horizontal profiles of ``samples``."""
    a = np.asarray(samples, dtype=float)
    prof = horizontal_profile(a, axis=axis)
    prof = prof.reshape(-1, prof.shape[-1])
    return batch_statistics(prof, n_batches)


def interface_observables(c, grid: Grid2D):
    """Column averages ``c_v(x)`` and first moments ``h_c(x)`` over y.

    ``h_c`` is the average of ``y c`` with cell-centre ``y``.
    """
    c = np.asarray(c, dtype=float)
    y = grid.cell_centers(1)
    return c.mean(axis=-1), (c * y).mean(axis=-1)


def interface_spectra(c_v, h_c, grid: Grid2D, n_batches: int | None = None):
    """One-dimensional spectra of column observables.

    The scale ``dV ny / nx`` makes the spectrum of ``c_v`` equal to the 2D
    spectrum at ``k_y = 0``.  Raw wavenumbers are reported.

    Returns
    -------
    S_c, S_h : SpectrumEstimate
    """
    nx, ny = grid.shape
    scale = grid.cell_volume * ny / nx
    k = _wavenumbers(nx, grid.dx)
    out = []
    for a in (c_v, h_c):
        a = np.asarray(a, dtype=float).reshape(-1, nx)
        a = a - a.mean(axis=-1, keepdims=True)
        S = scale * np.abs(np.fft.rfft(a, axis=-1)) ** 2
        m, se = batch_statistics(S, n_batches)
        out.append(SpectrumEstimate(k, k, m, se, S.shape[0]))
    return out[0], out[1]


@dataclass
class DynamicSpectrum:
    """Dynamic structure factor on selected modes.

    ``S[i]`` is the spectrum of mode ``modes[i]`` at angular frequencies
    ``omega`` (ascending), normalized so that ``sum(S) * domega / (2 pi)``
    is the static spectrum of that mode.
    """

    modes: list
    k: np.ndarray
    k_eff: np.ndarray
    omega: np.ndarray
    S: np.ndarray
    n_series: int


def mode_amplitudes(fields, grid: Grid2D, modes) -> np.ndarray:
    """Unnormalized Fourier amplitudes of selected modes.

    Parameters
    ----------
    fields : ndarray
        Fields of shape ``(..., nx, ny)``.
    grid : Grid2D
    modes : sequence of (int, int)
        Integer mode numbers ``(m_x, m_y)``.

    Returns
    -------
    ndarray
        Complex array of shape ``(..., len(modes))``, the ``fft2`` values
        at the requested modes.
    """
    nx, ny = grid.shape
    F = np.fft.fft2(np.asarray(fields, dtype=float))
    return np.stack([F[..., mx % nx, my % ny] for mx, my in modes], axis=-1)


def dynamic_structure_factor(series, dt: float, grid: Grid2D, modes, nperseg: int = 256,
                             vorticity: bool = False, amplitudes: bool = False
                             ) -> DynamicSpectrum:
    """Welch estimate of ``S(k, omega)`` for selected Fourier modes.

    Parameters
    ----------
    series : ndarray
        Uniformly sampled fields, shape ``(n_t, nx, ny)`` or
        ``(n_series, n_t, nx, ny)``; with ``amplitudes=True`` the output of
        `mode_amplitudes`, shape ``(n_t, n_modes)`` or
        ``(n_series, n_t, n_modes)``.
    dt : float
        Sampling interval.
    grid : Grid2D
    modes : sequence of (int, int)
        Integer mode numbers ``(m_x, m_y)``.
    nperseg : int
        Welch segment length (Hann window, half overlap).
    vorticity : bool
        Divide the mode amplitudes by the effective wavenumber, turning a
        vorticity field into the transverse velocity.
    amplitudes : bool
        ``series`` holds precomputed mode amplitudes, which avoids storing
        whole fields for long records.

    Returns
    -------
    DynamicSpectrum
    """
    a = np.asarray(series)
    if not amplitudes:
        a = mode_amplitudes(a, grid, modes)
    if a.ndim == 2:
        a = a[None]
    if a.shape[-1] != len(modes):
        raise StatisticsError(f"{a.shape[-1]} amplitude columns for {len(modes)} modes")
    n_series, n_t = a.shape[:2]
    if nperseg < 16 or n_t < nperseg:
        raise StatisticsError(f"series of length {n_t} too short for segments of {nperseg}")
    nx, ny = grid.shape
    ks, kes, rows = [], [], []
    for j, (mx, my) in enumerate(modes):
        kx = 2.0 * np.pi * mx / grid.lengths[0]
        ky = 2.0 * np.pi * my / grid.lengths[1]
        ke = np.hypot(effective_wavenumber(kx, grid.dx), effective_wavenumber(ky, grid.dy))
        if ke == 0.0:
            raise StatisticsError("the k = 0 mode has no dynamic spectrum")
        amp = a[:, :, j]
        if vorticity:
            amp = amp / ke
        f, P = welch(amp, fs=1.0 / dt, window="hann", nperseg=nperseg,
                     return_onesided=False, detrend=False, axis=-1)
        rows.append(P.mean(axis=0) * grid.cell_volume / (nx * ny))
        ks.append(np.hypot(kx, ky))
        kes.append(ke)
    order = np.argsort(f)
    S = np.array(rows)[:, order]
    return DynamicSpectrum(list(modes), np.array(ks), np.array(kes), 2.0 * np.pi * f[order], S,
                           n_series)


@dataclass
class LorentzianFit:
    """Fit of ``A / (omega^2 + gamma^2) + B``."""

    amplitude: float
    gamma: float
    offset: float
    residual: float

    def diffusivity(self, k: float) -> float:
        """Transport coefficient ``gamma / k^2``."""
        return self.gamma / k**2


def _lorentzian(w, A, G, B):
    return A / (w * w + G * G) + B


def lorentzian_fit(omega, S, sigma=None, fit_offset: bool = True,
                   reweight: int = 2) -> LorentzianFit:
    """Nonlinear least-squares fit of a Lorentzian peak centred at zero.

    Initial width is the half-maximum width of the data and initial
    amplitude follows from the peak value.  The fit runs on data scaled by
    the peak height and initial width, so the result is equivariant under
    rescaling of ``S``.

    Parameters
    ----------
    omega, S : array_like
        Frequencies and spectrum values.
    sigma : array_like, optional
        Absolute errors of ``S``.
    fit_offset : bool
        Fit a constant background ``B``.
    reweight : int
        Without ``sigma``, number of refits that weight each bin by the
        previous model value.  Periodogram errors are proportional to the
        mean, so this makes all bins count equally.

    Raises
    ------
    FitError
        Fewer than 16 frequency bins, or the optimizer fails.
    """
    w = np.asarray(omega, dtype=float)
    s = np.asarray(S, dtype=float)
    if w.size < 16:
        raise FitError(f"need at least 16 frequency bins, got {w.size}")
    peak = float(s[np.argmin(np.abs(w))])
    base = float(min(s.min(), 0.0)) if fit_offset else 0.0
    if not peak > base:
        raise FitError("spectrum has no peak at zero frequency")
    above = np.abs(w[s - base >= 0.5 * (peak - base)])
    g0 = float(above.max()) if above.size and above.max() > 0 else float(np.abs(w[w != 0]).min())
    ws, ss = w / g0, s / peak
    sig = None if sigma is None else np.asarray(sigma, dtype=float) / peak
    p0 = [(1.0 - base / peak), 1.0, base / peak]
    if fit_offset:
        f, p0_use = _lorentzian, p0
    else:
        def f(x, A, G):
            return _lorentzian(x, A, G, 0.0)
        p0_use = p0[:2]
    passes = 1 + (int(reweight) if sigma is None else 0)
    p = p0_use
    for i in range(passes):
        if i > 0:
            sig = np.abs(f(ws, *p))
            if not np.all(sig > 0):
                break
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", OptimizeWarning)
                p, _ = curve_fit(f, ws, ss, p0=p, sigma=sig, xtol=1e-15, ftol=1e-15,
                                 gtol=1e-15, maxfev=20000)
        except (RuntimeError, ValueError) as exc:
            raise FitError(f"Lorentzian fit failed: {exc}; initial width {g0:.4g}, "
                           f"peak {peak:.4g}")
    A, G = p[0], abs(p[1])
    B = p[2] if fit_offset else 0.0
    resid = float(np.sqrt(np.mean((f(ws, *p) - ss) ** 2)))
    return LorentzianFit(A * peak * g0**2, G * g0, B * peak, resid * peak)


def write_spectrum_csv(path, est: SpectrumEstimate):
    """Write columns ``k, k_eff, S_mean, S_stderr, n_samples``."""
    n = np.full(np.size(est.mean), est.n_samples)
    data = np.column_stack([np.ravel(est.k), np.ravel(est.k_eff), np.ravel(est.mean),
                            np.ravel(est.stderr), n])
    np.savetxt(path, data, delimiter=",", header="k,k_eff,S_mean,S_stderr,n_samples",
               comments="", fmt=["%.17g"] * 4 + ["%d"])


def write_profile_csv(path, y, mean, stderr):
    """Write columns ``y, rho1_mean, stderr``."""
    np.savetxt(path, np.column_stack([y, mean, stderr]), delimiter=",",
               header="y,rho1_mean,stderr", comments="", fmt="%.17g")


def write_dynamic_csv(path, dyn: DynamicSpectrum):
    """Write long-format columns ``k, omega, S``."""
    rows = [np.column_stack([np.full(dyn.omega.size, k), dyn.omega, S])
            for k, S in zip(dyn.k, dyn.S)]
    np.savetxt(path, np.vstack(rows), delimiter=",", header="k,omega,S", comments="",
               fmt="%.17g")
