"""One-ring spatial covariance model, Karhunen-Loeve channel sampling, and
LMMSE-style transmitter-side channel estimates.

The base station carries a uniform circular array; a user's spatial
covariance follows from its angle of arrival and angular spread. Channels
are drawn through the eigendecomposition of that covariance, and the
transmitter's estimate is the true channel minus a correlated Gaussian
error whose covariance shrinks with the uplink training budget.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def circular_radius_factor(num_antennas: int) -> float:
    """Radius (in wavelengths) of a uniform circular array with half-wavelength
    spacing between adjacent elements.

    Undefined for a single antenna (no adjacent pair); returns 0 there, which
    is unobservable since a 1x1 covariance is always [1].
    """
    if num_antennas < 1:
        raise ValueError("num_antennas must be >= 1")
    if num_antennas == 1:
        return 0.0
    step = 2.0 * np.pi / num_antennas
    return 0.5 / np.sqrt((1.0 - np.cos(step)) ** 2 + np.sin(step) ** 2)


@dataclass(frozen=True)
class OneRingGeometry:
    """Array geometry plus one user's scattering ring.

    Parameters
    ----------
    num_antennas : int
        Number of BS antennas on the circular array.
    aoa : float
        Angle of arrival of the user, radians.
    angular_spread : float
        Half-width of the scattering ring, radians, in (0, pi].
    wavelength : float
        Carrier wavelength; positions are expressed in these units, so the
        default of 1 loses nothing (the wavelength cancels in the covariance).
    """

    num_antennas: int
    aoa: float
    angular_spread: float
    wavelength: float = 1.0
    radius_factor: float = field(init=False)

    def __post_init__(self):
        if self.num_antennas < 1:
            raise ValueError("num_antennas must be >= 1")
        if not (0.0 < self.angular_spread <= np.pi):
            raise ValueError("angular_spread must lie in (0, pi]")
        if self.wavelength <= 0.0:
            raise ValueError("wavelength must be positive")
        object.__setattr__(
            self, "radius_factor", circular_radius_factor(self.num_antennas)
        )

    def antenna_positions(self) -> np.ndarray:
        """(N, 2) array of antenna positions on the circle of radius
        wavelength * radius_factor, antenna n at angle 2*pi*n/N."""
        n = np.arange(self.num_antennas)
        ang = 2.0 * np.pi * n / self.num_antennas
        radius = self.wavelength * self.radius_factor
        return radius * np.stack([np.cos(ang), np.sin(ang)], axis=1)


@dataclass(frozen=True)
class SpatialCovariance:
    """Hermitian PSD channel covariance with unit diagonal."""

    matrix: np.ndarray

    @property
    def num_antennas(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class KlFactor:
    """Truncated eigendecomposition R ~= U diag(eigenvalues) U^H.

    ``eigenvectors`` is (N, r) with orthonormal columns and ``eigenvalues``
    is the length-r vector of retained (positive) eigenvalues.
    """

    eigenvectors: np.ndarray
    eigenvalues: np.ndarray

    @property
    def rank(self) -> int:
        return int(self.eigenvalues.shape[0])


@dataclass(frozen=True)
class UserChannelState:
    """True channel, its transmitter-side estimate, and the estimation-error
    covariance for one user. ``cov`` is the originating spatial covariance
    when known."""

    h: np.ndarray
    h_hat: np.ndarray
    error_cov: np.ndarray
    cov: SpatialCovariance | None = None

    @property
    def num_antennas(self) -> int:
        return self.h.shape[0]


def build_one_ring_covariance(
    geom: OneRingGeometry, quad_points: int = 200
) -> SpatialCovariance:
    """Spatial covariance of the one-ring scattering model.

    Entry (n, m) is the average over ring angles x in
    [aoa - spread, aoa + spread] of exp(-j * (2*pi/wavelength) *
    [cos x, sin x] . (r_n - r_m)), evaluated with a ``quad_points``-node
    Gauss-Legendre rule. The positive quadrature weights make the result a
    Gram matrix, hence PSD up to roundoff; the integrand is entire, so the
    default 200 nodes are converged to machine precision even for wide
    rings and many antennas.

    Parameters
    ----------
    geom : OneRingGeometry
    quad_points : int
        Number of quadrature nodes; must be even and >= 8.

    Returns
    -------
    SpatialCovariance
        Symmetrized (R + R^H)/2 result with unit diagonal.
    """
    if quad_points < 8 or quad_points % 2 != 0:
        raise ValueError("quad_points must be an even integer >= 8")
    lo = geom.aoa - geom.angular_spread
    hi = geom.aoa + geom.angular_spread
    nodes, base_w = np.polynomial.legendre.leggauss(quad_points)
    x = 0.5 * (hi - lo) * nodes + 0.5 * (hi + lo)
    weights = 0.5 * (hi - lo) * base_w

    pos = geom.antenna_positions()
    diff = pos[:, None, :] - pos[None, :, :]  # (N, N, 2)
    scale = 2.0 * np.pi / geom.wavelength
    phase = scale * (
        np.cos(x)[:, None, None] * diff[..., 0]
        + np.sin(x)[:, None, None] * diff[..., 1]
    )
    integral = np.tensordot(weights, np.exp(-1j * phase), axes=1)
    r = integral / (2.0 * geom.angular_spread)
    r = 0.5 * (r + r.conj().T)
    return SpatialCovariance(r)


def kl_factorize(cov: SpatialCovariance, rel_tol: float = 1e-10) -> KlFactor:
    """Eigendecomposition of a covariance keeping eigenvalues above
    ``rel_tol`` times the largest one."""
    r = np.asarray(cov.matrix)
    if not np.all(np.isfinite(r)):
        raise ValueError("covariance has non-finite entries")
    w, u = np.linalg.eigh(r)
    lam_max = max(float(w[-1]), 0.0)
    keep = w > rel_tol * lam_max
    return KlFactor(eigenvectors=u[:, keep], eigenvalues=w[keep])


def sample_channel(kl: KlFactor, rng: np.random.Generator) -> np.ndarray:
    """Draw one channel vector h = U diag(sqrt(eigenvalues)) g with
    g ~ CN(0, I_r); real and imaginary parts of each entry are N(0, 1/2)."""
    r = kl.rank
    n = kl.eigenvectors.shape[0]
    if r == 0:
        # consume no randomness; a zero covariance yields the zero channel
        return np.zeros(n, dtype=complex)
    g = (rng.standard_normal(r) + 1j * rng.standard_normal(r)) / np.sqrt(2.0)
    return kl.eigenvectors @ (np.sqrt(kl.eigenvalues) * g)


def lmmse_error_covariance(
    cov: SpatialCovariance, tau_p: float, sigma2: float
) -> np.ndarray:
    """Estimation-error covariance of the linear MMSE channel estimate.

    Equals R - R (R + (sigma2/tau_p) I)^{-1} R, where ``tau_p`` is the
    product of uplink training length and training power. Computed through
    the eigendecomposition of R (per eigenvalue lam the error eigenvalue is
    lam*d/(lam+d) with d = sigma2/tau_p), which is algebraically identical
    but avoids the cancellation that makes the resolvent form lose the
    entire result when tau_p is huge.

    Parameters
    ----------
    cov : SpatialCovariance
    tau_p : float
        Training budget (length times power); must be positive.
    sigma2 : float
        Uplink noise power; must be positive.

    Returns
    -------
    np.ndarray
        Hermitian PSD matrix with 0 <= Phi <= R in the PSD order.
    """
    if tau_p <= 0.0:
        raise ValueError("tau_p must be positive")
    if sigma2 <= 0.0:
        raise ValueError("sigma2 must be positive")
    r = np.asarray(cov.matrix)
    d = sigma2 / tau_p
    w, u = np.linalg.eigh(r)
    w = np.clip(w, 0.0, None)
    phi_eigs = w * d / (w + d)
    phi = (u * phi_eigs) @ u.conj().T
    return 0.5 * (phi + phi.conj().T)


def _psd_sqrt_factor(mat: np.ndarray) -> np.ndarray:
    """Factor F with F F^H = mat for Hermitian PSD mat, tolerant of rank
    deficiency (negative round-off eigenvalues are clipped)."""
    w, u = np.linalg.eigh(mat)
    w = np.clip(w, 0.0, None)
    return u * np.sqrt(w)


def sample_csit(
    h: np.ndarray,
    phi: np.ndarray,
    rng: np.random.Generator,
    cov: SpatialCovariance | None = None,
) -> UserChannelState:
    """Draw a CSIT error e ~ CN(0, phi) and return the channel state with
    the estimate h_hat = h - e."""
    h = np.asarray(h, dtype=complex)
    n = h.shape[0]
    factor = _psd_sqrt_factor(np.asarray(phi))
    g = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / np.sqrt(2.0)
    e = factor @ g
    return UserChannelState(h=h, h_hat=h - e, error_cov=np.asarray(phi), cov=cov)
