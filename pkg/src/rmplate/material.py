"""Plate bending tensor and shearing matrix.

Coefficients are callables of an array of points with shape (n, 2):
``bending(x)`` returns (n, 2, 2, 2, 2) arrays P[a, b, c, d] with
(P A)_ab = P_abcd A_cd, ``shear(x)`` returns (n, 2, 2).
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

_I2 = np.eye(2)
_SYM = 0.5 * (np.einsum("ac,bd->abcd", _I2, _I2) + np.einsum("ad,bc->abcd", _I2, _I2))
_TRACE = np.einsum("ab,cd->abcd", _I2, _I2)


class MaterialError(ValueError):
    pass


def _as_field(value):
    if callable(value):
        return value
    c = float(value)
    return lambda x: np.full(np.asarray(x).reshape(-1, 2).shape[0], c)


def _points(x):
    return np.asarray(x, dtype=float).reshape(-1, 2)


@dataclass(frozen=True)
class EllipticityConstants:
    """sigma0 h |v|^2 <= S v.v <= sigma1 h |v|^2 and the xi bounds for P."""

    sigma0: float
    sigma1: float
    xi0: float
    xi1: float


@dataclass(frozen=True)
class LameField:
    lam: Callable
    mu: Callable
    alpha0: float
    alpha1: float
    gamma0: float
    constant: Optional[tuple] = None

    def __post_init__(self):
        object.__setattr__(self, "lam", _as_field(self.lam))
        object.__setattr__(self, "mu", _as_field(self.mu))
        if min(self.alpha0, self.alpha1, self.gamma0) <= 0:
            raise MaterialError("alpha0, alpha1, gamma0 must be positive")

    @classmethod
    def uniform(cls, lam, mu):
        """Constant Lame moduli with the tightest admissible constants."""
        lam, mu = float(lam), float(mu)
        if mu <= 0 or 2 * mu + 3 * lam <= 0:
            raise MaterialError(f"need mu > 0 and 2mu + 3lambda > 0 (lambda={lam}, mu={mu})")
        return cls(lam, mu, alpha0=mu, alpha1=abs(lam) + abs(mu), gamma0=2 * mu + 3 * lam,
                   constant=(lam, mu))

    def gradients(self, x, step=1e-6):
        """Central-difference gradients of (lambda, mu), each shape (n, 2)."""
        x = _points(x)
        if self.constant is not None:
            z = np.zeros_like(x)
            return z, z.copy()
        out = []
        for f in (self.lam, self.mu):
            g = np.empty_like(x)
            for k in range(2):
                e = np.zeros(2)
                e[k] = step
                g[:, k] = (f(x + e) - f(x - e)) / (2 * step)
            out.append(g)
        return out[0], out[1]

    def check(self, points, rho0=1.0, spacing=None):
        """Verify the bounds on sample points.

        The Lipschitz seminorm is estimated from difference quotients between
        sample pairs closer than ``spacing`` and inflated by 5% before
        comparison, since sampling underestimates the supremum.
        """
        x = _points(points)
        lam, mu = self.lam(x), self.mu(x)
        problems = []
        if mu.min() < self.alpha0 * (1 - 1e-12):
            problems.append(f"min mu = {mu.min():.6g} < alpha0 = {self.alpha0:.6g}")
        s = 2 * mu + 3 * lam
        if s.min() < self.gamma0 * (1 - 1e-12):
            problems.append(f"min(2mu+3lambda) = {s.min():.6g} < gamma0 = {self.gamma0:.6g}")
        lip = 0.0
        if self.constant is None:
            from scipy.spatial import cKDTree

            if spacing is None:
                span = np.ptp(x, axis=0).max()
                spacing = 4.0 * span / np.sqrt(len(x))
            pairs = cKDTree(x).query_pairs(spacing, output_type="ndarray")
            if len(pairs):
                d = np.hypot(*(x[pairs[:, 0]] - x[pairs[:, 1]]).T)
                d = np.maximum(d, 1e-300)
                for v in (lam, mu):
                    lip += 1.05 * np.max(np.abs(v[pairs[:, 0]] - v[pairs[:, 1]]) / d)
        norm = np.abs(lam).max() + np.abs(mu).max() + rho0 * lip
        if norm > self.alpha1 * (1 + 1e-12):
            problems.append(f"C^(0,1) norm estimate {norm:.6g} > alpha1 = {self.alpha1:.6g}")
        return problems


@dataclass(frozen=True)
class PlateMaterial:
    bending: Callable
    shear: Callable
    h: float
    rho0: float = 1.0
    lipschitz_bound: Optional[float] = None
    constants: Optional[EllipticityConstants] = None
    lame: Optional[LameField] = None
    kind: str = "anisotropic"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.h > 0 or not self.rho0 > 0:
            raise MaterialError("thickness and rho0 must be positive")

    @property
    def is_constant(self):
        if self.lame is not None:
            return self.lame.constant is not None
        return bool(self.params.get("constant", False))


def isotropic_plate(lame, h, rho0=1.0, sample_points=None):
    """Isotropic plate from Lame fields.

    E = mu(2mu+3lambda)/(mu+lambda), nu = lambda/(2(mu+lambda)),
    S = E h / (2(1+nu)) I, P A = B[(1-nu) sym(A) + nu tr(A) I] with
    B = E h^3 / (12 (1-nu^2)).  Variable fields are checked on
    ``sample_points`` when given.
    """
    if not isinstance(lame, LameField):
        raise MaterialError("isotropic_plate expects a LameField")
    pts = np.zeros((1, 2)) if sample_points is None else sample_points
    problems = lame.check(pts, rho0)
    if problems:
        raise MaterialError("; ".join(problems))

    def moduli(x):
        x = _points(x)
        lam, mu = lame.lam(x), lame.mu(x)
        E = mu * (2 * mu + 3 * lam) / (mu + lam)
        nu = lam / (2 * (mu + lam))
        return E, nu

    def bending(x):
        E, nu = moduli(x)
        B = E * h**3 / (12 * (1 - nu**2))
        return (B * (1 - nu))[:, None, None, None, None] * _SYM + (B * nu)[:, None, None, None, None] * _TRACE

    def shear(x):
        E, nu = moduli(x)
        return (E * h / (2 * (1 + nu)))[:, None, None] * _I2

    consts = EllipticityConstants(
        sigma0=lame.alpha0,
        sigma1=lame.alpha1,
        xi0=min(2 * lame.alpha0, lame.gamma0),
        xi1=2 * lame.alpha1,
    )
    return PlateMaterial(bending, shear, h, rho0, lipschitz_bound=lame.alpha1,
                         constants=consts, lame=lame, kind="isotropic")


def _voigt_to_tensor(p11, p22, p12, p66, p16=0.0, p26=0.0):
    """Fourth-order tensor with minor and major symmetry from Voigt entries."""
    P = np.zeros((2, 2, 2, 2))
    voigt = {(0, 0): 0, (1, 1): 1, (0, 1): 2, (1, 0): 2}
    C = np.array([[p11, p12, p16], [p12, p22, p26], [p16, p26, p66]])
    for (a, b), i in voigt.items():
        for (c, d), j in voigt.items():
            P[a, b, c, d] = C[i, j]
    return P


def _tensor_constants(P, S, h):
    """Exact ellipticity constants of constant P and S."""
    # orthonormal basis of symmetric matrices
    basis = [np.array([[1.0, 0], [0, 0]]), np.array([[0, 0], [0, 1.0]]),
             np.array([[0, 1.0], [1.0, 0]]) / np.sqrt(2)]
    G = np.array([[np.einsum("ab,abcd,cd->", Ei, P, Ej) for Ej in basis] for Ei in basis])
    ev = np.linalg.eigvalsh(G) * 12 / h**3
    es = np.linalg.eigvalsh(S) / h
    return EllipticityConstants(float(es[0]), float(es[-1]), float(ev[0]), float(ev[-1]))


def orthotropic_plate(E1, E2, nu12, G12, h, rho0=1.0, G13=None, G23=None):
    """Orthotropic plate (material axes = coordinate axes) from plane-stress moduli."""
    G13 = G12 if G13 is None else G13
    G23 = G12 if G23 is None else G23
    nu21 = nu12 * E2 / E1
    den = 1 - nu12 * nu21
    if min(E1, E2, G12, G13, G23) <= 0 or den <= 0:
        raise MaterialError("orthotropic moduli are not positive definite")
    P = h**3 / 12 * _voigt_to_tensor(E1 / den, E2 / den, nu12 * E2 / den, G12)
    S = h * np.diag([G13, G23])
    params = dict(E1=E1, E2=E2, nu12=nu12, G12=G12, G13=G13, G23=G23, constant=True)
    return _constant_material(P, S, h, rho0, "orthotropic", params, _tensor_constants(P, S, h))


def tabulated_plate(P, S, h, rho0=1.0, constants=None):
    """Constant anisotropic plate from explicit tensors.

    ``constants`` must be declared by the caller to use ellipticity based
    features; they are verified by sampling, never trusted.
    """
    P = np.asarray(P, dtype=float).reshape(2, 2, 2, 2)
    S = np.asarray(S, dtype=float).reshape(2, 2)
    return _constant_material(P, S, h, rho0, "tabulated", {"constant": True}, constants)


def _constant_material(P, S, h, rho0, kind, params, constants):
    P = np.array(P)
    S = np.array(S)

    def bending(x):
        return np.broadcast_to(P, (_points(x).shape[0], 2, 2, 2, 2)).copy()

    def shear(x):
        return np.broadcast_to(S, (_points(x).shape[0], 2, 2)).copy()

    return PlateMaterial(bending, shear, h, rho0, lipschitz_bound=0.0, constants=constants,
                         kind=kind, params=params)


def apply_bending(material, point, A):
    """(P A)_ab = P_abcd A_cd at one point or a batch of points."""
    pts = _points(point)
    P = material.bending(pts)
    A = np.asarray(A, dtype=float)
    out = np.einsum("nabcd,...cd->n...ab", P, A)
    return out[0] if np.asarray(point).ndim == 1 else out


def ellipticity_constants(material):
    if material.kind == "isotropic":
        lame = material.lame
        return EllipticityConstants(lame.alpha0, lame.alpha1,
                                    min(2 * lame.alpha0, lame.gamma0), 2 * lame.alpha1)
    if material.constants is None:
        raise MaterialError("anisotropic material without declared ellipticity constants")
    return material.constants


def _random_points(rng, n, bbox):
    lo = np.array(bbox[0], dtype=float)
    hi = np.array(bbox[1], dtype=float)
    return lo + (hi - lo) * rng.random((n, 2))


@dataclass
class EllipticityReport:
    passed: bool
    worst_lower_slack: float
    worst_upper_slack: float
    shear_passed: bool
    n_samples: int


def verify_ellipticity(material, trials=1000, seed=0, slack=1e-10, bbox=((-1, -1), (1, 1))):
    """Sample both convexity bounds on random points and matrices.

    A bound passes when violated by at most ``slack`` relative to the bound.
    """
    c = ellipticity_constants(material)
    rng = np.random.default_rng(seed)
    x = _random_points(rng, trials, bbox)
    A = rng.standard_normal((trials, 2, 2))
    P = material.bending(x)
    quad = np.einsum("nabcd,ncd,nab->n", P, A, A)
    Ahat = 0.5 * (A + A.transpose(0, 2, 1))
    nrm = (Ahat**2).sum(axis=(1, 2))
    k = material.h**3 / 12
    lower = quad - k * c.xi0 * nrm
    upper = k * c.xi1 * nrm - quad
    scale = k * c.xi1 * nrm + 1e-300
    lo_slack = float((lower / scale).min())
    up_slack = float((upper / scale).min())
    v = rng.standard_normal((trials, 2))
    S = material.shear(x)
    sq = np.einsum("nab,na,nb->n", S, v, v)
    vv = (v**2).sum(1)
    h = material.h
    sh_ok = bool(np.all(sq >= h * c.sigma0 * vv * (1 - slack)) and np.all(sq <= h * c.sigma1 * vv * (1 + slack)))
    return EllipticityReport(lo_slack >= -slack and up_slack >= -slack, lo_slack, up_slack, sh_ok, trials)


@dataclass
class SymmetryReport:
    passed: bool
    checks: dict
    first_violation: Optional[str] = None

    def as_dict(self):
        return {"passed": self.passed, "checks": dict(self.checks),
                "first_violation": self.first_violation}


def check_tensor_symmetries(material, trials=100, seed=0, tol=1e-12, bbox=((-1, -1), (1, 1))):
    """Sample S = S^T, the index symmetries of P and the equivalent forms.

    All errors are measured relative to the magnitude of the tensor.
    """
    rng = np.random.default_rng(seed)
    x = _random_points(rng, trials, bbox)
    P = material.bending(x)
    S = material.shear(x)
    A = rng.standard_normal((trials, 2, 2))
    B = rng.standard_normal((trials, 2, 2))
    pscale = np.abs(P).max() + 1e-300
    sscale = np.abs(S).max() + 1e-300
    PA = np.einsum("nabcd,ncd->nab", P, A)
    PB = np.einsum("nabcd,ncd->nab", P, B)
    Ahat = 0.5 * (A + A.transpose(0, 2, 1))
    PAhat = np.einsum("nabcd,ncd->nab", P, Ahat)
    mscale = pscale * np.abs(A).max() * np.abs(B).max()
    errs = {
        "S_symmetric": np.abs(S - S.transpose(0, 2, 1)) / sscale,
        "P_minor_left": np.abs(P - P.transpose(0, 2, 1, 3, 4)) / pscale,
        "P_minor_right": np.abs(P - P.transpose(0, 1, 2, 4, 3)) / pscale,
        "P_major": np.abs(P - P.transpose(0, 3, 4, 1, 2)) / pscale,
        "PA_symmetric": np.abs(PA - PA.transpose(0, 2, 1)) / (pscale * np.abs(A).max()),
        "PA_equals_PAhat": np.abs(PA - PAhat) / (pscale * np.abs(A).max()),
        "PA_dot_B_equals_PB_dot_A": np.abs((PA * B).sum((1, 2)) - (PB * A).sum((1, 2))) / mscale,
    }
    checks, first = {}, None
    for name, e in errs.items():
        worst = float(e.max())
        checks[name] = {"max_rel_error": worst, "passed": worst <= tol}
        if worst > tol and first is None:
            n = int(np.unravel_index(np.argmax(e), e.shape)[0])
            first = f"{name}: rel. error {worst:.3e} at x = {x[n].tolist()}"
    return SymmetryReport(all(c["passed"] for c in checks.values()), checks, first)


def symmetric_spectrum(material, point):
    """Eigenvalues of P restricted to symmetric matrices at one point."""
    P = material.bending(_points(point))[0]
    basis = [np.array([[1.0, 0], [0, 0]]), np.array([[0, 0], [0, 1.0]]),
             np.array([[0, 1.0], [1.0, 0]]) / np.sqrt(2)]
    G = np.array([[np.einsum("ab,abcd,cd->", Ei, P, Ej) for Ej in basis] for Ei in basis])
    return np.linalg.eigvalsh(G)
