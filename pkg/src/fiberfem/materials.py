"""Strain-energy laws with stress and consistent tangent at material points.

All constitutive evaluations are batched over an arbitrary leading axis of
quadrature points. Units are kPa / mm throughout; 1 mmHg = 0.133322 kPa.

Energies follow the volumetric/isochoric split Psi = U(J) + Psibar(Cbar),
with U(J) = kappa/2 * Theta(J)^2 reported separately so the perturbed
two-field functional can be formed. Anisotropic terms are evaluated either
on the split tensor Cbar ("AS") or on the unsplit C ("WAS").
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, MaterialError, MaterialOverflowError
from .tensors import (
    EYE3,
    ddot22,
    dev_ref,
    dyad,
    odot,
    outer,
    sym_outer,
)

MMHG_TO_KPA = 0.133322

# Fung-type exponents are clamped here; beyond it the law signals overflow
# instead of returning inf (aggressive Newton trial steps hit this).
EXP_GUARD = 700.0


def _guarded_exp(arg, law, invariants):
    amax = float(np.max(arg)) if np.size(arg) else 0.0
    if amax > EXP_GUARD or not np.isfinite(amax):
        worst = {k: float(np.max(v)) for k, v in invariants.items()}
        raise MaterialOverflowError(law, amax, worst)
    return np.exp(arg)


@dataclass(frozen=True)
class Kinematics:
    """Deformation measures derived from F; det(Cbar) = 1 by construction."""

    F: np.ndarray
    J: np.ndarray
    C: np.ndarray
    Cinv: np.ndarray
    Cbar: np.ndarray

    @classmethod
    def from_F(cls, F):
        F = np.asarray(F, dtype=float)
        J = np.linalg.det(F)
        if np.any(J <= 0.0):
            raise MaterialError(f"non-positive Jacobian (min J = {J.min():.4g})")
        C = np.einsum("...ki,...kj->...ij", F, F)
        Cinv = np.linalg.inv(C)
        Cbar = J[..., None, None] ** (-2.0 / 3.0) * C
        return cls(F=F, J=J, C=C, Cinv=Cinv, Cbar=Cbar)

    @property
    def Ebar(self):
        return 0.5 * (self.Cbar - EYE3)


@dataclass(frozen=True)
class VolumetricLaw:
    """U(J) = kappa/2 * Theta(J)^2 with Theta = J-1 or ln J.

    `inverse_kappa_zero` marks the fully incompressible limit 1/kappa = 0;
    kappa is then ignored by the compliance form c(p,q).
    """

    theta_kind: str = "J-1"
    kappa: float = 5000.0
    inverse_kappa_zero: bool = False

    def __post_init__(self):
        if self.theta_kind not in ("J-1", "lnJ"):
            raise ConfigurationError(f"unknown volumetric kind {self.theta_kind!r}")
        if self.kappa < 0.0:
            raise MaterialError("bulk modulus must be nonnegative")

    @property
    def inv_kappa(self):
        return 0.0 if self.inverse_kappa_zero else 1.0 / self.kappa

    def theta(self, J):
        return J - 1.0 if self.theta_kind == "J-1" else np.log(J)

    def dtheta(self, J):
        return np.ones_like(J) if self.theta_kind == "J-1" else 1.0 / J

    def pi(self, J):
        """pi(J) = J Theta'(J)."""
        return J if self.theta_kind == "J-1" else np.ones_like(J)

    def k(self, J):
        """k(J) = J^2 Theta''(J) + J Theta'(J)."""
        return J if self.theta_kind == "J-1" else np.zeros_like(J)

    def energy(self, J):
        return 0.5 * self.kappa * self.theta(J) ** 2


@dataclass(frozen=True)
class StressState:
    """Second Piola-Kirchhoff pieces and tangents at material points.

    `S_vol_dir` is pi(J) C^{-1}; multiplied by the pressure it gives the
    volumetric stress. Tangents use the convention dS = C4 : (dC/2).
    """

    S_isc: np.ndarray
    S_vol_dir: np.ndarray
    S_a: np.ndarray
    C_isc: np.ndarray
    C_vol: np.ndarray
    C_act: np.ndarray
    active: bool

    def total_stress(self, pressure, active_scale=1.0):
        S = self.S_isc + pressure[..., None, None] * self.S_vol_dir
        if self.active:
            S = S + active_scale * self.S_a
        return S


def guccione_Q(Ebar, triad, b_f, b_t, b_fs):
    """Quadratic fiber-frame form of the transversely isotropic exponent.

    Q = b_f (f.Ef)^2 + b_t [(s.Es)^2 + (n.En)^2 + 2 (s.En)^2]
        + 2 b_fs [(f.Es)^2 + (f.En)^2]
    """
    f0, s0, n0 = (np.asarray(triad)[..., i, :] for i in range(3))
    Ebar = np.asarray(Ebar, dtype=float)

    def q(v, w):
        return np.einsum("...i,...ij,...j->...", v, Ebar, w)

    return (
        b_f * q(f0, f0) ** 2
        + b_t * (q(s0, s0) ** 2 + q(n0, n0) ** 2 + 2.0 * q(s0, n0) ** 2)
        + 2.0 * b_fs * (q(f0, s0) ** 2 + q(f0, n0) ** 2)
    )


def _isochoric_pushforward(kin, Sbar, Cbar4):
    """Appendix-style map of (Sbar, Cbar4) on Cbar to (S_isc, C_isc) on C.

    S_isc = J^{-2/3} Dev(Sbar)
    C_isc = J^{-4/3} P Cbar4 P^T + (2/3) J^{-2/3} tr(C Sbar) Ptil
            - (4/3) S_isc (x)_s C^{-1}
    """
    J, C, Cinv = kin.J, kin.C, kin.Cinv
    Jm23 = J ** (-2.0 / 3.0)
    S_isc = Jm23[..., None, None] * dev_ref(Sbar, C, Cinv)

    W = np.einsum("...mn,...mnkl->...kl", C, Cbar4)
    Y = Cbar4 - outer(Cinv, W) / 3.0
    V = np.einsum("...ijmn,...mn->...ij", Y, C)
    PCP = Y - outer(V, Cinv) / 3.0

    Ptil = odot(Cinv, Cinv) - outer(Cinv, Cinv) / 3.0
    trCS = ddot22(C, Sbar)
    C_isc = (
        (Jm23**2)[..., None, None, None, None] * PCP
        + (2.0 / 3.0) * (Jm23 * trCS)[..., None, None, None, None] * Ptil
        - (4.0 / 3.0) * sym_outer(S_isc, Cinv)
    )
    return S_isc, C_isc


def active_stress_tensor(kin, f0, kappa_f):
    """Dispersed active stress direction and tangent (per unit scalar tension).

    S_a/s = kf/(1-2kf) C^{-1} + (1-3kf)/(1-2kf) (f0.C f0)^{-1} f0 (x) f0
    """
    C, Cinv = kin.C, kin.Cinv
    c1 = kappa_f / (1.0 - 2.0 * kappa_f)
    c2 = (1.0 - 3.0 * kappa_f) / (1.0 - 2.0 * kappa_f)
    Mf = dyad(f0)
    I4 = ddot22(C, Mf)
    S_dir = c1 * Cinv + c2 * (Mf / I4[..., None, None])
    C_dir = -2.0 * c1 * odot(Cinv, Cinv) - 2.0 * c2 * (
        outer(Mf, Mf) / (I4**2)[..., None, None, None, None]
    )
    return S_dir, C_dir


class MaterialModel:
    """Base class; subclasses provide the non-volumetric energy derivatives.

    `split` is "AS" (anisotropy on Cbar) or "WAS" (anisotropy on unsplit C);
    isotropic parts always act on Cbar.
    """

    split = "AS"
    active_dispersion = 0.0  # kappa_f reused by the active stress tensor

    def __init__(self, volumetric):
        self.volumetric = volumetric

    # -- subclass hooks -------------------------------------------------
    def _iso_parts(self, Cbar, frames, order):
        """(psi, S=2 dpsi/dA, C4=4 d2psi/dA2) of the isotropic part on Cbar."""
        raise NotImplementedError

    def _aniso_parts(self, A, frames, order):
        """Same for the anisotropic part, on A = Cbar (AS) or C (WAS)."""
        raise NotImplementedError

    # -- public API ------------------------------------------------------
    def energy(self, kin, frames):
        """Non-volumetric strain energy (kPa); U(J) is reported separately."""
        psi_iso, _, _ = self._iso_parts(kin.Cbar, frames, order=0)
        arg = kin.Cbar if self.split == "AS" else kin.C
        psi_a, _, _ = self._aniso_parts(arg, frames, order=0)
        return psi_iso + psi_a

    def evaluate(self, kin, frames, active_scalar=0.0):
        """Stress and tangent pieces at material points.

        The returned state is pressure-free: volumetric stress enters as
        p * S_vol_dir and p * C_vol; the active tensor is scaled by
        `active_scalar` already.
        """
        _, Sb_i, Cb_i = self._iso_parts(kin.Cbar, frames, order=2)
        if self.split == "AS":
            _, Sb_a, Cb_a = self._aniso_parts(kin.Cbar, frames, order=2)
            S_isc, C_isc = _isochoric_pushforward(kin, Sb_i + Sb_a, Cb_i + Cb_a)
        else:
            S_isc, C_isc = _isochoric_pushforward(kin, Sb_i, Cb_i)
            _, S_u, C_u = self._aniso_parts(kin.C, frames, order=2)
            S_isc = S_isc + S_u
            C_isc = C_isc + C_u

        vol = self.volumetric
        piJ = vol.pi(kin.J)[..., None, None]
        kJ = vol.k(kin.J)[..., None, None, None, None]
        S_vol_dir = piJ * kin.Cinv
        C_vol = kJ * outer(kin.Cinv, kin.Cinv) - 2.0 * piJ[..., None, None] * odot(
            kin.Cinv, kin.Cinv
        )

        active = bool(np.any(active_scalar != 0.0))
        if active:
            f0 = np.asarray(frames)[..., 0, :]
            S_dir, C_dir = active_stress_tensor(kin, f0, self.active_dispersion)
            s = np.asarray(active_scalar, dtype=float)[..., None, None]
            S_a = s * S_dir
            C_act = s[..., None, None] * C_dir
        else:
            shape = kin.C.shape
            S_a = np.zeros(shape)
            C_act = np.zeros(shape + (3, 3))
        return StressState(
            S_isc=S_isc,
            S_vol_dir=S_vol_dir,
            S_a=S_a,
            C_isc=C_isc,
            C_vol=C_vol,
            C_act=C_act,
            active=active,
        )


def _fung_family_terms(A, terms, law, order, clamp=False):
    """Sum of k1/(2 k2) (exp(k2 (I-1)^2) - 1) contributions.

    Each term is (invariant, dI/dA tensor, k1, k2, name); with `clamp` the
    invariant is cut off at 1 (one-sided tangent, zero below).
    """
    psi = 0.0
    S = 0.0
    C4 = 0.0
    invariants = {name: I for I, M, k1, k2, name in terms}
    for I, M, k1, k2, name in terms:
        if k1 == 0.0:
            continue
        x = np.maximum(I, 1.0) if clamp else I
        g = x - 1.0
        e = _guarded_exp(k2 * g * g, law, invariants)
        psi = psi + k1 / (2.0 * k2) * (e - 1.0)
        if order >= 1:
            S = S + (2.0 * k1 * g * e)[..., None, None] * M
        if order >= 2:
            C4 = C4 + (4.0 * k1 * e * (1.0 + 2.0 * k2 * g * g))[
                ..., None, None, None, None
            ] * outer(M, M)
    return psi, S, C4


def _shear_term(A, f0, s0, a_fs, b_fs, law, order):
    """a_fs/(2 b_fs) (exp(b_fs I8^2) - 1) with I8 = f0 . A s0."""
    M8 = dyad(f0, s0)
    I8 = ddot22(A, M8)
    e = _guarded_exp(b_fs * I8 * I8, law, {"I8fs": I8})
    psi = a_fs / (2.0 * b_fs) * (e - 1.0)
    S = (2.0 * a_fs * I8 * e)[..., None, None] * M8 if order >= 1 else 0.0
    C4 = (
        (4.0 * a_fs * e * (1.0 + 2.0 * b_fs * I8 * I8))[..., None, None, None, None]
        * outer(M8, M8)
        if order >= 2
        else 0.0
    )
    return psi, S, C4


class GenericFung(MaterialModel):
    """Two-fiber-family Fung exponential with neo-Hookean ground matrix.

    psi_iso = mu/2 (I1 - 3),
    psi_aniso = k1/(2 k2) sum_{i=4,6} (exp(k2 (I_i - 1)^2) - 1)
    with I4 = f0.A f0 and I6 = s0.A s0. No compression cutoff.
    """

    def __init__(self, mu=10.0, k1=500.0, k2=2.0, split="AS", volumetric=None):
        super().__init__(volumetric or VolumetricLaw("J-1", kappa=5000.0))
        if split not in ("AS", "WAS"):
            raise ConfigurationError(f"unknown anisotropy split {split!r}")
        if min(mu, k1) < 0.0 or k2 <= 0.0:
            raise MaterialError("GenericFung parameters must be nonnegative, k2 > 0")
        self.mu, self.k1, self.k2 = float(mu), float(k1), float(k2)
        self.split = split

    @property
    def variant(self):
        return f"GenericFung{self.split}"

    def _iso_parts(self, Cbar, frames, order):
        I1 = np.trace(Cbar, axis1=-2, axis2=-1)
        psi = 0.5 * self.mu * (I1 - 3.0)
        S = self.mu * np.broadcast_to(EYE3, Cbar.shape) if order >= 1 else 0.0
        C4 = np.zeros(Cbar.shape + (3, 3)) if order >= 2 else 0.0
        return psi, S, C4

    def _aniso_parts(self, A, frames, order):
        f0 = np.asarray(frames)[..., 0, :]
        s0 = np.asarray(frames)[..., 1, :]
        Mf, Ms = dyad(f0), dyad(s0)
        terms = [
            (ddot22(A, Mf), Mf, self.k1, self.k2, "I4f"),
            (ddot22(A, Ms), Ms, self.k1, self.k2, "I6s"),
        ]
        return _fung_family_terms(A, terms, self.variant, order)


class HolzapfelOgden(MaterialModel):
    """Orthotropic exponential law with fiber/sheet-normal families and a
    shear interaction term; compressed-fiber contributions are excluded via
    max(I4, 1) with a one-sided tangent.
    """

    def __init__(
        self,
        a=0.809,
        b=7.474,
        a_f=1.911,
        b_f=22.063,
        a_n=0.227,
        b_n=34.802,
        a_fs=0.547,
        b_fs=5.691,
        split="AS",
        volumetric=None,
    ):
        super().__init__(volumetric or VolumetricLaw("lnJ", kappa=1000.0))
        if split not in ("AS", "WAS"):
            raise ConfigurationError(f"unknown anisotropy split {split!r}")
        params = dict(a=a, b=b, a_f=a_f, b_f=b_f, a_n=a_n, b_n=b_n, a_fs=a_fs, b_fs=b_fs)
        if any(v < 0.0 for v in params.values()):
            raise MaterialError("HolzapfelOgden parameters must be nonnegative")
        for k, v in params.items():
            setattr(self, k, float(v))
        self.split = split

    variant = "HolzapfelOgden"

    def _iso_parts(self, Cbar, frames, order):
        I1 = np.trace(Cbar, axis1=-2, axis2=-1)
        e = _guarded_exp(self.b * (I1 - 3.0), self.variant, {"I1": I1})
        psi = self.a / (2.0 * self.b) * (e - 1.0)
        S = (self.a * e)[..., None, None] * np.broadcast_to(EYE3, Cbar.shape)
        C4 = (2.0 * self.a * self.b * e)[..., None, None, None, None] * outer(
            np.broadcast_to(EYE3, Cbar.shape), np.broadcast_to(EYE3, Cbar.shape)
        )
        return psi, (S if order >= 1 else 0.0), (C4 if order >= 2 else 0.0)

    def _aniso_parts(self, A, frames, order):
        f0 = np.asarray(frames)[..., 0, :]
        s0 = np.asarray(frames)[..., 1, :]
        n0 = np.asarray(frames)[..., 2, :]
        Mf, Mn = dyad(f0), dyad(n0)
        terms = [
            (ddot22(A, Mf), Mf, self.a_f, self.b_f, "I4f"),
            (ddot22(A, Mn), Mn, self.a_n, self.b_n, "I4n"),
        ]
        psi, S, C4 = _fung_family_terms(A, terms, self.variant, order, clamp=True)
        ps, Ss, Cs = _shear_term(A, f0, s0, self.a_fs, self.b_fs, self.variant, order)
        return psi + ps, (S + Ss if order >= 1 else 0.0), (C4 + Cs if order >= 2 else 0.0)


class GultekinDispersion(MaterialModel):
    """Orthotropic exponential law with dispersed fourth invariants
    I*_4i = kappa_i I1 + (1 - 3 kappa_i) I_4i for i in {f, s}.
    """

    def __init__(
        self,
        a=0.4,
        b=6.55,
        a_f=3.05,
        b_f=29.05,
        a_s=1.25,
        b_s=36.65,
        a_fs=0.15,
        b_fs=6.28,
        kappa_f=0.08,
        kappa_s=0.09,
        split="AS",
        volumetric=None,
    ):
        super().__init__(volumetric or VolumetricLaw("lnJ", kappa=650.0))
        if split not in ("AS", "WAS"):
            raise ConfigurationError(f"unknown anisotropy split {split!r}")
        if not (0.0 <= kappa_f <= 1.0 / 3.0 and 0.0 <= kappa_s <= 1.0 / 3.0):
            raise MaterialError("dispersion parameters must lie in [0, 1/3]")
        params = dict(a=a, b=b, a_f=a_f, b_f=b_f, a_s=a_s, b_s=b_s, a_fs=a_fs, b_fs=b_fs)
        if any(v < 0.0 for v in params.values()):
            raise MaterialError("GultekinDispersion parameters must be nonnegative")
        for k, v in params.items():
            setattr(self, k, float(v))
        self.kappa_f, self.kappa_s = float(kappa_f), float(kappa_s)
        self.split = split

    variant = "GultekinDispersion"

    @property
    def active_dispersion(self):
        return self.kappa_f

    _iso_parts = HolzapfelOgden._iso_parts

    def _aniso_parts(self, A, frames, order):
        f0 = np.asarray(frames)[..., 0, :]
        s0 = np.asarray(frames)[..., 1, :]
        I1 = np.trace(A, axis1=-2, axis2=-1)
        eye = np.broadcast_to(EYE3, A.shape)
        terms = []
        for v0, kap, a_i, b_i, name in (
            (f0, self.kappa_f, self.a_f, self.b_f, "I4f*"),
            (s0, self.kappa_s, self.a_s, self.b_s, "I4s*"),
        ):
            M = dyad(v0)
            I_star = kap * I1 + (1.0 - 3.0 * kap) * ddot22(A, M)
            M_star = kap * eye + (1.0 - 3.0 * kap) * M
            terms.append((I_star, M_star, a_i, b_i, name))
        psi, S, C4 = _fung_family_terms(A, terms, self.variant, order)
        ps, Ss, Cs = _shear_term(A, f0, s0, self.a_fs, self.b_fs, self.variant, order)
        return psi + ps, (S + Ss if order >= 1 else 0.0), (C4 + Cs if order >= 2 else 0.0)


class Guccione(MaterialModel):
    """Transversely isotropic exponential law a/2 (exp Q - 1) on the isochoric
    Green-Lagrange strain Ebar = (Cbar - I)/2.
    """

    split = "AS"

    def __init__(self, a=2.0, b_f=8.0, b_t=2.0, b_fs=4.0, volumetric=None):
        super().__init__(volumetric or VolumetricLaw("lnJ", kappa=1000.0))
        if a < 0.0:
            raise MaterialError("Guccione scaling parameter must be nonnegative")
        self.a, self.b_f, self.b_t, self.b_fs = float(a), float(b_f), float(b_t), float(b_fs)

    variant = "Guccione"

    def _structure_terms(self, frames):
        f0 = np.asarray(frames)[..., 0, :]
        s0 = np.asarray(frames)[..., 1, :]
        n0 = np.asarray(frames)[..., 2, :]
        return (
            (dyad(f0), self.b_f),
            (dyad(s0), self.b_t),
            (dyad(n0), self.b_t),
            (dyad(s0, n0), 2.0 * self.b_t),
            (dyad(f0, s0), 2.0 * self.b_fs),
            (dyad(f0, n0), 2.0 * self.b_fs),
        )

    def _iso_parts(self, Cbar, frames, order):
        Ebar = 0.5 * (Cbar - EYE3)
        terms = self._structure_terms(frames)
        Q = 0.0
        dQ = 0.0
        for M, c in terms:
            q = ddot22(Ebar, M)
            Q = Q + c * q * q
            if order >= 1:
                dQ = dQ + (2.0 * c * q)[..., None, None] * M
        eQ = _guarded_exp(Q, self.variant, {"Q": Q})
        psi = 0.5 * self.a * (eQ - 1.0)
        # S = 2 dpsi/dCbar = dpsi/dEbar, C4 = 4 d2psi/dCbar2 = d2psi/dEbar2
        S = 0.5 * self.a * eQ[..., None, None] * dQ if order >= 1 else 0.0
        if order >= 2:
            C4 = 0.5 * self.a * eQ[..., None, None, None, None] * outer(dQ, dQ)
            for M, c in terms:
                C4 = C4 + (self.a * c * eQ)[..., None, None, None, None] * outer(M, M)
        else:
            C4 = 0.0
        return psi, S, C4

    def _aniso_parts(self, A, frames, order):
        zero = np.zeros(A.shape[:-2])
        return zero, 0.0, 0.0


MATERIAL_VARIANTS = {
    "guccione": Guccione,
    "holzapfelogden": HolzapfelOgden,
    "gultekindispersion": GultekinDispersion,
    "genericfungas": lambda **kw: GenericFung(split="AS", **kw),
    "genericfungwas": lambda **kw: GenericFung(split="WAS", **kw),
}


def make_material(variant, volumetric=None, **params):
    """Instantiate a material by variant name (case-insensitive)."""
    key = variant.replace("_", "").replace("-", "").lower()
    if key not in MATERIAL_VARIANTS:
        raise ConfigurationError(
            f"unknown material variant {variant!r}; options: {sorted(MATERIAL_VARIANTS)}"
        )
    return MATERIAL_VARIANTS[key](volumetric=volumetric, **params)
