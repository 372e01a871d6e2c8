"""
ISALT – Informed Basis
Basis vectors (x, φ1, σξ/δ) taken from the terms of the EM, RK4 and SSBE
schemes. Every evaluation returns shape (..., p+1, d).
"""

from dataclasses import dataclass

import numpy as np

import config as cfg
from errors import ConfigError, SingularLinearization
from integrators import hrk4_phi1
from sde_systems import SdeSystem


class Family:
    IS_EM = "is-em"
    IS_RK4 = "is-rk4"
    IS_SSBE = "is-ssbe"

    ALL = (IS_EM, IS_RK4, IS_SSBE)


# (family, include_c0) pairs tried by default
DEFAULT_SETTINGS = (
    (Family.IS_EM, False),
    (Family.IS_RK4, False),
    (Family.IS_RK4, True),
    (Family.IS_SSBE, False),
    (Family.IS_SSBE, True),
)


@dataclass(frozen=True, eq=False)
class BasisFamily:
    family: str
    include_c0: bool
    delta: float
    system: SdeSystem

    def __post_init__(self):
        if self.family not in Family.ALL:
            raise ConfigError(f"unknown basis family {self.family!r}; expected one of {Family.ALL}")
        if not self.delta > 0:
            raise ConfigError(f"δ must be positive, got {self.delta}")

    @property
    def size(self) -> int:
        return 3 if self.include_c0 else 2

    @property
    def labels(self) -> tuple[str, ...]:
        return ("c0", "c1", "c2") if self.include_c0 else ("c1", "c2")

    @property
    def label(self) -> str:
        return f"{self.family}-{'c0' if self.include_c0 else 'noc0'}"

    def with_delta(self, delta: float) -> "BasisFamily":
        return BasisFamily(self.family, self.include_c0, delta, self.system)


def eval_basis(fam: BasisFamily, x, xi) -> np.ndarray:
    """Basis vectors at (x, ξ); raises SingularLinearization for IS-SSBE."""
    phi, ok = eval_basis_rows(fam, x, xi)
    if not np.all(ok):
        raise SingularLinearization(f"I - δ∇f is singular at {np.count_nonzero(~ok)} state(s)")
    return phi


def eval_basis_rows(fam: BasisFamily, x, xi):
    """Like eval_basis but reports per-row failures in a mask instead of raising."""
    x = np.asarray(x, dtype=float)
    system = fam.system
    forcing = system.noise(xi)
    ok = np.ones(x.shape[:-1], dtype=bool)
    if fam.family == Family.IS_EM:
        phi1 = system.drift(x)
    elif fam.family == Family.IS_RK4:
        phi1 = hrk4_phi1(system, x, forcing, fam.delta)
    else:
        phi1, ok = _phi1_ssbe_rows(system, x, fam.delta)
    terms = [phi1, forcing / fam.delta]
    if fam.include_c0:
        terms.insert(0, x)
    return np.stack(terms, axis=-2), ok


def phi1_ssbe(system: SdeSystem, x, delta: float) -> np.ndarray:
    """(I - δ∇f(x))⁻¹ f(x)."""
    y, ok = _phi1_ssbe_rows(system, np.asarray(x, dtype=float), delta)
    if not np.all(ok):
        raise SingularLinearization("I - δ∇f is numerically singular")
    return y


def _phi1_ssbe_rows(system: SdeSystem, x: np.ndarray, delta: float):
    if not delta > 0:
        raise ConfigError(f"δ must be positive, got {delta}")
    f = system.drift(x)
    J = np.eye(system.d) - delta * system.jacobian(x)
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        if system.d == 1:
            j = J[..., 0, 0]
            ok = np.isfinite(j) & (j != 0.0)
            return f / np.where(ok, j, 1.0)[..., None], ok
        finite = np.all(np.isfinite(J), axis=(-2, -1))
        safe = np.where(finite[..., None, None], J, np.eye(system.d))
        cond = np.linalg.cond(safe)
        ok = finite & (cond <= cfg.CONDITION_LIMIT)
        safe = np.where(ok[..., None, None], safe, np.eye(system.d))
        return np.linalg.solve(safe, f[..., None])[..., 0], ok


def plain_coefficients(fam: BasisFamily) -> np.ndarray:
    """d × (p+1) coefficients that turn the family back into its plain scheme."""
    row = [0.0, 1.0, 1.0] if fam.include_c0 else [1.0, 1.0]
    return np.tile(row, (fam.system.d, 1))
