"""Qutrit state and operator algebra in the fixed basis (|A>, |B>, |perp>).

States are complex numpy vectors of length 3, operators and density
matrices complex 3x3 arrays. Constructors return fresh arrays; nothing
here mutates its inputs.
"""
from __future__ import annotations

import math

import numpy as np

DIM = 3
IDX_A, IDX_B, IDX_PERP = 0, 1, 2

TOL_IDENTITY = 1e-12
TOL_PRECONDITION = 1e-10
TOL_NORM = 1e-9
TOL_ZERO_BRANCH = 1e-15


class PreconditionError(ValueError):
    """An operator or state failed a structural check (unitary, projector, ...)."""


class ZeroProbabilityBranch(ValueError):
    """Collapse was requested onto an outcome that cannot occur."""


def _finite(x, what):
    if not np.all(np.isfinite(x)):
        raise PreconditionError(f"{what} has non-finite entries")


def state(a, b=0.0, c=0.0, normalize: bool = False) -> np.ndarray:
    """Build a qutrit state from amplitudes (a, b, c), or from one length-3 sequence."""
    if np.ndim(a) == 1:
        vec = np.asarray(a, dtype=np.complex128).copy()
    else:
        vec = np.array([a, b, c], dtype=np.complex128)
    if vec.shape != (DIM,):
        raise PreconditionError(f"state must have 3 amplitudes, got shape {vec.shape}")
    _finite(vec, "state")
    if normalize:
        n = np.linalg.norm(vec)
        if n == 0.0:
            raise PreconditionError("cannot normalize the zero vector")
        vec /= n
    return check_state(vec)


def check_state(psi) -> np.ndarray:
    psi = np.asarray(psi, dtype=np.complex128)
    if psi.shape != (DIM,):
        raise PreconditionError(f"state must have shape (3,), got {psi.shape}")
    _finite(psi, "state")
    norm2 = float(np.vdot(psi, psi).real)
    if abs(norm2 - 1.0) > TOL_NORM:
        raise PreconditionError(f"state is not normalized (|psi|^2 = {norm2!r})")
    return psi


def basis(index: int) -> np.ndarray:
    v = np.zeros(DIM, dtype=np.complex128)
    v[index] = 1.0
    return v


KET_A = basis(IDX_A)
KET_B = basis(IDX_B)
KET_PERP = basis(IDX_PERP)
KET_A.flags.writeable = False
KET_B.flags.writeable = False
KET_PERP.flags.writeable = False


def projector(vec) -> np.ndarray:
    """Rank-1 projector |v><v| (v is normalized first)."""
    v = np.asarray(vec, dtype=np.complex128)
    n = np.linalg.norm(v)
    if n == 0.0:
        raise PreconditionError("cannot project onto the zero vector")
    v = v / n
    return np.outer(v, v.conj())


IDENTITY = np.eye(DIM, dtype=np.complex128)
M_A = projector(KET_A)
M_B = projector(KET_B)
M_PERP = IDENTITY - M_A - M_B
Z = M_A - M_B
for _m in (IDENTITY, M_A, M_B, M_PERP, Z):
    _m.flags.writeable = False


def is_hermitian(op, tol: float = TOL_PRECONDITION) -> bool:
    op = np.asarray(op)
    return bool(np.max(np.abs(op - op.conj().T)) <= tol)


def is_unitary(op, tol: float = TOL_PRECONDITION) -> bool:
    op = np.asarray(op)
    return bool(np.max(np.abs(op.conj().T @ op - IDENTITY)) <= tol)


def is_projector(op, tol: float = TOL_PRECONDITION) -> bool:
    op = np.asarray(op)
    return is_hermitian(op, tol) and bool(np.max(np.abs(op @ op - op)) <= tol)


def _check_operator(op, what="operator") -> np.ndarray:
    op = np.asarray(op, dtype=np.complex128)
    if op.shape != (DIM, DIM):
        raise PreconditionError(f"{what} must be 3x3, got {op.shape}")
    _finite(op, what)
    return op


def _check_projector(proj) -> np.ndarray:
    proj = _check_operator(proj, "projector")
    if not is_projector(proj):
        raise PreconditionError("operator is not an orthogonal projector")
    return proj


def _plane_rotation(i: int, j: int, angle: float) -> np.ndarray:
    if not math.isfinite(angle):
        raise PreconditionError(f"rotation angle must be finite, got {angle!r}")
    c, s = math.cos(angle), math.sin(angle)
    u = np.eye(DIM, dtype=np.complex128)
    u[i, i] = c
    u[i, j] = -s
    u[j, i] = s
    u[j, j] = c
    return u


def rotation_ab(angle: float) -> np.ndarray:
    """Rotation on span{|A>,|B>}; positive angles carry |A> toward |B>.

    The block is ``[[cos, -sin], [sin, cos]]`` in column order (A, B), with
    1 on |perp>.
    """
    return _plane_rotation(IDX_A, IDX_B, angle)


def rotation_a_perp(angle: float) -> np.ndarray:
    """Same block on the ordered pair (A, perp); positive angles carry |A> toward |perp>."""
    return _plane_rotation(IDX_A, IDX_PERP, angle)


def rotation_b_perp(angle: float) -> np.ndarray:
    """Same block on the ordered pair (B, perp)."""
    return _plane_rotation(IDX_B, IDX_PERP, angle)


def apply_unitary(psi, u) -> np.ndarray:
    psi = check_state(psi)
    u = _check_operator(u, "unitary")
    if not is_unitary(u):
        raise PreconditionError("operator is not unitary")
    return u @ psi


def born_probability(psi, proj) -> float:
    """<psi|P|psi>, clamped to [0, 1]."""
    psi = check_state(psi)
    proj = _check_projector(proj)
    p = float(np.vdot(psi, proj @ psi).real)
    return min(1.0, max(0.0, p))


def lueders_collapse(psi, proj) -> tuple[np.ndarray, float]:
    """Post-measurement state P|psi>/sqrt(p) and the outcome probability p."""
    p = born_probability(psi, proj)
    if p < TOL_ZERO_BRANCH:
        raise ZeroProbabilityBranch(f"outcome has probability {p!r}; cannot collapse onto it")
    post = proj @ np.asarray(psi, dtype=np.complex128)
    return post / np.linalg.norm(post), p


# -- density matrices ---------------------------------------------------------

TOL_DENSITY = 1e-12


def density(psi) -> np.ndarray:
    psi = check_state(psi)
    return np.outer(psi, psi.conj())


def maximally_mixed() -> np.ndarray:
    return IDENTITY / DIM


def check_density(rho) -> np.ndarray:
    """Validate Hermiticity, unit trace and positivity (eigvalsh on the 3x3)."""
    rho = _check_operator(rho, "density matrix")
    if not is_hermitian(rho, TOL_DENSITY):
        raise PreconditionError("density matrix is not Hermitian")
    tr = np.trace(rho)
    if abs(tr - 1.0) > TOL_DENSITY:
        raise PreconditionError(f"density matrix trace is {tr!r}, expected 1")
    lo = float(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min())
    if lo < -TOL_DENSITY:
        raise PreconditionError(f"density matrix has negative eigenvalue {lo!r}")
    return rho


def dephase_probe(rho, proj) -> np.ndarray:
    """Unrecorded binary probe: rho -> P rho P + (I-P) rho (I-P)."""
    rho = check_density(rho)
    proj = _check_projector(proj)
    comp = IDENTITY - proj
    out = proj @ rho @ proj + comp @ rho @ comp
    return 0.5 * (out + out.conj().T)


def expectation(rho_or_state, observable) -> float:
    """Tr(rho O) for a density matrix or <psi|O|psi> for a state vector."""
    obs = _check_operator(observable, "observable")
    if not is_hermitian(obs):
        raise PreconditionError("observable is not Hermitian")
    x = np.asarray(rho_or_state, dtype=np.complex128)
    if x.ndim == 1:
        x = check_state(x)
        val = np.vdot(x, obs @ x)
    else:
        x = check_density(x)
        val = np.trace(obs @ x)
    if abs(val.imag) > TOL_PRECONDITION:
        raise PreconditionError(f"expectation has imaginary part {val.imag!r}")
    return float(val.real)
