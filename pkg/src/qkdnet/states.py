"""Two-qubit polarization states and the passive BBM92 analyzer POVM.

Basis order throughout is ``HH, HV, VH, VV`` (Alice first).
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DomainError, NumericError, ValidationError

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-12
POSITIVITY_FLOOR = -1e-10
IMAG_TRUNCATION = 1e-9


class Outcome(enum.IntEnum):
    H = 0
    V = 1
    D = 2
    A = 3

    @classmethod
    def parse(cls, value) -> "Outcome":
        if isinstance(value, cls):
            return value
        if isinstance(value, str):
            return cls[value.upper()]
        return cls(int(value))


OUTCOMES = tuple(Outcome)

_SY = np.array([[0, -1j], [1j, 0]])
_SYSY = np.kron(_SY, _SY)

_KET = {
    Outcome.H: np.array([1.0, 0.0]),
    Outcome.V: np.array([0.0, 1.0]),
    Outcome.D: np.array([1.0, 1.0]) / np.sqrt(2),
    Outcome.A: np.array([1.0, -1.0]) / np.sqrt(2),
}

PSI_PLUS = np.array([0, 1, 1, 0], dtype=complex) / np.sqrt(2)


@dataclass(frozen=True, eq=False)
class TwoQubitState:
    """Validated 4x4 density matrix. The stored array is read-only."""

    rho: np.ndarray

    def __post_init__(self):
        rho = np.array(self.rho, dtype=complex)
        if rho.shape != (4, 4):
            raise ValidationError(f"density matrix must be 4x4, got shape {rho.shape}")
        herm = np.max(np.abs(rho - rho.conj().T))
        if herm > HERMITIAN_TOL:
            raise ValidationError(f"matrix is not Hermitian (max deviation {herm:.3g})")
        tr = np.trace(rho).real
        if abs(tr - 1) > TRACE_TOL:
            raise ValidationError(f"trace is {tr!r}, expected 1")
        min_eig = np.linalg.eigvalsh((rho + rho.conj().T) / 2).min()
        if min_eig < POSITIVITY_FLOOR:
            raise ValidationError(f"matrix is not positive semidefinite (min eigenvalue {min_eig:.3g})")
        rho.setflags(write=False)
        object.__setattr__(self, "rho", rho)

    def __eq__(self, other):
        return isinstance(other, TwoQubitState) and np.array_equal(self.rho, other.rho)

    def __hash__(self):
        return hash(self.rho.tobytes())


def _projector(ket: np.ndarray) -> np.ndarray:
    return np.outer(ket, ket.conj())


def make_psi_plus() -> TwoQubitState:
    return TwoQubitState(_projector(PSI_PLUS))


def make_colored_noise_state(visibility: float) -> TwoQubitState:
    """``V |Psi+><Psi+| + (1 - V)(|HV><HV| + |VH><VH|) / 2``."""
    if not 0 <= visibility <= 1:
        raise DomainError(f"visibility must lie in [0, 1], got {visibility}")
    noise = np.diag([0, 1, 1, 0]).astype(complex) / 2
    return TwoQubitState(visibility * _projector(PSI_PLUS) + (1 - visibility) * noise)


def make_werner_state(p: float) -> TwoQubitState:
    """``p |Psi+><Psi+| + (1 - p) I / 4``."""
    if not 0 <= p <= 1:
        raise DomainError(f"Werner weight must lie in [0, 1], got {p}")
    return TwoQubitState(p * _projector(PSI_PLUS) + (1 - p) * np.eye(4) / 4)


def visibility_for_fidelity(fidelity: float) -> float:
    """Colored-noise visibility giving the requested fidelity to Psi+."""
    v = 2 * fidelity - 1
    if not 0 <= v <= 1:
        raise DomainError(f"fidelity {fidelity} is not reachable by the colored-noise family")
    return v


def fidelity_to_psi_plus(state: TwoQubitState) -> float:
    return float(np.real(PSI_PLUS.conj() @ state.rho @ PSI_PLUS))


def concurrence(state: TwoQubitState) -> float:
    """Wootters concurrence from the spectrum of ``rho (sy x sy) rho* (sy x sy)``."""
    rho = state.rho
    r = rho @ _SYSY @ rho.conj() @ _SYSY
    try:
        ev = np.linalg.eigvals(r)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"eigenvalue solver failed on rho={rho.tolist()!r}: {exc}") from exc
    if np.max(np.abs(ev.imag)) > IMAG_TRUNCATION:
        raise NumericError(
            f"non-real eigenvalues {ev!r} in concurrence product matrix (limit {IMAG_TRUNCATION})"
        )
    lam = np.sqrt(np.clip(ev.real, 0, None))
    lam = np.sort(lam)[::-1]
    return float(max(0.0, lam[0] - lam[1] - lam[2] - lam[3]))


def tangle(state: TwoQubitState) -> float:
    return concurrence(state) ** 2


def analyzer_ket(outcome: Outcome, misalignment_rad: float = 0.0) -> np.ndarray:
    """Single-photon analyzer state, optionally rotated in the linear-polarization plane."""
    c, s = np.cos(misalignment_rad), np.sin(misalignment_rad)
    rot = np.array([[c, -s], [s, c]])
    return rot @ _KET[Outcome.parse(outcome)]


def povm_element(outcome: Outcome, misalignment_rad: float = 0.0) -> np.ndarray:
    """``(1/2)|x><x|``: the 1/2 is the passive 50/50 basis choice."""
    return 0.5 * _projector(analyzer_ket(outcome, misalignment_rad))


def joint_probability(state: TwoQubitState, a, b, misalignment_a: float = 0.0,
                      misalignment_b: float = 0.0) -> float:
    """``Tr[rho (M_a x M_b)]`` for one detected pair. Angles in radians."""
    m = np.kron(povm_element(a, misalignment_a), povm_element(b, misalignment_b))
    return float(np.real(np.trace(state.rho @ m)))


def joint_distribution(state: TwoQubitState, misalignment_a: float = 0.0,
                       misalignment_b: float = 0.0) -> np.ndarray:
    """4x4 array ``P[a, b]`` over outcomes in H, V, D, A order."""
    ma = [povm_element(o, misalignment_a) for o in OUTCOMES]
    mb = [povm_element(o, misalignment_b) for o in OUTCOMES]
    p = np.empty((4, 4))
    for i, x in enumerate(ma):
        for j, y in enumerate(mb):
            p[i, j] = np.real(np.trace(state.rho @ np.kron(x, y)))
    return p


def intrinsic_qber(state: TwoQubitState) -> tuple:
    """Error fractions ``(e_H, e_D)`` a perfect, noiseless link would see."""
    p = joint_distribution(state)
    h, v, d, a = OUTCOMES
    n_h = p[h, h] + p[v, v] + p[h, v] + p[v, h]
    n_d = p[d, d] + p[a, a] + p[d, a] + p[a, d]
    e_h = (p[h, h] + p[v, v]) / n_h if n_h > 0 else float("nan")
    e_d = (p[d, a] + p[a, d]) / n_d if n_d > 0 else float("nan")
    return float(e_h), float(e_d)


def load_state(path) -> TwoQubitState:
    """Read a state from a text file of 16 complex entries, row-major.

    Entries may be separated by whitespace or commas and use Python complex
    syntax (``0.5``, ``0.5+0j``, ``-0.25j``). Lines starting with ``#`` are
    ignored.
    """
    tokens = []
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0]
        tokens.extend(t for t in line.replace(",", " ").split() if t)
    if len(tokens) != 16:
        raise ValidationError(f"{path}: expected 16 matrix entries, found {len(tokens)}")
    try:
        values = [complex(t.replace("i", "j")) for t in tokens]
    except ValueError as exc:
        raise ValidationError(f"{path}: {exc}") from exc
    return TwoQubitState(np.array(values).reshape(4, 4))


def format_state(state: TwoQubitState) -> str:
    rows = []
    for row in state.rho:
        rows.append(" ".join(f"{z.real:+.12g}{z.imag:+.12g}j" for z in row))
    return "# basis order: HH HV VH VV\n" + "\n".join(rows) + "\n"


def state_metrics(state: TwoQubitState) -> dict:
    e_h, e_d = intrinsic_qber(state)
    return {
        "fidelity_psi_plus": fidelity_to_psi_plus(state),
        "concurrence": concurrence(state),
        "tangle": tangle(state),
        "intrinsic_qber_h": e_h,
        "intrinsic_qber_d": e_d,
    }
