"""Single-qubit randomized benchmarking: Clifford group, sequences, a
density-matrix simulator with T1/T2 decoherence, and the decay fit.

The Clifford group is generated from the physical pulses
``{I, X90, -X90, Y90, -Y90, X180, Y180}``; each element keeps a decomposition
with the fewest non-identity pulses. Every non-identity pulse lasts ``tg``
and is followed by amplitude damping and pure dephasing over ``tg``.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy import optimize

from .errors import FitError

HILBERT_DIM = 2

_PAULI = {
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
}


def _rotation(axis: str, angle: float) -> np.ndarray:
    return math.cos(angle / 2) * np.eye(2) - 1j * math.sin(angle / 2) * _PAULI[axis]


GENERATORS: dict[str, np.ndarray] = {
    "I": np.eye(2, dtype=complex),
    "X90": _rotation("X", math.pi / 2),
    "-X90": _rotation("X", -math.pi / 2),
    "Y90": _rotation("Y", math.pi / 2),
    "-Y90": _rotation("Y", -math.pi / 2),
    "X180": _rotation("X", math.pi),
    "Y180": _rotation("Y", math.pi),
}


def phase_key(u: np.ndarray, decimals: int = 9) -> tuple:
    """Hashable key of a unitary, identical for matrices equal up to global phase."""
    flat = u.ravel()
    k = int(np.argmax(np.abs(flat) > 0.5))
    v = flat * (abs(flat[k]) / flat[k])
    v = np.round(v, decimals) + 0.0  # drop negative zeros
    return tuple(np.concatenate([v.real, v.imag]).tolist())


def equal_up_to_phase(u: np.ndarray, v: np.ndarray, atol: float = 1e-12) -> bool:
    overlap = abs(np.trace(u.conj().T @ v)) / u.shape[0]
    return abs(overlap - 1.0) <= atol


@dataclass(frozen=True, eq=False)
class CliffordTable:
    unitaries: np.ndarray                   # (24, 2, 2)
    decompositions: tuple[tuple[str, ...], ...]
    multiplication: np.ndarray              # mul[a, b] = index of U_a @ U_b
    inverse: np.ndarray

    def __len__(self) -> int:
        return len(self.decompositions)

    @property
    def generator_counts(self) -> np.ndarray:
        """Generator slots per element; the identity element is one idle slot."""
        return np.array([len(d) for d in self.decompositions])

    @property
    def pulse_counts(self) -> np.ndarray:
        """Timed (non-identity) pulses per element."""
        return np.array([sum(g != "I" for g in d) for d in self.decompositions])

    @property
    def average_generator_count(self) -> float:
        return float(self.generator_counts.mean())

    def index_of(self, u: np.ndarray) -> int:
        return self._lookup[phase_key(u)]

    @property
    def _lookup(self) -> dict:
        return {phase_key(u): i for i, u in enumerate(self.unitaries)}

    def compose(self, sequence: Sequence[int]) -> int:
        """Index of the product for cliffords applied in the given order."""
        acc = 0
        for c in sequence:
            acc = int(self.multiplication[c, acc])
        return acc

    def recompose(self, index: int) -> np.ndarray:
        u = np.eye(2, dtype=complex)
        for g in self.decompositions[index]:
            u = GENERATORS[g] @ u
        return u


@lru_cache(maxsize=None)
def build_clifford_table() -> CliffordTable:
    """Breadth-first closure of the pulse set; decompositions are minimal.

    The identity element is compiled to the single idle generator ``I``,
    which occupies a generator slot but no time; with that convention the
    average generator count is 45/24 = 1.875.
    """
    pulses = [g for g in GENERATORS if g != "I"]
    eye = np.eye(2, dtype=complex)
    found = {phase_key(eye): (eye, ("I",))}
    order = [phase_key(eye)]
    queue = deque([phase_key(eye)])
    while queue:
        key = queue.popleft()
        u, dec = found[key]
        for g in pulses:
            v = GENERATORS[g] @ u
            k = phase_key(v)
            if k not in found:
                found[k] = (v, tuple(x for x in dec if x != "I") + (g,))
                order.append(k)
                queue.append(k)
    unitaries = np.array([found[k][0] for k in order])
    decs = tuple(found[k][1] for k in order)
    index = {k: i for i, k in enumerate(order)}
    n = len(order)
    mul = np.empty((n, n), dtype=int)
    for a in range(n):
        for b in range(n):
            mul[a, b] = index[phase_key(unitaries[a] @ unitaries[b])]
    inv = np.array([int(np.nonzero(mul[a] == 0)[0][0]) for a in range(n)])
    for arr in (unitaries, mul, inv):
        arr.setflags(write=False)
    return CliffordTable(unitaries, decs, mul, inv)


@dataclass(frozen=True)
class RBSequence:
    cliffords: tuple[int, ...]
    recovery: int

    @property
    def all_cliffords(self) -> tuple[int, ...]:
        return self.cliffords + (self.recovery,)

    def gates(self, table: CliffordTable | None = None) -> list[str]:
        table = table or build_clifford_table()
        return [g for c in self.all_cliffords for g in table.decompositions[c]]


def generate_rb_sequence(n: int, seed: int | np.random.Generator,
                         table: CliffordTable | None = None) -> RBSequence:
    """``n`` uniformly random Cliffords followed by the inverting Clifford."""
    if n < 0:
        raise ValueError("sequence length must be non-negative")
    table = table or build_clifford_table()
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    cl = tuple(int(c) for c in rng.integers(0, len(table), size=n))
    return RBSequence(cl, int(table.inverse[table.compose(cl)]))


# ---------------------------------------------------------------------------
# noise and simulation

@dataclass(frozen=True)
class NoiseParams:
    """Coherence times (us) and gate duration (ns).

    ``idle_ns`` is the duration of the identity generator; by default it
    occupies one gate slot like any other generator.
    """

    T1: float = math.inf   # us
    T2: float = math.inf   # us
    tg_ns: float = 50.0
    idle_ns: float | None = None

    def __post_init__(self):
        if not (self.T1 > 0 and self.T2 > 0):
            raise ValueError("T1 and T2 must be positive")
        if not self.tg_ns >= 0 or (self.idle_ns is not None and not self.idle_ns >= 0):
            raise ValueError("gate durations must be non-negative")
        if self.T2 > 2 * self.T1 * (1 + 1e-12):
            raise ValueError(f"T2 = {self.T2} exceeds 2*T1 = {2 * self.T1}: negative dephasing rate")

    @property
    def tg_us(self) -> float:
        return self.tg_ns * 1e-3

    @property
    def idle(self) -> "NoiseParams":
        """Parameters describing one identity (idle) generator."""
        tg = self.tg_ns if self.idle_ns is None else self.idle_ns
        return NoiseParams(self.T1, self.T2, tg, tg)

    @property
    def damping(self) -> float:
        """Amplitude-damping probability over one gate."""
        return -math.expm1(-self.tg_us / self.T1)

    @property
    def coherence_decay(self) -> float:
        """Off-diagonal shrink factor over one gate, exp(-tg/T2)."""
        return math.exp(-self.tg_us / self.T2)

    @property
    def dephasing_rate(self) -> float:
        return 1.0 / self.T2 - 0.5 / self.T1


def decoherence_kraus(noise: NoiseParams) -> list[np.ndarray]:
    """Kraus operators of amplitude damping followed by pure dephasing."""
    g = noise.damping
    lam = noise.coherence_decay / math.sqrt(1.0 - g) if g < 1 else 0.0
    lam = min(lam, 1.0)
    ad = [np.array([[1, 0], [0, math.sqrt(1 - g)]]), np.array([[0, math.sqrt(g)], [0, 0]])]
    pd = [math.sqrt((1 + lam) / 2) * np.eye(2), math.sqrt((1 - lam) / 2) * np.diag([1.0, -1.0])]
    return [p @ a for p in pd for a in ad]


def apply_channel(rho: np.ndarray, kraus: Sequence[np.ndarray]) -> np.ndarray:
    return sum(k @ rho @ k.conj().T for k in kraus)


def check_density_matrix(rho: np.ndarray, atol: float = 1e-10) -> None:
    if abs(np.trace(rho).real - 1.0) > atol:
        raise AssertionError(f"trace {np.trace(rho).real} != 1")
    if np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min() < -atol:
        raise AssertionError("density matrix is not positive semidefinite")


def simulate_gates(gates: Sequence[str], noise: NoiseParams, validate: bool = False) -> float:
    """Ground-state population after a list of physical pulses from |0>."""
    rho = np.array([[1, 0], [0, 0]], dtype=complex)
    kraus = decoherence_kraus(noise)
    idle = decoherence_kraus(noise.idle)
    for g in gates:
        if g == "I":
            rho = apply_channel(rho, idle)
        else:
            u = GENERATORS[g]
            rho = apply_channel(u @ rho @ u.conj().T, kraus)
        if validate:
            check_density_matrix(rho)
    return float(rho[0, 0].real)


def simulate_sequence(sequence: RBSequence, noise: NoiseParams | None = None,
                      depolarizing: float | None = None,
                      table: CliffordTable | None = None, validate: bool = False) -> float:
    """Ground-state return probability of one RB sequence.

    With ``depolarizing`` set, the decoherence model is replaced by a
    depolarizing channel with that parameter after each whole Clifford.
    """
    table = table or build_clifford_table()
    if depolarizing is None:
        return simulate_gates(sequence.gates(table), noise or NoiseParams(), validate)
    lam = float(depolarizing)
    rho = np.array([[1, 0], [0, 0]], dtype=complex)
    for c in sequence.all_cliffords:
        u = table.unitaries[c]
        rho = lam * (u @ rho @ u.conj().T) + (1 - lam) * np.eye(2) / 2
        if validate:
            check_density_matrix(rho)
    return float(rho[0, 0].real)


def _superop_unitary(u: np.ndarray) -> np.ndarray:
    # row-major vec: vec(A rho B) = (A kron B^T) vec(rho)
    return np.kron(u, u.conj())


def _superop_kraus(kraus: Sequence[np.ndarray]) -> np.ndarray:
    return sum(np.kron(k, k.conj()) for k in kraus)


def clifford_superoperators(noise: NoiseParams | None = None, depolarizing: float | None = None,
                            table: CliffordTable | None = None) -> np.ndarray:
    """Noisy 4x4 superoperator of every Clifford, shape (24, 4, 4)."""
    table = table or build_clifford_table()
    out = np.empty((len(table), 4, 4), dtype=complex)
    if depolarizing is not None:
        lam = float(depolarizing)
        dep = lam * np.eye(4) + (1 - lam) * 0.5 * np.outer([1, 0, 0, 1], [1, 0, 0, 1])
        for i, u in enumerate(table.unitaries):
            out[i] = dep @ _superop_unitary(u)
        return out
    noise = noise or NoiseParams()
    noise_op = _superop_kraus(decoherence_kraus(noise))
    idle_op = _superop_kraus(decoherence_kraus(noise.idle))
    for i, dec in enumerate(table.decompositions):
        s = np.eye(4, dtype=complex)
        for g in dec:
            s = (idle_op if g == "I" else noise_op) @ _superop_unitary(GENERATORS[g]) @ s
        out[i] = s
    return out


@dataclass(frozen=True, eq=False)
class RBDataset:
    lengths: np.ndarray
    fidelities: np.ndarray
    sds: np.ndarray | None = None
    repetitions: int = 80

    def __post_init__(self):
        n = np.asarray(self.lengths, dtype=int)
        f = np.asarray(self.fidelities, dtype=float)
        if n.shape != f.shape or n.ndim != 1:
            raise ValueError("lengths and fidelities must be 1-D and equal length")
        if not np.all(np.diff(n) > 0):
            raise ValueError("sequence lengths must be strictly increasing")
        if (f < 0).any() or (f > 1).any():
            raise ValueError("fidelities must lie in [0, 1]")
        object.__setattr__(self, "lengths", n)
        object.__setattr__(self, "fidelities", f)
        if self.sds is not None:
            s = np.asarray(self.sds, dtype=float)
            if s.shape != f.shape:
                raise ValueError("sds must match fidelities")
            object.__setattr__(self, "sds", s)


def sequence_seed(base_seed: int, length: int, index: int) -> int:
    """Independent per-sequence seed, so results do not depend on scheduling."""
    return int(np.random.SeedSequence([base_seed, length, index]).generate_state(1)[0])


def simulate_rb(lengths: Sequence[int], seeds: int, noise: NoiseParams | None = None,
                base_seed: int = 0, depolarizing: float | None = None,
                validate: bool = False) -> RBDataset:
    """Average return probability over ``seeds`` random sequences per length."""
    table = build_clifford_table()
    sops = clifford_superoperators(noise, depolarizing, table)
    means, sds = [], []
    for n in lengths:
        seqs = [generate_rb_sequence(n, sequence_seed(base_seed, n, k), table) for k in range(seeds)]
        idx = np.array([s.all_cliffords for s in seqs], dtype=int)   # (seeds, n + 1)
        v = np.tile(np.array([1, 0, 0, 0], dtype=complex), (seeds, 1))
        for step in range(idx.shape[1]):
            v = np.einsum("sij,sj->si", sops[idx[:, step]], v)
            if validate:
                _check_vec_states(v)
        p0 = v[:, 0].real
        means.append(p0.mean())
        sds.append(p0.std(ddof=1) if seeds > 1 else 0.0)
    return RBDataset(np.asarray(lengths), np.clip(means, 0, 1), np.asarray(sds), seeds)


def _check_vec_states(v: np.ndarray, atol: float = 1e-10) -> None:
    r00, r01, r10, r11 = v[:, 0], v[:, 1], v[:, 2], v[:, 3]
    tr = (r00 + r11).real
    det = (r00 * r11 - r01 * r10).real
    if np.abs(tr - 1).max() > atol or det.min() < -atol or min(r00.real.min(), r11.real.min()) < -atol:
        raise AssertionError("density matrix lost positivity or unit trace")


# ---------------------------------------------------------------------------
# analysis

AVERAGE_GENERATORS = 1.875


def error_per_clifford(p: float, d: int = HILBERT_DIM) -> float:
    return (1.0 - p) * (d - 1) / d


def error_per_gate(p: float, d: int = HILBERT_DIM, generators: float = AVERAGE_GENERATORS) -> float:
    return error_per_clifford(p, d) / generators


@dataclass(frozen=True)
class RBFit:
    A: float
    p: float
    B: float
    sd: dict[str, float] = field(default_factory=dict)
    generators: float = AVERAGE_GENERATORS
    d: int = HILBERT_DIM

    @property
    def r_clifford(self) -> float:
        return error_per_clifford(self.p, self.d)

    @property
    def r_g(self) -> float:
        return self.r_clifford / self.generators

    @property
    def f1q(self) -> float:
        return 1.0 - self.r_g

    @property
    def r_g_sd(self) -> float:
        return self.sd.get("p", float("nan")) * (self.d - 1) / self.d / self.generators

    def evaluate(self, n) -> np.ndarray:
        return self.A * self.p ** np.asarray(n, dtype=float) + self.B


def fit_rb_decay(data: RBDataset, weighted: bool = False,
                 generators: float = AVERAGE_GENERATORS) -> RBFit:
    """Fit ``F = A p**n + B`` and derive the error per gate.

    With ``weighted`` the per-length SDs divided by sqrt(repetitions) are
    taken as absolute standard errors of the means.
    """
    n = data.lengths.astype(float)
    f = data.fidelities
    if np.unique(n).size < 4:
        raise ValueError("need at least 4 distinct sequence lengths")
    if np.ptp(f) <= 1e-12:
        return RBFit(A=0.0, p=1.0, B=float(f.mean()), sd={"A": 0.0, "p": 0.0, "B": 0.0},
                     generators=generators)
    if weighted:
        if data.sds is None or not np.all(data.sds > 0):
            raise ValueError("weighted fit requires positive per-length SDs")
        sigma = data.sds / math.sqrt(data.repetitions)
    else:
        sigma = np.ones_like(f)

    b0 = f[-1]
    a0 = f[0] - f[-1]
    mid = len(n) // 2
    ratio = (f[mid] - b0) / a0 if a0 != 0 else float("nan")
    p0 = ratio ** (1.0 / (n[mid] - n[0])) if ratio > 0 else float("nan")
    if not (0 < p0 <= 1):
        raise FitError(f"initial decay estimate {p0} outside (0, 1]")
    a0 = a0 / p0 ** n[0]
    trace: list[float] = []

    def resid(x):
        r = (x[0] * x[1] ** n + x[2] - f) / sigma
        trace.append(float(0.5 * r @ r))
        return r

    res = optimize.least_squares(
        resid, [a0, min(p0, 1 - 1e-12), b0], bounds=([-np.inf, 0.0, -np.inf], [np.inf, 1.0, np.inf]),
        method="trf", x_scale="jac", xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=10000,
    )
    if res.status <= 0:
        raise FitError(f"RB fit did not converge: {res.message}", trace)
    a, p, b = (float(v) for v in res.x)
    if not 0 < p <= 1:
        raise FitError(f"fitted decay p = {p} outside (0, 1]", trace)
    J = res.jac
    cov = np.linalg.pinv(J.T @ J)
    if not weighted:
        dof = len(n) - 3
        cov *= (2.0 * res.cost / dof) if dof > 0 else np.nan
    sd = np.sqrt(np.clip(np.diag(cov), 0, None))
    return RBFit(A=a, p=p, B=b, sd={"A": float(sd[0]), "p": float(sd[1]), "B": float(sd[2])},
                 generators=generators)


def coherence_limit_fidelity(noise: NoiseParams) -> float:
    """Average gate fidelity of the decoherence channel over one gate:
    1/2 + exp(-tg/T2)/3 + exp(-tg/T1)/6."""
    t = noise.tg_us
    return 0.5 + math.exp(-t / noise.T2) / 3.0 + math.exp(-t / noise.T1) / 6.0
