"""Alice and Bob as clocked state machines for commitment and unveiling.

Per-qubit data are kept in numpy arrays (one row per qubit) so sessions
with N = 10**6 stay cheap; indexing a container yields the element-level
dataclasses (``QubitPreparation``, ``StateVector``, ``DecayEvent``).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from typing import Union

import numpy as np

from . import decay
from .decay import ParticleSpecies, PRESETS, POLARIZATION_AXES, Polarization, DecayEvent
from .qcore import StateVector, bloch_vectors
from .streams import make_rng

Z_BASIS, X_BASIS = 0, 1

_S = 1 / np.sqrt(2)
# rows: |+z>, |-z>, |+x>, |-x>, indexed by 2*basis + bit
BB84_STATES = np.array([[1, 0], [0, 1], [_S, _S], [_S, -_S]], dtype=complex)


class ProtocolError(RuntimeError):
    pass


# -- preparations ---------------------------------------------------------


@dataclass(frozen=True)
class QubitPreparation:
    index: int
    basis: int
    bit: int

    def __post_init__(self):
        if self.basis not in (Z_BASIS, X_BASIS) or self.bit not in (0, 1):
            raise ValueError(f"invalid preparation ({self.basis}, {self.bit})")

    @property
    def code(self) -> int:
        return 2 * self.basis + self.bit

    @property
    def state(self) -> StateVector:
        return StateVector(BB84_STATES[self.code], 2)

    @property
    def polarization(self) -> Polarization:
        return Polarization.from_preparation(self.basis, self.bit)


@dataclass(frozen=True, eq=False)
class Preparations:
    """Bob's secret record: one (basis, bit) pair per qubit."""

    basis: np.ndarray
    bit: np.ndarray

    def __post_init__(self):
        for name in ("basis", "bit"):
            a = np.array(getattr(self, name), dtype=np.uint8)
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        if self.basis.shape != self.bit.shape:
            raise ValueError("basis and bit arrays differ in length")

    @classmethod
    def from_list(cls, preps: list[QubitPreparation]) -> "Preparations":
        preps = sorted(preps, key=lambda q: q.index)
        return cls([q.basis for q in preps], [q.bit for q in preps])

    def __len__(self) -> int:
        return self.basis.size

    def __getitem__(self, i: int) -> QubitPreparation:
        return QubitPreparation(int(i), int(self.basis[i]), int(self.bit[i]))

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    @property
    def codes(self) -> np.ndarray:
        return 2 * self.basis.astype(np.int64) + self.bit

    def amplitudes(self) -> np.ndarray:
        return BB84_STATES[self.codes]

    def axes(self) -> np.ndarray:
        return POLARIZATION_AXES[self.codes]


# -- messages -------------------------------------------------------------


def _frozen_amps(a) -> np.ndarray:
    a = np.array(a, dtype=complex).reshape(-1, 2)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class QubitSequence:
    amplitudes: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "amplitudes", _frozen_amps(self.amplitudes))

    def __len__(self) -> int:
        return self.amplitudes.shape[0]

    @property
    def states(self) -> list[StateVector]:
        return [StateVector(a, 2) for a in self.amplitudes]


@dataclass(frozen=True, eq=False)
class ReturnedQubits(QubitSequence):
    pass


@dataclass(frozen=True)
class UnveilBit:
    bit: int

    def __post_init__(self):
        if self.bit not in (0, 1):
            raise ValueError(f"bit must be 0 or 1, got {self.bit}")


@dataclass(frozen=True, eq=False)
class ElectronData:
    indices: np.ndarray
    decay_times: np.ndarray
    momenta: np.ndarray
    n_qubits: int

    def __post_init__(self):
        idx = np.array(self.indices, dtype=np.int64).reshape(-1)
        times = np.array(self.decay_times, dtype=float).reshape(-1)
        mom = np.array(self.momenta, dtype=float).reshape(-1, 3)
        for a in (idx, times, mom):
            a.setflags(write=False)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "decay_times", times)
        object.__setattr__(self, "momenta", mom)
        if not (idx.size == times.size == mom.shape[0]):
            raise ValueError("indices, decay_times and momenta differ in length")
        if np.unique(idx).size != idx.size:
            raise ValueError("duplicate qubit indices in electron data")
        if idx.size and (idx.min() < 0 or idx.max() >= self.n_qubits):
            raise ValueError(f"electron data index outside [0, {self.n_qubits})")

    @classmethod
    def from_events(cls, events: list[DecayEvent], n_qubits: int) -> "ElectronData":
        events = sorted(events, key=lambda e: e.index)
        return cls(
            [e.index for e in events],
            [e.decay_time for e in events],
            np.reshape([e.electron_momentum for e in events], (-1, 3)),
            n_qubits,
        )

    def __len__(self) -> int:
        return self.indices.size

    def events(self) -> list[DecayEvent]:
        return [DecayEvent(int(i), float(t), p) for i, t, p in zip(self.indices, self.decay_times, self.momenta)]


Message = Union[QubitSequence, ReturnedQubits, UnveilBit, ElectronData]


# -- configuration and strategies -----------------------------------------


@dataclass(frozen=True)
class CommitmentConfig:
    n: int
    tau_over_T: float = 10.0
    unveil_time_over_T: float = 2.0
    species: ParticleSpecies = PRESETS["neutron"]
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        if not self.tau_over_T > 0:
            raise ValueError("tau_over_T must be > 0")
        if not self.unveil_time_over_T > 0:
            raise ValueError("unveil_time_over_T must be > 0")

    @property
    def decay_species(self) -> ParticleSpecies:
        """The species with its lifetime expressed in units of T."""
        return self.species.with_lifetime(self.tau_over_T)

    @property
    def unveil_time(self) -> float:
        return self.unveil_time_over_T

    @property
    def honest_decay_probability(self) -> float:
        return float(-np.expm1(-self.unveil_time_over_T / self.tau_over_T))


@dataclass(frozen=True)
class Honest0:
    name = "honest0"


@dataclass(frozen=True)
class Honest1:
    name = "honest1"


@dataclass(frozen=True)
class SwitchZeroToOne:
    """Commit to 0, swap the qubits into W's at ``switch_time``, unveil 1."""

    switch_time: float = 1.0
    name = "switch01"


@dataclass(frozen=True)
class SwitchOneToZero:
    """Commit to 1, then unveil 0 by handing back whatever is left.

    ``guess_rule`` is ``"random"`` (a uniform draw from the four BB84
    states) or ``"posterior"`` (best guess from the recorded electron).
    """

    guess_rule: str = "posterior"
    name = "switch10"

    def __post_init__(self):
        if self.guess_rule not in ("random", "posterior"):
            raise ValueError(f"unknown guess_rule {self.guess_rule!r}")


@dataclass(frozen=True)
class FabricateAll:
    name = "fabricate"


AliceStrategy = Union[Honest0, Honest1, SwitchZeroToOne, SwitchOneToZero, FabricateAll]

STRATEGY_NAMES = ("honest0", "honest1", "switch01", "switch10", "fabricate")


def strategy_from_name(name: str, switch_time: float = 1.0, guess_rule: str = "posterior") -> AliceStrategy:
    table = {
        "honest0": Honest0,
        "honest1": Honest1,
        "switch01": lambda: SwitchZeroToOne(switch_time),
        "switch10": lambda: SwitchOneToZero(guess_rule),
        "fabricate": FabricateAll,
    }
    try:
        return table[name]()
    except KeyError:
        raise ValueError(f"unknown strategy {name!r}; choose from {', '.join(STRATEGY_NAMES)}") from None


def strategy_to_dict(strategy: AliceStrategy) -> dict:
    return {"name": strategy.name, **asdict(strategy)}


# -- Bob ------------------------------------------------------------------


def bob_prepare_qubits(n: int, rng: np.random.Generator) -> tuple[Preparations, QubitSequence]:
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    codes = rng.integers(0, 4, size=n)
    preps = Preparations(codes // 2, codes % 2)
    return preps, QubitSequence(BB84_STATES[codes])


# -- Alice ----------------------------------------------------------------


@dataclass
class AliceInternalState:
    """Everything Alice holds between commit and unveil.

    ``decay_times`` is absolute time since commitment for every W she
    created (``inf`` where a qubit was never transferred); ``log`` holds
    the electrons she actually recorded before unveiling.
    """

    strategy: AliceStrategy
    received: QubitSequence
    committed_bit: int
    transfer_time: float | None
    decay_times: np.ndarray
    log: ElectronData
    announced_fabricated: np.ndarray | None = field(default=None)

    @property
    def n(self) -> int:
        return len(self.received)

    def decayed_mask(self, clock: float) -> np.ndarray:
        return self.decay_times <= clock


def _transfer_and_record(qubits: QubitSequence, species, start, unveil, rng, n) -> tuple[np.ndarray, ElectronData]:
    times = start + decay.sample_decay_time(species, rng, n)
    hit = np.flatnonzero(times <= unveil)
    # W spin equals the transferred qubit state (ideal swap)
    axes = bloch_vectors(qubits.amplitudes[hit])
    momenta = decay.sample_electron_momenta(axes, species, rng) if hit.size else np.empty((0, 3))
    return times, ElectronData(hit, times[hit], momenta, n)


def alice_commit(
    strategy: AliceStrategy, qubits: QubitSequence, config: CommitmentConfig, rng: np.random.Generator
) -> AliceInternalState:
    if not isinstance(qubits, QubitSequence):
        raise ProtocolError("commitment expects a QubitSequence")
    n = config.n
    if len(qubits) != n:
        raise ProtocolError(f"received {len(qubits)} qubits, expected {n}")
    sp = config.decay_species
    u = config.unveil_time
    never = np.full(n, np.inf)
    empty = ElectronData([], [], np.empty((0, 3)), n)

    if isinstance(strategy, (Honest0, FabricateAll)):
        return AliceInternalState(strategy, qubits, 0, None, never, empty)
    if isinstance(strategy, (Honest1, SwitchOneToZero)):
        times, log = _transfer_and_record(qubits, sp, 0.0, u, rng, n)
        return AliceInternalState(strategy, qubits, 1, 0.0, times, log)
    if isinstance(strategy, SwitchZeroToOne):
        s = strategy.switch_time
        if not 0 <= s < u:
            raise ProtocolError(f"switch_time {s} must lie in [0, unveil_time={u})")
        times, log = _transfer_and_record(qubits, sp, s, u, rng, n)
        return AliceInternalState(strategy, qubits, 0, s, times, log)
    raise TypeError(f"unknown strategy {strategy!r}")


def _fabricated_events(indices, species, unveil, rng, n) -> ElectronData:
    k = len(indices)
    times = decay.truncated_decay_times(species, unveil, rng, k)
    momenta = decay.fabricate_isotropic_event(species, rng, k) if k else np.empty((0, 3))
    return ElectronData(indices, times, momenta, n)


def _merge(a: ElectronData, b: ElectronData) -> tuple[ElectronData, np.ndarray]:
    idx = np.concatenate([a.indices, b.indices])
    order = np.argsort(idx, kind="stable")
    fab = np.concatenate([np.zeros(len(a), bool), np.ones(len(b), bool)])[order]
    merged = ElectronData(
        idx[order],
        np.concatenate([a.decay_times, b.decay_times])[order],
        np.concatenate([a.momenta, b.momenta])[order],
        a.n_qubits,
    )
    return merged, fab


def _subset(data: ElectronData, keep: np.ndarray) -> ElectronData:
    keep = np.sort(keep)
    return ElectronData(data.indices[keep], data.decay_times[keep], data.momenta[keep], data.n_qubits)


def posterior_guess_amplitudes(momenta: np.ndarray, species: ParticleSpecies) -> np.ndarray:
    """Closed-form best resend state for each recorded electron.

    Against the uniform BB84 prior the posterior-weighted projector sum is
    I/2 + (kappa/4)(n_x sx + n_z sz), so the optimum is the real state
    whose Bloch vector points along sign(kappa) (n_x, 0, n_z).
    """
    mag = np.linalg.norm(momenta, axis=1)
    n = momenta / mag[:, None]
    k = species.kappa(mag)
    bx, bz = k * n[:, 0], k * n[:, 2]
    degenerate = np.hypot(bx, bz) < 1e-15
    angle = np.where(degenerate, 0.0, np.arctan2(bx, bz))
    return np.stack([np.cos(angle / 2), np.sin(angle / 2)], axis=1).astype(complex)


def alice_unveil(
    state: AliceInternalState,
    config: CommitmentConfig,
    rng: np.random.Generator,
    clock: float | None = None,
) -> tuple[UnveilBit, Message]:
    u = config.unveil_time
    clock = u if clock is None else clock
    if clock < u:
        raise ProtocolError(f"cannot unveil at t={clock}, before unveil_time={u}")
    strategy = state.strategy
    n = state.n
    sp = config.decay_species

    if isinstance(strategy, Honest0):
        return UnveilBit(0), ReturnedQubits(state.received.amplitudes)
    if isinstance(strategy, Honest1):
        state.announced_fabricated = np.zeros(len(state.log), bool)
        return UnveilBit(1), state.log
    if isinstance(strategy, (SwitchZeroToOne, FabricateAll)):
        target = int(rng.binomial(n, config.honest_decay_probability))
        genuine = state.log
        if len(genuine) >= target:
            keep = rng.choice(len(genuine), size=target, replace=False)
            announced, fab = _subset(genuine, keep), np.zeros(target, bool)
        else:
            alive = np.setdiff1d(np.arange(n), genuine.indices)
            extra = np.sort(rng.choice(alive, size=target - len(genuine), replace=False))
            announced, fab = _merge(genuine, _fabricated_events(extra, sp, u, rng, n))
        state.announced_fabricated = fab
        return UnveilBit(1), announced
    if isinstance(strategy, SwitchOneToZero):
        amps = np.array(state.received.amplitudes)
        lost = state.log.indices
        if strategy.guess_rule == "random":
            amps[lost] = BB84_STATES[rng.integers(0, 4, size=lost.size)]
        else:
            amps[lost] = posterior_guess_amplitudes(state.log.momenta, sp)
        return UnveilBit(0), ReturnedQubits(amps)
    raise TypeError(f"unknown strategy {strategy!r}")


def decay_posterior_guess(event: DecayEvent, species: ParticleSpecies) -> StateVector:
    """State maximizing Bob's pass probability given one recorded electron.

    Posterior over the four BB84 preparations via Bayes' rule with the
    emission likelihood; the maximizer of sum_j w_j |<phi_j|g>|^2 is the
    top eigenvector of sum_j w_j |phi_j><phi_j|.
    """
    p = event.electron_momentum
    kappa = float(species.kappa(np.linalg.norm(p)))
    like = np.array(
        [decay.decay_measurement_density(StateVector(s, 2), p, kappa) for s in BB84_STATES]
    )
    w = like / like.sum()
    op = sum(wj * np.outer(s, s.conj()) for wj, s in zip(w, BB84_STATES))
    vals, vecs = np.linalg.eigh(op)
    g = vecs[:, -1]
    if vals[-1] - vals[0] < 1e-13:
        g = np.array([1.0, 0.0], dtype=complex)
    idx = np.flatnonzero(np.abs(g) > 1e-12)[0]
    g = g * (np.conj(g[idx]) / abs(g[idx]))
    return StateVector(g, 2)


def replacement_pass_probability(guess: StateVector, weights=(0.25, 0.25, 0.25, 0.25)) -> float:
    """Chance a resent ``guess`` passes Bob's basis check under a prior over BB84."""
    ov = np.abs(BB84_STATES.conj() @ guess.amplitudes) ** 2
    return float(np.dot(weights, ov))


def posterior_pass_probability(kappa: float, n_polar: int = 24, n_azimuth: int = 72) -> float:
    """Average pass probability of the posterior-optimal guess at fixed kappa.

    Gauss-Legendre in cos(theta) times a uniform azimuth grid over emission
    directions, averaged over the four equally likely preparations; each
    direction's guess comes from ``decay_posterior_guess``.
    """
    species = ParticleSpecies(asymmetry=kappa, electron_mass_kev=0.0, spectrum=decay.MONOENERGETIC)
    cos_nodes, cos_w = np.polynomial.legendre.leggauss(n_polar)
    ph = (np.arange(n_azimuth) + 0.5) * 2 * np.pi / n_azimuth
    total = 0.0
    for c, wc in zip(cos_nodes, cos_w):
        s = np.sqrt(1 - c * c)
        for f in ph:
            n = np.array([s * np.cos(f), s * np.sin(f), c])
            g = decay_posterior_guess(DecayEvent(0, 0.0, n), species)
            ov = np.abs(BB84_STATES.conj() @ g.amplitudes) ** 2
            dens = (1 + kappa * POLARIZATION_AXES @ n) / (4 * np.pi)
            total += 0.25 * float(dens @ ov) * wc * (2 * np.pi / n_azimuth)
    return total


# -- session --------------------------------------------------------------


@dataclass(frozen=True)
class TimedMessage:
    time: float
    sender: str
    message: Message


@dataclass(frozen=True, eq=False)
class SessionTranscript:
    config: CommitmentConfig
    strategy: AliceStrategy
    messages: tuple[TimedMessage, ...]
    preparations: Preparations
    alice: AliceInternalState
    report: "object"

    def __post_init__(self):
        times = [m.time for m in self.messages]
        if any(b < a for a, b in zip(times, times[1:])):
            raise ValueError("transcript timestamps must be nondecreasing")
        kinds = [type(m.message) for m in self.messages]
        if kinds.count(QubitSequence) != 1 or kinds.count(UnveilBit) != 1:
            raise ValueError("transcript needs exactly one commitment and one unveil message")

    def bob_commit_view(self) -> QubitSequence:
        return self.messages[0].message

    def to_dict(self, full: bool = True) -> dict:
        return transcript_to_dict(self, full)

    def to_json(self, full: bool = True) -> str:
        return json.dumps(self.to_dict(full), sort_keys=True)


SCHEMA_VERSION = 1


def _amps_to_list(a: np.ndarray) -> list:
    return [[float(z.real), float(z.imag)] for z in a.reshape(-1)]


def message_to_dict(m: Message, full: bool = True) -> dict:
    if isinstance(m, UnveilBit):
        return {"type": "UnveilBit", "bit": m.bit}
    if isinstance(m, QubitSequence):
        out = {"type": type(m).__name__, "count": len(m)}
        if full:
            out["amplitudes"] = [_amps_to_list(row) for row in m.amplitudes]
        return out
    if isinstance(m, ElectronData):
        out = {"type": "ElectronData", "count": len(m), "n_qubits": m.n_qubits}
        if full:
            out["indices"] = m.indices.tolist()
            out["decay_times"] = m.decay_times.tolist()
            out["momenta"] = m.momenta.tolist()
        return out
    raise TypeError(f"not a message: {m!r}")


def config_to_dict(config: CommitmentConfig) -> dict:
    d = asdict(config)
    d["species"] = config.species.to_dict()
    return d


def transcript_to_dict(t: SessionTranscript, full: bool = True) -> dict:
    out = {
        "schema_version": SCHEMA_VERSION,
        "config": config_to_dict(t.config),
        "strategy": strategy_to_dict(t.strategy),
        "messages": [
            {"time": m.time, "sender": m.sender, "message": message_to_dict(m.message, full)}
            for m in t.messages
        ],
        "report": t.report.to_dict(),
        "alice": {
            "committed_bit": t.alice.committed_bit,
            "transfer_time": t.alice.transfer_time,
            "recorded_decays": len(t.alice.log),
            "announced_fabricated": (
                None if t.alice.announced_fabricated is None else int(t.alice.announced_fabricated.sum())
            ),
        },
    }
    if full:
        out["preparations"] = {"basis": t.preparations.basis.tolist(), "bit": t.preparations.bit.tolist()}
    return out


def run_session(config: CommitmentConfig, strategy: AliceStrategy, test=None) -> SessionTranscript:
    """prepare -> commit -> clock advance -> unveil -> verify, all from ``config.seed``."""
    from .verify import TestConfig, verify_unveil

    test = TestConfig() if test is None else test
    bob_rng = make_rng(config.seed, 0)
    alice_rng = make_rng(config.seed, 1)
    bob_check_rng = make_rng(config.seed, 2)

    preps, seq = bob_prepare_qubits(config.n, bob_rng)
    messages = [TimedMessage(0.0, "bob", seq)]
    state = alice_commit(strategy, seq, config, alice_rng)
    clock = config.unveil_time
    bit_msg, payload = alice_unveil(state, config, alice_rng, clock)
    messages.append(TimedMessage(clock, "alice", bit_msg))
    messages.append(TimedMessage(clock, "alice", payload))
    report = verify_unveil(preps, bit_msg, payload, config, test, bob_check_rng)
    return SessionTranscript(config, strategy, tuple(messages), preps, state, report)


def with_seed(config: CommitmentConfig, seed: int) -> CommitmentConfig:
    return replace(config, seed=int(seed))
