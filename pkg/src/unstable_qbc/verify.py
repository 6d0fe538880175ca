"""Bob's checks at unveiling, plus the concealing audit and detection rates.

For b = 1 the announced electrons are binned in (theta, |p|) with theta
measured from the spin axis Bob prepared. Each theta bin is paired with
its mirror about pi/2 and the pair's asymmetry is fitted against the
honest expectation with one free scale ``s``. Honest data give s = 1;
hand-made isotropic events pull s towards the genuine fraction.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy import stats

from . import qcore
from .decay import ParticleSpecies, compute_thetas
from .protocol import (
    BB84_STATES,
    AliceStrategy,
    CommitmentConfig,
    ElectronData,
    FabricateAll,
    Honest0,
    Honest1,
    Preparations,
    ReturnedQubits,
    SwitchOneToZero,
    SwitchZeroToOne,
    UnveilBit,
    run_session,
)
from .streams import derive_seed


@dataclass(frozen=True)
class TestConfig:
    __test__ = False  # not a pytest class

    significance: float = 1e-3
    theta_bins: int = 10
    p_bins: int = 5
    min_events_per_bin: int = 20

    def __post_init__(self):
        if not 0 < self.significance < 1:
            raise ValueError("significance must lie in (0, 1)")
        if self.theta_bins < 2 or self.theta_bins % 2:
            raise ValueError("theta_bins must be a positive even number")
        if self.p_bins < 1:
            raise ValueError("p_bins must be >= 1")
        if self.min_events_per_bin < 1:
            raise ValueError("min_events_per_bin must be >= 1")


@dataclass
class VerificationReport:
    accepted: bool
    bit_claimed: int
    p_value: float
    count_observed: int
    count_expected: float
    fitted_scale: float | None = None
    scale_error: float | None = None
    fitted_kappa_amplitude: float | None = None
    expected_kappa_amplitude: float | None = None
    count_p_value: float | None = None
    amplitude_p_value: float | None = None
    chi2: float | None = None
    dof: int | None = None
    usable_cells: int | None = None
    failed_qubit_indices: list[int] = field(default_factory=list)
    pass_probability: float | None = None
    diagnostic: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


def _reject(bit: int, diagnostic: str, **kw) -> VerificationReport:
    kw.setdefault("count_observed", 0)
    kw.setdefault("count_expected", 0.0)
    return VerificationReport(False, bit, 0.0, diagnostic=diagnostic, **kw)


# -- b = 0 ----------------------------------------------------------------


def verify_bit0(preparations: Preparations, returned, rng: np.random.Generator) -> VerificationReport:
    """Measure each returned qubit in the basis Bob prepared it in."""
    n = len(preparations)
    if not isinstance(returned, ReturnedQubits):
        return _reject(0, "expected ReturnedQubits", count_expected=float(n))
    if len(returned) != n:
        return _reject(0, f"returned {len(returned)} qubits, expected {n}", count_observed=len(returned), count_expected=float(n))
    prepared = preparations.amplitudes()
    probs = np.abs(np.einsum("ij,ij->i", prepared.conj(), returned.amplitudes)) ** 2
    probs = np.where(probs > 1 - 1e-12, 1.0, probs)
    passed = rng.random(n) < probs
    failed = np.flatnonzero(~passed).tolist()
    ok = not failed
    return VerificationReport(
        accepted=ok,
        bit_claimed=0,
        p_value=1.0 if ok else 0.0,
        count_observed=n - len(failed),
        count_expected=float(n),
        failed_qubit_indices=failed,
        pass_probability=float(np.exp(np.sum(np.log(np.clip(probs, 1e-300, None))))),
        diagnostic="" if ok else f"{len(failed)} qubit(s) failed the basis check",
    )


# -- b = 1 ----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class AsymmetryHistogram:
    theta_bin_edges: np.ndarray
    p_bin_edges: np.ndarray
    counts: np.ndarray  # (theta_bins, p_bins)

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True, eq=False)
class AsymmetryTable:
    """Folded asymmetry per (theta, p) cell.

    ``asymmetry[i]`` and ``asymmetry[-1 - i]`` are mirror partners with
    opposite sign; ``pair_counts`` is n(theta) + n(pi - theta).
    """

    histogram: AsymmetryHistogram
    asymmetry: np.ndarray
    pair_counts: np.ndarray
    usable: np.ndarray
    mean_kappa: np.ndarray  # per p bin; nan where no events

    @property
    def theta_centers(self) -> np.ndarray:
        e = self.histogram.theta_bin_edges
        return 0.5 * (e[1:] + e[:-1])

    @property
    def p_centers(self) -> np.ndarray:
        e = self.histogram.p_bin_edges
        return 0.5 * (e[1:] + e[:-1])

    def bin_mean_cos(self) -> np.ndarray:
        """Exact mean of cos(theta) over each theta bin under (1 + k cos)."""
        e = self.histogram.theta_bin_edges
        return 0.5 * (np.cos(e[:-1]) + np.cos(e[1:]))

    def template(self) -> np.ndarray:
        """Expected honest asymmetry per cell: mean kappa(p) times binned cos."""
        return self.bin_mean_cos()[:, None] * np.nan_to_num(self.mean_kappa)[None, :]

    def sigma(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.sqrt(np.clip(1 - self.asymmetry**2, 0, None) / self.pair_counts)


def asymmetry_histogram(
    preparations: Preparations,
    events: ElectronData,
    test: TestConfig,
    species: ParticleSpecies | None = None,
) -> AsymmetryTable:
    if len(events) == 0:
        raise ValueError("no electron events to bin")
    if events.n_qubits != len(preparations):
        raise ValueError("electron data refer to a different number of qubits")
    axes = preparations.axes()[events.indices]
    theta = compute_thetas(axes, events.momenta)
    mag = np.linalg.norm(events.momenta, axis=1)
    p_top = species.p_max if species is not None else float(mag.max())
    if mag.max() > p_top * (1 + 1e-9):
        raise ValueError("electron momentum above the spectrum endpoint")

    t_edges = np.linspace(0.0, np.pi, test.theta_bins + 1)
    p_edges = np.linspace(0.0, p_top, test.p_bins + 1)
    ti = np.clip(np.searchsorted(t_edges, theta, side="right") - 1, 0, test.theta_bins - 1)
    pi = np.clip(np.searchsorted(p_edges, mag, side="right") - 1, 0, test.p_bins - 1)
    counts = np.zeros((test.theta_bins, test.p_bins), dtype=np.int64)
    np.add.at(counts, (ti, pi), 1)

    mirror = counts[::-1]
    pair = counts + mirror
    with np.errstate(divide="ignore", invalid="ignore"):
        asym = np.where(pair > 0, (counts - mirror) / pair, np.nan)
    usable = pair >= test.min_events_per_bin

    if species is not None:
        kap = species.kappa(mag)
        ksum = np.bincount(pi, weights=kap, minlength=test.p_bins)
        kcnt = np.bincount(pi, minlength=test.p_bins)
        with np.errstate(divide="ignore", invalid="ignore"):
            mean_kappa = np.where(kcnt > 0, ksum / kcnt, np.nan)
    else:
        mean_kappa = np.full(test.p_bins, np.nan)

    hist = AsymmetryHistogram(t_edges, p_edges, counts)
    return AsymmetryTable(hist, asym, pair, usable, mean_kappa)


@dataclass(frozen=True)
class ScaleFit:
    scale: float
    error: float
    chi2: float
    dof: int
    cells: int


def fit_asymmetry_scale(table: AsymmetryTable, iterations: int = 6) -> ScaleFit:
    """Weighted least squares of A against s * template over usable cells.

    Only the theta < pi/2 half is used since the other half is its mirror.
    Weights are binomial, var(A) = (1 - (s t)^2) / n, re-evaluated at the
    current s so the estimate stays efficient away from s = 1.
    """
    half = table.histogram.theta_bin_edges.size // 2
    a = table.asymmetry[:half]
    t = table.template()[:half]
    n = table.pair_counts[:half]
    mask = table.usable[:half] & (np.abs(t) > 0)
    a, t, n = a[mask], t[mask], n[mask].astype(float)
    if a.size == 0:
        raise ValueError("no usable asymmetry cells")
    s = 1.0
    for _ in range(iterations):
        w = n / np.clip(1 - (s * t) ** 2, 1e-9, None)
        s = float(np.sum(w * a * t) / np.sum(w * t * t))
    w = n / np.clip(1 - (s * t) ** 2, 1e-9, None)
    err = float(1 / np.sqrt(np.sum(w * t * t)))
    chi2 = float(np.sum(w * (a - s * t) ** 2))
    return ScaleFit(s, err, chi2, int(a.size - 1), int(a.size))


def count_p_value(observed: int, n: int, prob: float) -> float:
    """Two-sided binomial tail probability for an event count."""
    lo = stats.binom.cdf(observed, n, prob)
    hi = stats.binom.sf(observed - 1, n, prob)
    return float(min(1.0, 2 * min(lo, hi)))


def verify_bit1(
    preparations: Preparations,
    events,
    species: ParticleSpecies,
    config: CommitmentConfig,
    test: TestConfig,
) -> VerificationReport:
    n = len(preparations)
    prob = config.honest_decay_probability
    expected = n * prob
    if not isinstance(events, ElectronData):
        return _reject(1, "expected ElectronData", count_expected=expected)
    k = len(events)
    p_count = count_p_value(k, n, prob)
    base = dict(count_observed=k, count_expected=expected, count_p_value=p_count)
    if k == 0:
        return _reject(1, "no electron events announced", **base)
    try:
        table = asymmetry_histogram(preparations, events, test, species)
    except ValueError as exc:
        return _reject(1, str(exc), **base)
    if not np.any(np.abs(table.template()) > 0):
        return _reject(1, "asymmetry template vanishes (kappa = 0): test undefined", **base)
    try:
        fit = fit_asymmetry_scale(table)
    except ValueError as exc:
        return _reject(1, f"insufficient usable cells: {exc}", **base)

    z = (fit.scale - 1.0) / fit.error
    p_amp = float(2 * stats.norm.sf(abs(z)))
    # Bonferroni over the count and amplitude checks
    p_value = float(min(1.0, 2 * min(p_count, p_amp)))
    accepted = p_value >= test.significance
    per_p = table.histogram.counts.sum(axis=0)
    kbar = float(np.sum(np.nan_to_num(table.mean_kappa) * per_p) / per_p.sum())
    diag = ""
    if not accepted:
        diag = "asymmetry amplitude off" if p_amp <= p_count else "event count off"
    return VerificationReport(
        accepted=accepted,
        bit_claimed=1,
        p_value=p_value,
        fitted_scale=fit.scale,
        scale_error=fit.error,
        fitted_kappa_amplitude=fit.scale * kbar,
        expected_kappa_amplitude=kbar,
        amplitude_p_value=p_amp,
        chi2=fit.chi2,
        dof=fit.dof,
        usable_cells=fit.cells,
        diagnostic=diag,
        **base,
    )


def verify_unveil(preparations, bit_msg, payload, config, test, rng) -> VerificationReport:
    if not isinstance(bit_msg, UnveilBit):
        return _reject(-1, "missing unveil bit")
    if bit_msg.bit == 0:
        return verify_bit0(preparations, payload, rng)
    return verify_bit1(preparations, payload, config.species, config, test)


# -- concealing audit -----------------------------------------------------

MAX_AUDIT_QUBITS = 4

# Alice's per-qubit actions as isometries from the received qubit.
_KEEP = np.eye(2, dtype=complex)
# |a> -> |0>_alpha |a>_W |0>_nu : swapped into a W that is still alive
_SWAPPED = np.zeros((8, 2), dtype=complex)
_SWAPPED[0 * 4 + 0 * 2 + 0, 0] = 1
_SWAPPED[0 * 4 + 1 * 2 + 0, 1] = 1
# |a> -> |0>_alpha |a>_W |a>_nu : the W has decayed and the neutrino carries a copy
_DECAYED = np.zeros((8, 2), dtype=complex)
_DECAYED[0 * 4 + 0 * 2 + 0, 0] = 1
_DECAYED[0 * 4 + 1 * 2 + 1, 1] = 1


def bob_purification_factor() -> np.ndarray:
    """2 x 4 amplitude matrix: received qubit (rows) x Bob's ancilla (cols).

    Bob's ancilla |j> records which BB84 state he sent, so the pure
    state sum_j |j>_beta |phi_j>_alpha / 2 purifies his random choice.
    """
    return BB84_STATES.T / 2.0


def commit_isometries(strategy: AliceStrategy, n_small: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Per-qubit isometry Alice applies to her share by the end of commitment.

    Which W's have decayed is drawn from ``rng``; any such history leaves
    Bob's ancilla untouched.
    """
    if isinstance(strategy, (Honest0, FabricateAll)):
        return [_KEEP] * n_small
    if isinstance(strategy, (Honest1, SwitchOneToZero, SwitchZeroToOne)):
        decayed = rng.random(n_small) < 0.5
        return [_DECAYED if d else _SWAPPED for d in decayed]
    raise TypeError(f"unknown strategy {strategy!r}")


def _global_state(isometries: list[np.ndarray]) -> qcore.BipartiteState:
    m = np.ones((1, 1), dtype=complex)
    base = bob_purification_factor()
    for v in isometries:
        m = np.kron(m, v @ base)
    return qcore.BipartiteState(m, m.shape[0], m.shape[1])


def _leak_first(isometry: np.ndarray) -> np.ndarray:
    """Move the first qubit's alpha register to Bob: returns its (Alice, Bob) factor."""
    t = (isometry @ bob_purification_factor()).reshape(2, -1, 4)  # alpha, rest, beta
    return t.transpose(1, 2, 0).reshape(t.shape[1], 8)  # Bob index = beta * 2 + alpha


def concealing_audit(
    n_small: int,
    rng: np.random.Generator,
    strategy: AliceStrategy | None = None,
    leaky: bool = False,
) -> float:
    """Trace distance between Bob's states after an honest b=0 and ``strategy``'s commit.

    ``leaky=True`` is a negative control: under b=0 only, Alice hands the
    first qubit back before unveiling.
    """
    if n_small < 1:
        raise ValueError("n_small must be >= 1")
    if n_small > MAX_AUDIT_QUBITS:
        raise ValueError(f"n_small={n_small} exceeds audit limit {MAX_AUDIT_QUBITS} (dimension overflow)")
    strategy = Honest1() if strategy is None else strategy
    iso0 = commit_isometries(Honest0(), n_small, rng)
    iso1 = commit_isometries(strategy, n_small, rng)
    if not leaky:
        rho0 = qcore.partial_trace(_global_state(iso0), "A")
        rho1 = qcore.partial_trace(_global_state(iso1), "A")
        return qcore.trace_distance(rho0, rho1)

    # b=0 hands back qubit 0; b=1 hands back the (now empty) alpha register
    first0 = _leak_first(iso0[0])
    first1 = _leak_first(iso1[0])
    rest0 = _global_state(iso0[1:]).amplitudes if n_small > 1 else np.ones((1, 1))
    rest1 = _global_state(iso1[1:]).amplitudes if n_small > 1 else np.ones((1, 1))
    s0 = qcore.BipartiteState.from_matrix(np.kron(first0, rest0))
    s1 = qcore.BipartiteState.from_matrix(np.kron(first1, rest1))
    return qcore.trace_distance(qcore.partial_trace(s0, "A"), qcore.partial_trace(s1, "A"))


# -- detection rate -------------------------------------------------------


def detection_power(
    strategy: AliceStrategy,
    config: CommitmentConfig,
    test: TestConfig,
    trials: int,
) -> float:
    """Fraction of seeded sessions Bob rejects; trial i uses seed derived from (config.seed, i)."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rejected = 0
    for i in range(trials):
        cfg = replace(config, seed=derive_seed(config.seed, i))
        if not run_session(cfg, strategy, test).report.accepted:
            rejected += 1
    return rejected / trials
