"""Adaptive barrier-potential row sampling with a budgeted stopping rule.

The sampler maintains a running d x d matrix ``A`` squeezed between two moving
scalar barriers ``l`` and ``u``.  Each iteration scores every row of the left
singular factor by how much it would push ``A`` toward a barrier, samples one
row from that distribution, adds the rescaled rank-one update, and advances the
barriers asymmetrically.  The loop charges every iteration's potential against
a fixed budget, which caps the iteration count with probability one and, after
normalizing the accumulated weights by the final barrier midpoint, leaves the
weighted Gram matrix of the sampled rows spectrally close to the identity.

A full per-iteration trace is captured so that every structural guarantee of
the procedure can be re-verified after the fact (see :mod:`ssar.verify`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .core import SvdFactors, as_matrix, leverage_scores
from .errors import (
    BarrierViolationError,
    InsufficientTraceError,
    InvalidInputError,
    NumericalBreakdownError,
    WellBalancedEventFailedError,
)
from .rngutil import derive_seed, make_rng

__all__ = [
    "AsuraConfig",
    "AsuraState",
    "AsuraTrace",
    "SampleSet",
    "WellBalancedReport",
    "potential",
    "sampling_distribution",
    "asura_sample",
    "check_well_balanced",
    "sample_with_retry",
]

# Round-off handling for the sampling distribution.
P_CLAMP_FLOOR = -1e-12
P_ERROR_FLOOR = -1e-8

# Eigenvalue tolerance for barrier-containment assertions.
EIG_TOL = 1e-9

# Well-balancedness thresholds: spectral window of the reweighted Gram matrix,
# the coefficient-sum bound, and the per-iteration coefficient-conditioning
# bound (as a multiple of gamma^2).
SPECTRAL_LO = 0.75
SPECTRAL_HI = 1.25
ALPHA_SUM_BOUND = 1024.0
KD_BOUND_COEFF = 512.0
KD_AGREEMENT_TOL = 1e-6

# The barrier-step containment arguments require gamma <= 1/4.
GAMMA_ASSERT_MAX = 0.25

# Lemma assertions (and matrix capture) default on up to this rank.
ASSERT_RANK_DEFAULT_MAX = 64


@dataclass(frozen=True)
class AsuraConfig:
    """Run parameters for the adaptive sampler.

    ``gamma = sqrt(epsilon) / c0`` controls the barrier speed.  The default
    ``c0 = 2`` is a practical choice; the spectral guarantees only carry their
    full constants for much larger ``c0`` (slower, tighter runs).
    ``assert_lemmas=None`` enables per-iteration assertions and matrix capture
    automatically when the factor rank is at most 64.
    """

    epsilon: float
    c0: float = 2.0
    rng_seed: int = 0
    assert_lemmas: bool | None = None
    max_restarts: int = 10

    def __post_init__(self):
        if not (0.0 < self.epsilon < 1.0):
            raise InvalidInputError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if self.c0 <= 0:
            raise InvalidInputError(f"c0 must be positive, got {self.c0}")
        if self.rng_seed < 0:
            raise InvalidInputError("rng_seed must be a nonnegative integer")
        if self.max_restarts < 1:
            raise InvalidInputError("max_restarts must be at least 1")

    @property
    def gamma(self) -> float:
        return math.sqrt(self.epsilon) / self.c0

    def checks_active(self, rank: int) -> bool:
        if self.assert_lemmas is None:
            return rank <= ASSERT_RANK_DEFAULT_MAX
        return self.assert_lemmas


@dataclass
class AsuraState:
    """Barrier state after ``j`` completed iterations."""

    a: np.ndarray
    u: float
    l: float
    j: int = 0
    phi_cumsum: float = 0.0

    @classmethod
    def initial(cls, rank: int, gamma: float) -> "AsuraState":
        if rank < 1:
            raise InvalidInputError("rank must be at least 1")
        if not (0.0 < gamma < 1.0):
            raise InvalidInputError(f"gamma must lie in (0, 1), got {gamma}")
        edge = 2.0 * rank / gamma
        return cls(a=np.zeros((rank, rank)), u=edge, l=-edge, j=0, phi_cumsum=0.0)


@dataclass
class AsuraTrace:
    """Per-iteration record of one sampler run.

    ``u`` and ``l`` have length ``m + 1`` (initial through final barrier
    values); the remaining per-iteration arrays have length ``m``.
    ``a_mats`` holds the running matrix before each update plus the final one,
    and is only captured when lemma assertions are active.  ``px1_sum`` and
    ``phi_d`` are recorded when the caller identifies how many leading rows
    form the unlabeled block.
    """

    gamma: float
    rank: int
    n_rows: int
    n_unlabeled: int | None
    phi_id: np.ndarray
    u: np.ndarray
    l: np.ndarray
    sampled_index: np.ndarray
    p_j: np.ndarray
    w_prime: np.ndarray
    px1_sum: np.ndarray | None = None
    phi_d: np.ndarray | None = None
    a_mats: np.ndarray | None = None

    @property
    def m(self) -> int:
        return self.phi_id.shape[0]

    @property
    def u_final(self) -> float:
        return float(self.u[-1])

    @property
    def l_final(self) -> float:
        return float(self.l[-1])

    @property
    def mid(self) -> float:
        return 0.5 * (self.u_final + self.l_final)


@dataclass
class SampleSet:
    """Sampled row indices with their loss weights.

    ``weights`` multiply squared residuals directly.  ``coefficients`` are the
    midpoint-normalized per-iteration coefficients of the adaptive sampler and
    are unset for the non-sequential baselines.
    """

    indices: np.ndarray
    weights: np.ndarray
    coefficients: np.ndarray | None = None
    gamma: float | None = None
    u_final: float | None = None
    l_final: float | None = None

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.indices.shape != self.weights.shape:
            raise InvalidInputError("indices and weights must have equal length")
        if self.weights.size and np.any(self.weights <= 0):
            raise InvalidInputError("weights must be positive")
        if self.coefficients is not None:
            self.coefficients = np.asarray(self.coefficients, dtype=float)
            if self.coefficients.shape != self.indices.shape:
                raise InvalidInputError("coefficients must match indices in length")
            if self.coefficients.size and np.any(self.coefficients <= 0):
                raise InvalidInputError("coefficients must be positive")

    @property
    def m(self) -> int:
        return self.indices.shape[0]


def _barrier_decomposition(state: AsuraState):
    """Eigendecompose the running matrix and return strictly positive barrier gaps."""
    theta, q = np.linalg.eigh(state.a)
    gap_u = state.u - theta
    gap_l = theta - state.l
    if gap_u.min() <= 0.0 or gap_l.min() <= 0.0:
        raise BarrierViolationError(
            f"barrier touched at iteration {state.j}: "
            f"eigenvalues span [{theta.min():.6g}, {theta.max():.6g}] "
            f"against window [{state.l:.6g}, {state.u:.6g}]"
        )
    return theta, q, gap_u, gap_l


def potential(state: AsuraState, m_weight: np.ndarray | None = None) -> float:
    """Barrier potential ``Tr(M (uI - A)^{-1} + M (A - lI)^{-1})``.

    With ``m_weight`` omitted the weight matrix is the identity, giving
    ``sum_t [1/(u - theta_t) + 1/(theta_t - l)]`` over eigenvalues of ``A``.
    """
    _, q, gap_u, gap_l = _barrier_decomposition(state)
    b = 1.0 / gap_u + 1.0 / gap_l
    if m_weight is None:
        return float(b.sum())
    m = as_matrix(m_weight, "m_weight")
    if m.shape != state.a.shape:
        raise InvalidInputError(
            f"weight matrix shape {m.shape} does not match state dimension {state.a.shape}"
        )
    diag_m = np.einsum("ji,jk,ki->i", q, m, q)
    return float(diag_m @ b)


def _draw_index(rng: np.random.Generator, p: np.ndarray) -> int:
    """Draw one index from a probability vector via its cumulative sums."""
    pick = int(np.searchsorted(np.cumsum(p), rng.random(), side="right"))
    return min(pick, p.size - 1)


def _normalize_probabilities(p_raw: np.ndarray) -> np.ndarray:
    """Clamp round-off negatives and renormalize to a probability vector."""
    low = float(p_raw.min()) if p_raw.size else 0.0
    if low < P_ERROR_FLOOR:
        raise NumericalBreakdownError(
            f"sampling probability {low:.3e} fell below the breakdown threshold"
        )
    if low < 0.0:
        p_raw = np.where(p_raw < 0.0, 0.0, p_raw)
    total = float(p_raw.sum())
    if not np.isfinite(total) or total <= 0.0:
        raise NumericalBreakdownError("sampling probabilities do not sum to a positive value")
    return p_raw / total


def sampling_distribution(svd: SvdFactors, state: AsuraState) -> np.ndarray:
    """Row-sampling distribution of the current barrier state.

    Row ``x`` gets mass proportional to
    ``U(x)^T [(uI - A)^{-1} + (A - lI)^{-1}] U(x)``.
    """
    if state.a.shape[0] != svd.rank:
        raise InvalidInputError("state dimension does not match factor rank")
    _, q, gap_u, gap_l = _barrier_decomposition(state)
    b = 1.0 / gap_u + 1.0 / gap_l
    g = svd.u @ q
    p_raw = (g * g) @ (b / b.sum())
    return _normalize_probabilities(p_raw)


def asura_sample(
    svd: SvdFactors,
    cfg: AsuraConfig,
    n_unlabeled: int | None = None,
    capture_matrices: bool | None = None,
) -> tuple[SampleSet, AsuraTrace]:
    """Run the adaptive sampler on the rows of ``svd.u``.

    Parameters
    ----------
    svd : SvdFactors
        Thin SVD of the stacked design.
    cfg : AsuraConfig
    n_unlabeled : int, optional
        Number of leading rows forming the unlabeled block.  When given, the
        trace records, per iteration, the total sampling mass on that block
        and the matching block-weighted potential.
    capture_matrices : bool, optional
        Force per-iteration matrix capture on or off.  Defaults to the
        lemma-assertion setting.

    Returns
    -------
    (SampleSet, AsuraTrace)
    """
    u_mat = svd.u
    n, r = u_mat.shape
    gamma = cfg.gamma
    checks = cfg.checks_active(r)
    capture = checks if capture_matrices is None else capture_matrices
    if gamma >= 0.5:
        raise InvalidInputError(
            f"gamma={gamma:.4g} breaks the barrier update (needs gamma < 1/2); raise c0"
        )
    if checks and gamma > GAMMA_ASSERT_MAX + 1e-12:
        raise InvalidInputError(
            f"gamma={gamma:.4g} exceeds {GAMMA_ASSERT_MAX} with lemma assertions enabled; "
            "raise c0 or disable assert_lemmas"
        )
    if n_unlabeled is not None and not (0 <= n_unlabeled <= n):
        raise InvalidInputError(f"n_unlabeled must lie in [0, {n}], got {n_unlabeled}")

    cap = math.ceil(2.0 * r / gamma**2)
    budget = 8.0 * r / gamma
    rng = make_rng(cfg.rng_seed)

    a = np.zeros((r, r))
    u = 2.0 * r / gamma
    l = -u
    phi_cum = 0.0

    phis: list[float] = []
    us: list[float] = [u]
    ls: list[float] = [l]
    picks: list[int] = []
    pjs: list[float] = []
    wps: list[float] = []
    px1s: list[float] = []
    phids: list[float] = []
    mats: list[np.ndarray] = [a.copy()] if capture else []

    j = 0
    while (u - l) + phi_cum < budget:
        if j >= cap:
            raise NumericalBreakdownError(
                f"stopping rule failed to fire within the {cap}-iteration cap"
            )
        state = AsuraState(a=a, u=u, l=l, j=j, phi_cumsum=phi_cum)
        # The decomposition enforces strict containment; touching a barrier
        # raises rather than dividing by a vanishing gap.
        _, q, gap_u, gap_l = _barrier_decomposition(state)
        b = 1.0 / gap_u + 1.0 / gap_l
        phi = float(b.sum())

        g = u_mat @ q
        p = _normalize_probabilities((g * g) @ (b / phi))

        pick = _draw_index(rng, p)
        p_pick = float(p[pick])
        if p_pick <= 0.0:
            raise NumericalBreakdownError("sampled a zero-probability row")
        w_prime = gamma / (phi * p_pick)

        if n_unlabeled is not None:
            px1s.append(float(p[:n_unlabeled].sum()))
            g1 = g[:n_unlabeled]
            phids.append(float(np.einsum("ij,ij,j->", g1, g1, b)))

        phis.append(phi)
        picks.append(pick)
        pjs.append(p_pick)
        wps.append(w_prime)

        row = u_mat[pick]
        a = a + w_prime * np.outer(row, row)
        u += gamma / ((1.0 - 2.0 * gamma) * phi)
        l += gamma / ((1.0 + 2.0 * gamma) * phi)
        phi_cum += phi
        j += 1
        us.append(u)
        ls.append(l)
        if capture:
            mats.append(a.copy())

    m = j
    if m > cap:
        raise NumericalBreakdownError(f"iteration count {m} exceeded the cap {cap}")
    if checks:
        theta = np.linalg.eigvalsh(a)
        if theta.min() < l - EIG_TOL or theta.max() > u + EIG_TOL:
            raise BarrierViolationError("final matrix left the barrier window")

    mid = 0.5 * (u + l)
    phis_arr = np.asarray(phis)
    wps_arr = np.asarray(wps)
    weights = wps_arr / mid
    coefficients = (gamma / phis_arr) / mid

    sample = SampleSet(
        indices=np.asarray(picks, dtype=np.int64),
        weights=weights,
        coefficients=coefficients,
        gamma=gamma,
        u_final=u,
        l_final=l,
    )
    trace = AsuraTrace(
        gamma=gamma,
        rank=r,
        n_rows=n,
        n_unlabeled=n_unlabeled,
        phi_id=phis_arr,
        u=np.asarray(us),
        l=np.asarray(ls),
        sampled_index=np.asarray(picks, dtype=np.int64),
        p_j=np.asarray(pjs),
        w_prime=wps_arr,
        px1_sum=np.asarray(px1s) if n_unlabeled is not None else None,
        phi_d=np.asarray(phids) if n_unlabeled is not None else None,
        a_mats=np.asarray(mats) if capture else None,
    )
    return sample, trace


@dataclass
class WellBalancedReport:
    """Outcome of the post-run well-balancedness check.

    The conditioning value ``alpha_j * K_j`` is evaluated two ways per
    iteration: a closed form ``gamma * (u_j - l_j) / (u_m + l_m)`` read off the
    trace, and a brute-force sweep ``alpha_j * n * max_x p_x ||U(x)||^2`` over
    every row at the recorded state.  Both maxima are reported along with the
    worst absolute disagreement between the two routes.
    """

    min_eig: float
    max_eig: float
    spectral_ok: bool
    alpha_sum: float
    alpha_ok: bool
    kd_closed: np.ndarray
    kd_brute: np.ndarray
    kd_max_closed: float
    kd_max_brute: float
    kd_max_abs_diff: float
    kd_agree: bool
    kd_ok: bool
    gamma: float
    epsilon: float
    well_balanced: bool


def check_well_balanced(
    sample: SampleSet,
    trace: AsuraTrace,
    svd: SvdFactors,
    epsilon: float,
) -> WellBalancedReport:
    """Check the three well-balancedness conditions on a completed run.

    (i) the eigenvalues of the reweighted Gram matrix of the sampled rows lie
    in [3/4, 5/4]; (ii) the coefficients sum to at most 1024; (iii) every
    iteration's coefficient-conditioning product is at most ``512 gamma^2``.
    Requires a trace with captured matrices for the brute-force sweep.
    """
    if sample.m != trace.m or not np.array_equal(sample.indices, trace.sampled_index):
        raise InvalidInputError("sample and trace come from different runs")
    if trace.n_rows != svd.n or trace.rank != svd.rank:
        raise InvalidInputError("factors do not match the traced run")
    if sample.gamma is not None and abs(sample.gamma - trace.gamma) > 1e-15:
        raise InvalidInputError("sample and trace disagree on gamma")
    if sample.coefficients is None:
        raise InvalidInputError("sample carries no coefficients to check")
    if trace.a_mats is None:
        raise InsufficientTraceError(
            "trace lacks per-iteration matrices; rerun with matrix capture enabled"
        )

    gamma = trace.gamma
    n = svd.n
    u_mat = svd.u

    sel = u_mat[sample.indices]
    gram = (sel * sample.weights[:, None]).T @ sel
    eigs = np.linalg.eigvalsh(gram)
    min_eig, max_eig = float(eigs[0]), float(eigs[-1])
    spectral_ok = SPECTRAL_LO <= min_eig and max_eig <= SPECTRAL_HI

    alpha = sample.coefficients
    alpha_sum = float(alpha.sum())
    alpha_ok = alpha_sum <= ALPHA_SUM_BOUND

    denom = trace.u_final + trace.l_final
    kd_closed = gamma * (trace.u[:-1] - trace.l[:-1]) / denom

    lev = leverage_scores(svd)
    kd_brute = np.empty(trace.m)
    for j in range(trace.m):
        state = AsuraState(a=trace.a_mats[j], u=float(trace.u[j]), l=float(trace.l[j]), j=j)
        p = sampling_distribution(svd, state)
        kd_brute[j] = alpha[j] * n * float(np.max(p * lev))

    kd_max_closed = float(kd_closed.max()) if trace.m else 0.0
    kd_max_brute = float(kd_brute.max()) if trace.m else 0.0
    kd_max_abs_diff = float(np.max(np.abs(kd_closed - kd_brute))) if trace.m else 0.0
    kd_agree = kd_max_abs_diff <= KD_AGREEMENT_TOL
    kd_bound = KD_BOUND_COEFF * gamma**2
    kd_ok = kd_max_closed <= kd_bound and kd_max_brute <= kd_bound

    return WellBalancedReport(
        min_eig=min_eig,
        max_eig=max_eig,
        spectral_ok=spectral_ok,
        alpha_sum=alpha_sum,
        alpha_ok=alpha_ok,
        kd_closed=kd_closed,
        kd_brute=kd_brute,
        kd_max_closed=kd_max_closed,
        kd_max_brute=kd_max_brute,
        kd_max_abs_diff=kd_max_abs_diff,
        kd_agree=kd_agree,
        kd_ok=kd_ok,
        gamma=gamma,
        epsilon=float(epsilon),
        well_balanced=spectral_ok and alpha_ok and kd_ok,
    )


def sample_with_retry(
    svd: SvdFactors,
    cfg: AsuraConfig,
    n_unlabeled: int | None = None,
) -> tuple[SampleSet, AsuraTrace, int]:
    """Rerun the sampler with derived seeds until a run passes the balance check.

    The first attempt uses ``cfg.rng_seed`` directly, so a run that passes on
    attempt 1 is identical to a plain :func:`asura_sample` call.  Raises
    :class:`WellBalancedEventFailedError` carrying every per-attempt report if
    ``cfg.max_restarts`` attempts all fail.
    """
    reports = []
    for attempt in range(1, cfg.max_restarts + 1):
        seed = cfg.rng_seed if attempt == 1 else derive_seed(cfg.rng_seed, attempt)
        attempt_cfg = replace(cfg, rng_seed=seed)
        sample, trace = asura_sample(
            svd, attempt_cfg, n_unlabeled=n_unlabeled, capture_matrices=True
        )
        report = check_well_balanced(sample, trace, svd, cfg.epsilon)
        if report.well_balanced:
            return sample, trace, attempt
        reports.append(report)
    raise WellBalancedEventFailedError(
        f"no well-balanced run within {cfg.max_restarts} attempts", reports
    )
