"""Monte-Carlo simulation of the full chain and an exact truncated
stationary oracle.

The oracle caps the queue at q_max and blocks arrivals at the cap,
which keeps the kernel row-stochastic and biases utilization downward
predictably; tail mass at the cap is reported as the quality estimate.
The simulator draws four uniforms per step (action, completion,
arrival, activity move) in a fixed order so that runs are bit-exact
reproducible regardless of the path taken.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .chain import stationary_pmf_y
from .model import (
    Availability,
    NumericalFailure,
    PolicyX,
    ServerSpec,
    SystemState,
)

TAIL_WARN = 1e-6


@dataclass(frozen=True)
class TabularPolicyX:
    """Queue-indexed work probabilities, mostly for tests.

    table[min(q, L), w, s-1] with L = table.shape[0] - 1. Row 0 must
    rest at available states (empty queue) and busy rows for q >= 1
    must work (non-preemption).
    """

    table: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.table, dtype=float)
        if t.ndim != 3 or t.shape[0] < 2 or t.shape[1] != 2:
            raise ValueError("table must have shape (q_levels+1, 2, n_s) with q_levels >= 1")
        if np.any((t < 0.0) | (t > 1.0)):
            raise ValueError("work probabilities must lie in [0, 1]")
        if np.any(t[0, 0] != 0.0):
            raise ValueError("empty-queue rows must rest")
        if np.any(t[1:, 1] != 1.0):
            raise ValueError("busy rows must work")
        t.setflags(write=False)
        object.__setattr__(self, "table", t)

    def work_prob(self, s: int, w: Availability, q: int) -> float:
        return float(self.table[min(q, self.table.shape[0] - 1), int(w), s - 1])

    def policy_table(self) -> np.ndarray:
        return self.table


@dataclass(frozen=True)
class TruncatedPMF:
    """Stationary PMF of the queue-capped chain.

    State order: (s, A, 0) for s = 1..n_s, then for each q = 1..q_max
    the (s, A, q) block followed by the (s, B, q) block.
    """

    n_s: int
    q_max: int
    probs: np.ndarray
    tail_mass: float
    balance_residual: float

    @property
    def tail_warning(self) -> bool:
        return self.tail_mass > TAIL_WARN

    def index(self, s: int, w: Availability, q: int) -> int:
        n = self.n_s
        if q == 0:
            if w == Availability.B:
                raise ValueError("(B, 0) is not a state")
            return s - 1
        return n + (q - 1) * 2 * n + int(w) * n + (s - 1)

    def mass(self, s: int, w: Availability, q: int) -> float:
        return float(self.probs[self.index(s, w, q)])

    def empty_mass(self) -> float:
        return float(self.probs[: self.n_s].sum())

    def y_marginal(self) -> np.ndarray:
        """Mass per reduced state summed over q >= 1, in the fixed
        reduced order."""
        n = self.n_s
        body = self.probs[n:].reshape(self.q_max, 2 * n)
        return body.sum(axis=0)

    def y_totals(self) -> np.ndarray:
        """Mass per reduced state over the full queue support; empty
        queue counts toward the available states."""
        out = self.y_marginal().copy()
        out[: self.n_s] += self.probs[: self.n_s]
        return out

    def queue_marginal(self) -> np.ndarray:
        n = self.n_s
        out = np.empty(self.q_max + 1)
        out[0] = self.probs[:n].sum()
        out[1:] = self.probs[n:].reshape(self.q_max, 2 * n).sum(axis=1)
        return out


def _policy_table(theta) -> np.ndarray:
    table = theta.policy_table()
    return np.asarray(table, dtype=float)


def truncated_stationary(
    spec: ServerSpec,
    lam: float,
    theta,
    q_max: int,
    warn: bool = True,
) -> TruncatedPMF:
    """Exact stationary PMF of the queue-capped chain under theta.

    Arrivals are suppressed at q = q_max. The policy is consulted
    through theta.policy_table(); admissibility at q = 0 and at busy
    states is enforced structurally.
    """
    if q_max < 2:
        raise ValueError("q_max must be at least 2")
    if not 0.0 < lam < 1.0:
        raise ValueError("lam must lie in (0, 1)")
    n = spec.n_s
    table = _policy_table(theta)
    levels = table.shape[0] - 1
    if table.shape[2] != n:
        raise ValueError("policy table does not match spec")

    idx = np.arange(n)
    up = np.zeros((n, n))
    dn = np.zeros((n, n))
    up[idx, idx] = 1.0 - spec.rho_up
    up[idx[:-1], idx[:-1] + 1] = spec.rho_up[:-1]
    dn[idx, idx] = 1.0 - spec.rho_down
    dn[idx[1:], idx[1:] - 1] = spec.rho_down[1:]
    w_to_a = spec.mu[:, None] * up
    w_to_b = (1.0 - spec.mu)[:, None] * up

    def start(q, w):
        return n + (q - 1) * 2 * n + w * n if q >= 1 else 0

    blocks = []  # (row_start, col_start, dense n x n)

    # q = 0: rest forced, available only
    blocks.append((0, start(1, 0), lam * dn))
    blocks.append((0, 0, (1.0 - lam) * dn))

    for q in range(1, q_max + 1):
        lam_q = lam if q < q_max else 0.0
        p_work_a = table[min(q, levels), 0]
        for w in (0, 1):
            src = start(q, w)
            p = p_work_a if w == 0 else np.ones(n)
            pw = p[:, None]
            if lam_q > 0.0:
                blocks.append((src, start(q, 0), pw * w_to_a * lam_q))
                blocks.append((src, start(q + 1, 1), pw * w_to_b * lam_q))
            blocks.append((src, start(q - 1, 0), pw * w_to_a * (1.0 - lam_q)))
            blocks.append((src, start(q, 1), pw * w_to_b * (1.0 - lam_q)))
            if w == 0:
                pr = (1.0 - p)[:, None]
                if lam_q > 0.0:
                    blocks.append((src, start(q + 1, 0), pr * dn * lam_q))
                blocks.append((src, start(q, 0), pr * dn * (1.0 - lam_q)))

    size = n * (1 + 2 * q_max)
    rows = np.concatenate([r + np.repeat(idx, n) for r, _, _ in blocks])
    cols = np.concatenate([c + np.tile(idx, n) for _, c, _ in blocks])
    vals = np.concatenate([b.ravel() for _, _, b in blocks])
    keep = vals != 0.0
    rows, cols, vals = rows[keep], cols[keep], vals[keep]
    P = sp.coo_matrix((vals, (rows, cols)), shape=(size, size)).tocsr()

    # Solve balance with one row swapped for x_ref = 1, so x = pi / pi_ref
    # and a final normalization recovers pi.  A dense normalization row
    # would ruin sparsity and the solve blows up in memory once q_max
    # reaches the tens of thousands.  The reference state must carry
    # stationary mass; queue-dependent policies can make whole bands of
    # low-queue states transient, so a short damped power iteration
    # locates a safely recurrent state first.
    v = np.full(size, 1.0 / size)
    for _ in range(64):
        v = 0.5 * (v + v @ P)
    ref = int(np.argmax(v))

    off = cols != ref
    diag = np.delete(np.arange(size), ref)
    a_rows = np.concatenate([cols[off], diag, [ref]])
    a_cols = np.concatenate([rows[off], diag, [ref]])
    a_vals = np.concatenate([vals[off], -np.ones(size - 1), [1.0]])
    A = sp.coo_matrix((a_vals, (a_rows, a_cols)), shape=(size, size)).tocsc()
    rhs = np.zeros(size)
    rhs[ref] = 1.0
    with warnings.catch_warnings():
        warnings.simplefilter("error", spla.MatrixRankWarning)
        try:
            pi = spla.spsolve(A, rhs)
        except (RuntimeError, spla.MatrixRankWarning) as exc:
            raise NumericalFailure(f"truncated stationary solve failed: {exc}") from exc
    if not np.all(np.isfinite(pi)):
        raise NumericalFailure("truncated stationary solve produced non-finite values")
    total = pi.sum()
    if not np.isfinite(total) or total <= 0.0:
        raise NumericalFailure("truncated stationary solve produced non-normalizable mass")
    pi = pi / total
    pi = np.where(np.abs(pi) < 1e-15, 0.0, pi)
    if np.any(pi < -1e-12):
        raise NumericalFailure("truncated stationary solve produced negative mass")
    pi = np.clip(pi, 0.0, None)
    pi = pi / pi.sum()
    residual = float(np.max(np.abs(pi @ P - pi)))
    if residual > 1e-9 or abs(pi.sum() - 1.0) > 1e-10:
        raise NumericalFailure(f"truncated balance residual {residual:.3e} too large")

    tail = float(pi[n + (q_max - 1) * 2 * n :].sum())
    if warn and tail > TAIL_WARN:
        warnings.warn(
            f"tail mass {tail:.3e} at q_max={q_max} exceeds {TAIL_WARN}; increase q_max",
            stacklevel=2,
        )
    return TruncatedPMF(n_s=n, q_max=q_max, probs=pi, tail_mass=tail, balance_residual=residual)


def truncated_stationary_auto(
    spec: ServerSpec,
    lam: float,
    theta,
    q_max: int = 512,
    tail_tol: float = 1e-10,
    q_cap: int = 1 << 17,
) -> TruncatedPMF:
    """Double q_max until the tail mass drops below tail_tol."""
    q = q_max
    while True:
        pmf = truncated_stationary(spec, lam, theta, q, warn=False)
        if pmf.tail_mass < tail_tol:
            return pmf
        if q >= q_cap:
            raise NumericalFailure(
                f"tail mass {pmf.tail_mass:.3e} still above {tail_tol} at q_max={q}; "
                "the policy may not stabilize this arrival rate"
            )
        q *= 2


def truncated_utilization(pmf: TruncatedPMF, theta) -> float:
    """Stationary probability of working: sum over states of
    pi(x) theta(x)."""
    table = _policy_table(theta)
    levels = table.shape[0] - 1
    n = pmf.n_s
    body = pmf.probs[n:].reshape(pmf.q_max, 2, n)
    out = 0.0
    for q in range(1, pmf.q_max + 1):
        row = table[min(q, levels)]
        out += float(np.sum(body[q - 1] * row))
    return out


def truncated_service_rate(spec: ServerSpec, pmf: TruncatedPMF, theta) -> float:
    """Stationary completions per step: sum of pi(x) theta(x) mu(s)."""
    table = _policy_table(theta)
    levels = table.shape[0] - 1
    n = pmf.n_s
    body = pmf.probs[n:].reshape(pmf.q_max, 2, n)
    out = 0.0
    for q in range(1, pmf.q_max + 1):
        row = table[min(q, levels)]
        out += float(np.sum(body[q - 1] * row * spec.mu[None, :]))
    return out


def empty_queue_mass(pmf: TruncatedPMF) -> float:
    """Stationary probability of an empty queue."""
    return pmf.empty_mass()


def y_marginal_distance(
    spec: ServerSpec,
    lam: float,
    phi,
    q_max: int | None = None,
) -> float:
    """L1 distance between the reduced stationary PMF and the busy-queue
    marginal of the lifted chain's stationary PMF."""
    pi_y = stationary_pmf_y(spec, phi)
    theta = PolicyX(base=phi)
    if q_max is None:
        pmf = truncated_stationary_auto(spec, lam, theta)
    else:
        pmf = truncated_stationary(spec, lam, theta, q_max)
    return float(np.sum(np.abs(pi_y - pmf.y_marginal())))


@dataclass(frozen=True)
class SimConfig:
    horizon: int
    burn_in: int | None = None
    replications: int = 1
    seed: int = 0
    initial_state: SystemState | None = None
    trace: bool = False

    def __post_init__(self):
        burn = self.horizon // 10 if self.burn_in is None else self.burn_in
        if not (self.horizon > burn >= 0):
            raise ValueError("need horizon > burn_in >= 0")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        object.__setattr__(self, "burn_in", burn)
        if self.initial_state is None:
            object.__setattr__(self, "initial_state", SystemState(1, Availability.A, 0))


@dataclass(frozen=True)
class SimResult:
    """Pooled and per-replication time averages.

    y_marginal is the empirical PMF over reduced states restricted to
    steps with a nonempty queue but normalized by all counted steps, so
    it sums to 1 minus the empty-queue fraction.
    """

    empirical_utilization: float
    empirical_service_rate: float
    empty_queue_fraction: float
    queue_mean: float
    queue_max: int
    y_marginal: np.ndarray
    utilization_se: float
    service_rate_se: float
    rep_utilization: np.ndarray
    rep_service_rate: np.ndarray
    rep_empty_fraction: np.ndarray
    rep_queue_mean: np.ndarray
    rep_queue_max: np.ndarray
    trace: np.ndarray | None = None


def _se(values: np.ndarray) -> float:
    if values.size < 2:
        return float("nan")
    return float(values.std(ddof=1) / np.sqrt(values.size))


def simulate(spec: ServerSpec, lam: float, theta, cfg: SimConfig) -> SimResult:
    """Synchronous simulation of the full chain under theta.

    Per step, in order: action Bernoulli(theta(x)), completion
    Bernoulli(mu(s)) if working, arrival Bernoulli(lam), activity move.
    Uniforms are drawn for all four events regardless of the path.
    Replication r uses the stream SeedSequence(seed, spawn_key=(r,)).
    """
    if not 0.0 < lam < 1.0:
        raise ValueError("lam must lie in (0, 1)")
    n = spec.n_s
    table = _policy_table(theta)
    if table.shape[2] != n:
        raise ValueError("policy table does not match spec")
    levels = table.shape[0] - 1
    tbl = table.tolist()
    mu = spec.mu.tolist()
    r_up = spec.rho_up.tolist()
    r_dn = spec.rho_down.tolist()
    horizon, burn = cfg.horizon, cfg.burn_in
    counted = horizon - burn

    rep_util = np.empty(cfg.replications)
    rep_srv = np.empty(cfg.replications)
    rep_empty = np.empty(cfg.replications)
    rep_qmean = np.empty(cfg.replications)
    rep_qmax = np.empty(cfg.replications, dtype=np.int64)
    y_counts_total = np.zeros(2 * n)
    trace_rows = [] if cfg.trace else None

    for rep in range(cfg.replications):
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(cfg.seed, spawn_key=(rep,))))
        s, w, q = cfg.initial_state.s, int(cfg.initial_state.w), cfg.initial_state.q
        works = 0
        done_count = 0
        empty = 0
        q_sum = 0
        q_max_seen = 0
        y_counts = [0] * (2 * n)
        k = 0
        while k < horizon:
            chunk = min(1 << 16, horizon - k)
            u = rng.random((chunk, 4))
            for row in range(chunk):
                u_act, u_done, u_arr, u_move = u[row]
                counting = k >= burn
                if counting:
                    if q == 0:
                        empty += 1
                    else:
                        y_counts[w * n + s - 1] += 1
                    q_sum += q
                    if q > q_max_seen:
                        q_max_seen = q
                p = tbl[q if q < levels else levels][w][s - 1]
                work = u_act < p
                done = work and (u_done < mu[s - 1])
                arrival = u_arr < lam
                if counting:
                    if work:
                        works += 1
                    if done:
                        done_count += 1
                if trace_rows is not None:
                    trace_rows.append((k, s, w, q, int(work), int(arrival), int(done)))
                q = q - (1 if done else 0) + (1 if arrival else 0)
                w = 1 if (work and not done) else 0
                if work:
                    if u_move < r_up[s - 1]:
                        s += 1
                elif u_move < r_dn[s - 1]:
                    s -= 1
                k += 1
        rep_util[rep] = works / counted
        rep_srv[rep] = done_count / counted
        rep_empty[rep] = empty / counted
        rep_qmean[rep] = q_sum / counted
        rep_qmax[rep] = q_max_seen
        y_counts_total += np.asarray(y_counts, dtype=float) / counted

    return SimResult(
        empirical_utilization=float(rep_util.mean()),
        empirical_service_rate=float(rep_srv.mean()),
        empty_queue_fraction=float(rep_empty.mean()),
        queue_mean=float(rep_qmean.mean()),
        queue_max=int(rep_qmax.max()),
        y_marginal=y_counts_total / cfg.replications,
        utilization_se=_se(rep_util),
        service_rate_se=_se(rep_srv),
        rep_utilization=rep_util,
        rep_service_rate=rep_srv,
        rep_empty_fraction=rep_empty,
        rep_queue_mean=rep_qmean,
        rep_queue_max=rep_qmax,
        trace=np.asarray(trace_rows, dtype=np.int64) if trace_rows is not None else None,
    )


@dataclass(frozen=True)
class HittingStats:
    """Empirical return-time summary for a single target state."""

    mean: float
    count: int
    censored: bool
    min_time: int
    max_time: int


def hitting_time_stats(spec: ServerSpec, lam: float, theta, target: SystemState, cfg: SimConfig) -> HittingStats:
    """Mean empirical return time to the target state.

    Trajectories start at the target so successive visits are renewal
    cycles; burn-in is ignored. censored is set when some replication
    never returns within its horizon.
    """
    n = spec.n_s
    table = _policy_table(theta)
    levels = table.shape[0] - 1
    tbl = table.tolist()
    mu = spec.mu.tolist()
    r_up = spec.rho_up.tolist()
    r_dn = spec.rho_down.tolist()
    t_s, t_w, t_q = target.s, int(target.w), target.q

    gaps = []
    censored = False
    for rep in range(cfg.replications):
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(cfg.seed, spawn_key=(rep,))))
        s, w, q = t_s, t_w, t_q
        last = 0
        seen = False
        k = 0
        while k < cfg.horizon:
            chunk = min(1 << 16, cfg.horizon - k)
            u = rng.random((chunk, 4))
            for row in range(chunk):
                u_act, u_done, u_arr, u_move = u[row]
                p = tbl[q if q < levels else levels][w][s - 1]
                work = u_act < p
                done = work and (u_done < mu[s - 1])
                arrival = u_arr < lam
                q = q - (1 if done else 0) + (1 if arrival else 0)
                w = 1 if (work and not done) else 0
                if work:
                    if u_move < r_up[s - 1]:
                        s += 1
                elif u_move < r_dn[s - 1]:
                    s -= 1
                k += 1
                if s == t_s and w == t_w and q == t_q:
                    gaps.append(k - last)
                    last = k
                    seen = True
        if not seen:
            censored = True

    if not gaps:
        return HittingStats(mean=float("nan"), count=0, censored=True, min_time=0, max_time=0)
    arr = np.asarray(gaps, dtype=float)
    return HittingStats(
        mean=float(arr.mean()),
        count=len(gaps),
        censored=censored,
        min_time=int(arr.min()),
        max_time=int(arr.max()),
    )
