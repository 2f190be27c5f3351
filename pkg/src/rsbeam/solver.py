"""Generalized power iteration for the smoothed sum-rate objective.

The first-order optimality condition of the smoothed objective is an
eigenvector-dependent eigenvalue problem B(f)^{-1} A(f) f = lambda(f) f,
where A and B are weighted sums of the per-term quotient matrices (soft
minimum weights on the min-combined terms, unit weights on the summed
terms) normalized by their own quadratic forms, and log2 lambda(f) equals
the objective itself. The solver repeats f <- B^{-1} A f / ||.|| from a
matched-filter start until the iterate stops moving, escalating the
smoothing parameter alpha and restarting whenever a round fails to settle.

The scalar prefactors that the optimality condition attaches to A and B
cancel inside the normalized update direction and would overflow as raw
products for many users, so the update drops them and the eigenvalue is
tracked separately in the log domain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .messages import (
    PrecodingProblem,
    StackLayout,
    StackedPrecoder,
    as_stack_vector,
    check_unit_norm,
)
from .quotients import TermGroup, rsma_terms
from .rates import RateBreakdown, exact_breakdown, objective_J, softmin


@dataclass(frozen=True)
class SolverConfig:
    """Iteration and smoothing-schedule knobs.

    alpha starts at ``alpha_init_low_snr`` below ``snr_threshold_db`` and at
    ``alpha_init_high_snr`` otherwise (or at ``alpha_init_override`` when
    set); each round runs at most ``max_iters_per_alpha`` iterations and a
    failed round restarts from the initial point with alpha increased by
    ``alpha_step``, up to the ``alpha_max`` safety cap.
    """

    epsilon: float = 1e-5
    max_iters_per_alpha: int = 50
    alpha_init_low_snr: float = 0.1
    alpha_init_high_snr: float = 0.5
    snr_threshold_db: float = 15.0
    alpha_step: float = 0.5
    alpha_max: float = 10.0
    alpha_init_override: float | None = None
    init_strategy: str = "mrt"

    def __post_init__(self):
        if self.epsilon <= 0.0:
            raise ValueError("epsilon must be positive")
        if self.max_iters_per_alpha < 1:
            raise ValueError("max_iters_per_alpha must be >= 1")
        if self.alpha_step <= 0.0:
            raise ValueError("alpha_step must be positive")
        if self.alpha_max < self.initial_alpha(0.0) or self.alpha_max < (
            self.initial_alpha(1e9)
        ):
            raise ValueError("alpha_max must be >= the initial alpha")
        if self.init_strategy not in ("mrt", "provided"):
            raise ValueError("init_strategy must be 'mrt' or 'provided'")

    def initial_alpha(self, snr_db: float) -> float:
        if self.alpha_init_override is not None:
            return float(self.alpha_init_override)
        if snr_db < self.snr_threshold_db:
            return self.alpha_init_low_snr
        return self.alpha_init_high_snr


@dataclass(frozen=True)
class GpiReport:
    """Solver outcome: the converged (or best-seen) stack, its objective and
    eigenvalue, the true-min rate breakdown, and full per-iteration traces."""

    fbar_star: StackedPrecoder
    objective_bits: float
    lambda_log2: float
    rate_breakdown: RateBreakdown
    residual_trace: tuple[float, ...]
    objective_trace: tuple[float, ...]
    alpha_history: tuple[float, ...]
    iterations: int
    converged: bool

    @property
    def alpha_final(self) -> float:
        return self.alpha_history[-1]


def softmin_weights(ratios: Sequence[float], alpha: float) -> np.ndarray:
    """Soft-minimum weights over quotient ratios: the softmax of
    -log2(ratio)/alpha, shifted for stability. Nonnegative, summing to 1,
    concentrating on the smallest ratio as alpha -> 0."""
    if alpha <= 0.0:
        raise ValueError("alpha must be positive")
    r = np.asarray(ratios, dtype=float)
    scores = -np.log2(r) / alpha
    scores -= scores.max()
    w = np.exp(scores)
    return w / w.sum()


class _PackedTerms:
    """All quotient pairs stacked for vectorized evaluation."""

    def __init__(self, terms: Sequence[TermGroup]):
        pairs = [p for g in terms for p in g.pairs]
        self.a = np.stack([p.a_blocks for p in pairs])  # (P, M, N, N)
        self.b = np.stack([p.b_blocks for p in pairs])
        self.num_blocks = self.a.shape[1]
        self.block_size = self.a.shape[2]
        self.groups: list[tuple[str, slice]] = []
        start = 0
        for g in terms:
            stop = start + len(g.pairs)
            self.groups.append((g.combine, slice(start, stop)))
            start = stop

    @property
    def layout(self) -> StackLayout:
        return StackLayout(self.block_size, self.num_blocks)

    def quadratics(self, fbar: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        vb = fbar.reshape(self.num_blocks, self.block_size)
        qa = np.einsum("mi,pmij,mj->p", vb.conj(), self.a, vb).real
        qb = np.einsum("mi,pmij,mj->p", vb.conj(), self.b, vb).real
        return qa, qb

    def objective_log2(
        self, qa: np.ndarray, qb: np.ndarray, alpha: float
    ) -> float:
        rates = np.log2(qa / qb)
        total = 0.0
        for combine, sl in self.groups:
            if combine == "min":
                total += softmin(rates[sl], alpha)
            else:
                total += float(rates[sl].sum())
        return total

    def weights(
        self, qa: np.ndarray, qb: np.ndarray, alpha: float
    ) -> np.ndarray:
        w = np.ones(self.a.shape[0])
        for combine, sl in self.groups:
            if combine == "min":
                w[sl] = softmin_weights(qa[sl] / qb[sl], alpha)
        return w

    def kkt_operators(
        self, fbar: np.ndarray, alpha: float
    ) -> tuple[np.ndarray, np.ndarray]:
        qa, qb = self.quadratics(fbar)
        w = self.weights(qa, qb, alpha)
        a_dir = np.einsum("p,pmij->mij", w / qa, self.a)
        b_dir = np.einsum("p,pmij->mij", w / qb, self.b)
        return a_dir, b_dir


def _coerce_packed(problem) -> _PackedTerms:
    if isinstance(problem, _PackedTerms):
        return problem
    if isinstance(problem, PrecodingProblem):
        return _PackedTerms(rsma_terms(problem))
    return _PackedTerms(tuple(problem))


def build_kkt_operators(fbar, problem, alpha: float):
    """Direction matrices (A, B) of the optimality condition at ``fbar`` as
    (M, N, N) block stacks, scalar prefactors dropped. ``problem`` may be a
    PrecodingProblem or an explicit sequence of TermGroups."""
    packed = _coerce_packed(problem)
    v = as_stack_vector(fbar)
    check_unit_norm(v)
    return packed.kkt_operators(v, alpha)


def lambda_log2(fbar, problem, alpha: float) -> float:
    """log2 of the condition's eigenvalue at ``fbar``, evaluated entirely in
    the log domain (the raw product form overflows for many users). Equals
    the smoothed objective for every unit-norm stack."""
    packed = _coerce_packed(problem)
    v = as_stack_vector(fbar)
    check_unit_norm(v)
    qa, qb = packed.quadratics(v)
    return packed.objective_log2(qa, qb, alpha)


def _canonical_phase(fbar: np.ndarray) -> np.ndarray:
    """Rotate the global phase so the largest-magnitude entry is real
    nonnegative; makes the residual well-defined despite the phase-ambiguous
    linear solve."""
    idx = int(np.argmax(np.abs(fbar)))
    pivot = fbar[idx]
    mag = abs(pivot)
    if mag == 0.0:
        return fbar
    return fbar * (pivot.conj() / mag)


def _step_packed(
    packed: _PackedTerms, fbar: np.ndarray, alpha: float
) -> np.ndarray:
    a_dir, b_dir = packed.kkt_operators(fbar, alpha)
    vb = fbar.reshape(packed.num_blocks, packed.block_size)
    rhs = np.einsum("mij,mj->mi", a_dir, vb)
    out = np.empty_like(rhs)
    for m in range(packed.num_blocks):
        # each block of B is Hermitian positive definite (>= snr_inv * I)
        out[m] = cho_solve(cho_factor(b_dir[m], lower=True), rhs[m])
    y = out.reshape(-1)
    y /= np.linalg.norm(y)
    return _canonical_phase(y)


def gpi_step(fbar_prev, problem, alpha: float) -> np.ndarray:
    """One normalized power-iteration update B^{-1} A f / ||B^{-1} A f||,
    solved block-by-block by Cholesky, with the global phase canonicalized."""
    packed = _coerce_packed(problem)
    v = as_stack_vector(fbar_prev)
    check_unit_norm(v)
    return _step_packed(packed, v, alpha)


@dataclass
class _GpiRun:
    fbar: np.ndarray
    converged: bool
    residual_trace: list[float] = field(default_factory=list)
    objective_trace: list[float] = field(default_factory=list)
    alpha_history: list[float] = field(default_factory=list)


def _run_schedule(
    packed: _PackedTerms,
    config: SolverConfig,
    init_vec: np.ndarray,
    alpha_init: float,
    fallback_metric: Callable[[np.ndarray], float],
) -> _GpiRun:
    """Algorithm loop: iterate at fixed alpha; on non-convergence within
    the round budget, restart from the initial point with a larger alpha.
    If alpha passes the cap, return the non-converged candidate whose
    fallback metric (true sum rate) is largest."""
    run = _GpiRun(fbar=init_vec, converged=False)
    candidates: list[np.ndarray] = []
    alpha = alpha_init
    while alpha <= config.alpha_max + 1e-12:
        fbar = _canonical_phase(init_vec.copy())
        best_j = -math.inf
        best_vec = fbar
        for _ in range(config.max_iters_per_alpha):
            nxt = _step_packed(packed, fbar, alpha)
            residual = float(np.linalg.norm(nxt - fbar))
            fbar = nxt
            qa, qb = packed.quadratics(fbar)
            obj = packed.objective_log2(qa, qb, alpha)
            run.residual_trace.append(residual)
            run.objective_trace.append(obj)
            run.alpha_history.append(alpha)
            if obj > best_j:
                best_j = obj
                best_vec = fbar
            if residual < config.epsilon:
                run.fbar = fbar
                run.converged = True
                return run
        candidates.append(best_vec)
        alpha += config.alpha_step
    run.fbar = max(candidates, key=fallback_metric)
    return run


def _finish_report(
    run: _GpiRun,
    layout: StackLayout,
    objective_bits: float,
    lam: float,
    breakdown: RateBreakdown,
) -> GpiReport:
    return GpiReport(
        fbar_star=StackedPrecoder(run.fbar, layout),
        objective_bits=objective_bits,
        lambda_log2=lam,
        rate_breakdown=breakdown,
        residual_trace=tuple(run.residual_trace),
        objective_trace=tuple(run.objective_trace),
        alpha_history=tuple(run.alpha_history),
        iterations=len(run.residual_trace),
        converged=run.converged,
    )


def mrt_initial_stack(problem: PrecodingProblem) -> np.ndarray:
    """Matched-filter starting point: the common block points at the user
    sum of channel estimates, each partial common at its group sum, each
    private at its own user; all blocks get equal power."""
    msgset = problem.msgset
    n = problem.num_antennas
    blocks = np.zeros((msgset.num_messages, n), dtype=complex)

    def _unit(v: np.ndarray, fallback: np.ndarray) -> np.ndarray:
        nrm = np.linalg.norm(v)
        if nrm < 1e-12:
            v = fallback
            nrm = np.linalg.norm(v)
        if nrm < 1e-12:
            v = np.zeros(n, dtype=complex)
            v[0] = 1.0
            return v
        return v / nrm

    h_hats = [s.h_hat for s in problem.states]
    blocks[0] = _unit(np.sum(h_hats, axis=0), h_hats[0])
    for i, members in enumerate(msgset.groups):
        sel = [h_hats[k] for k in sorted(members)]
        blocks[msgset.partial_message(i)] = _unit(np.sum(sel, axis=0), sel[0])
    for k in range(msgset.num_users):
        blocks[msgset.private_message(k)] = _unit(h_hats[k], h_hats[k])
    fbar = blocks.reshape(-1)
    return fbar / np.linalg.norm(fbar)


def solve(
    problem: PrecodingProblem,
    config: SolverConfig | None = None,
    init: StackedPrecoder | np.ndarray | None = None,
) -> GpiReport:
    """Optimize the rate-splitting stack for one problem instance.

    Starts from the matched-filter stack unless ``init`` is given, runs the
    power iteration under the alpha escalation schedule, and reports the
    result with the true-min rate breakdown, the smoothed objective, the
    eigenvalue in bits, and the per-iteration traces. ``converged`` is
    False when every alpha up to the cap ran out of iterations, in which
    case the returned stack is the candidate with the best true sum rate.
    """
    config = config or SolverConfig()
    packed = _PackedTerms(rsma_terms(problem))
    if init is not None:
        init_vec = as_stack_vector(init).astype(complex)
        check_unit_norm(init_vec)
    else:
        init_vec = mrt_initial_stack(problem)
    alpha0 = config.initial_alpha(problem.snr_db)

    def _metric(vec: np.ndarray) -> float:
        return exact_breakdown(vec, problem).sum_rate

    run = _run_schedule(packed, config, init_vec, alpha0, _metric)
    final_alpha = run.alpha_history[-1]
    objective_bits = objective_J(run.fbar, problem, final_alpha)
    lam = lambda_log2(run.fbar, packed, final_alpha)
    breakdown = exact_breakdown(run.fbar, problem)
    return _finish_report(run, problem.layout, objective_bits, lam, breakdown)


def solve_terms(
    terms: Sequence[TermGroup],
    config: SolverConfig,
    init_vec: np.ndarray,
    alpha_init: float,
    objective_fn: Callable[[np.ndarray, float], float],
    breakdown_fn: Callable[[np.ndarray], RateBreakdown],
) -> GpiReport:
    """Run the same engine on an explicit term-group objective (used by the
    no-rate-splitting design, which optimizes a K-block sum-only stack)."""
    packed = _PackedTerms(tuple(terms))
    check_unit_norm(init_vec)

    def _metric(vec: np.ndarray) -> float:
        return breakdown_fn(vec).sum_rate

    run = _run_schedule(packed, config, init_vec, alpha_init, _metric)
    final_alpha = run.alpha_history[-1]
    lam = lambda_log2(run.fbar, packed, final_alpha)
    return _finish_report(
        run,
        packed.layout,
        objective_fn(run.fbar, final_alpha),
        lam,
        breakdown_fn(run.fbar),
    )


def extract_precoders(
    fbar_star, layout: StackLayout
) -> tuple[np.ndarray, np.ndarray]:
    """Unstack a solution into its per-message precoders and power fractions.

    Returns the (M, N) block matrix and the length-M vector of squared block
    norms; for a unit stack the fractions sum to 1, and a zero common
    fraction means the solution fell back to private-only transmission.
    """
    v = as_stack_vector(fbar_star)
    blocks = layout.split(v)
    fractions = np.sum(np.abs(blocks) ** 2, axis=1)
    return blocks, fractions
