"""Closed-form false-positive model for location recovery, plus oracles.

The recovery side tests every (node, fragment) pair of a candidate chain
against the location filter. Pairs that were never embedded but test
positive ("false pairs") can combine into an alternative admissible
segment sequence, making provenance ambiguous. This module computes the
probability of that event two ways:

* a closed-form route: an exact occupancy distribution for the number of
  lit filter bits, a per-pair collision probability conditioned on it, and
  a fitted histogram of per-sequence critical pairs;
* an oracle route: the same pipeline but with the critical-pair histogram
  obtained by exhaustive enumeration of admissible sequences.

A "critical pair" of a sequence is a false pair that already yields an
alternative admissible sequence when it is the only extra recovery. With
J critical pairs, the number of false-pair subsets of size j that contain
at least one of them is sum_{l=1..J} C(F-l, j-1) over a pool of F false
pairs; summed against the histogram this gives the subset totals C_j, and
weighting by collision probabilities gives the conditional ambiguity
probability. The fitted histogram can overshoot the sequence count, so the
conditional value is clamped into [0, 1] and the clamp is flagged.

Counting conventions: C(n, 0) = 1 for every n including negatives,
C(n, k) = 0 when k < 0, k > n >= 0, or n < 0 with k > 0; empty sums are 0.
The fitted histogram terms additionally treat their bracketed sums as 1
when the even order is 0 (the odd-order fallthrough).

Sequence-length modes: "h" models chains of h embedded pairs (default);
"h_plus_1" lengthens sequences by the receiving roadside unit's own
fragment. The false-pair pool always scales with the modeled sequence
length so both modes stay self-consistent with the enumeration oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

from .segments import ResourceCapError, _walk, count_valid_sequences

__all__ = [
    "BackendComparison",
    "FpBreakdown",
    "ModelParams",
    "binom",
    "collision_probabilities",
    "compare_backends",
    "conditional_fp_probability",
    "count_critical_pairs",
    "critical_pair_histogram",
    "critical_pair_histogram_closed",
    "critical_pair_range",
    "even_full_coverage_term",
    "even_partial_coverage_term",
    "fp_probability",
    "fp_subset_count",
    "fp_subset_totals",
    "occupancy_pmf",
    "occupancy_pmf_vector",
]

BACKENDS = ("closed_form", "oracle")
SEQ_LEN_MODES = ("h", "h_plus_1")


def binom(n: int, k: int) -> int:
    """Binomial coefficient under the conventions documented above."""
    if k < 0:
        return 0
    if k == 0:
        return 1
    if n < 0 or k > n:
        return 0
    return math.comb(n, k)


@dataclass(frozen=True)
class ModelParams:
    """Inputs to the false-positive model."""

    m2: int
    k2: int
    h: int
    delta: int
    seq_len_mode: str = "h"

    def __post_init__(self):
        if self.m2 < 1:
            raise ValueError(f"m2={self.m2} must be >= 1")
        if self.k2 < 1:
            raise ValueError(f"k2={self.k2} must be >= 1")
        if self.h < 1:
            raise ValueError(f"h={self.h} must be >= 1")
        if self.delta < 1:
            raise ValueError(f"delta={self.delta} must be >= 1")
        if self.seq_len_mode not in SEQ_LEN_MODES:
            raise ValueError(f"seq_len_mode {self.seq_len_mode!r} not in {SEQ_LEN_MODES}")

    @property
    def seq_len(self) -> int:
        return self.h if self.seq_len_mode == "h" else self.h + 1

    @property
    def false_pool(self) -> int:
        """Pairs tested but never embedded: seq_len * (delta - 1)."""
        return self.seq_len * (self.delta - 1)


# ---------------------------------------------------------------------------
# occupancy of the location filter


@lru_cache(maxsize=256)
def _occupancy_exact(m2: int, throws: int) -> tuple[tuple[int, ...], int]:
    """Exact occupancy numerators over alpha = 1..min(m2, throws).

    Pr(alpha) = C(m2, alpha) * sum_g (-1)^g C(alpha, g) (alpha-g)^throws
    divided by m2^throws; the alternating sum counts surjections of the
    throws onto a fixed alpha-subset of bits.
    """
    top = min(m2, throws)
    powers = [pow(j, throws) for j in range(top + 1)]
    nums = []
    for alpha in range(1, top + 1):
        s = 0
        for g in range(alpha + 1):
            term = math.comb(alpha, g) * powers[alpha - g]
            s += -term if g & 1 else term
        nums.append(math.comb(m2, alpha) * s)
    den = pow(m2, throws)
    if sum(nums) != den:
        raise AssertionError("occupancy numerators do not sum to the denominator")
    return tuple(nums), den


def occupancy_pmf_vector(m2: int, k2: int, h: int) -> tuple[float, ...]:
    """Pr(alpha lit bits) for alpha = 1..min(m2, k2*h), index alpha-1."""
    if m2 < 1 or k2 < 1 or h < 1:
        raise ValueError("m2, k2 and h must all be >= 1")
    nums, den = _occupancy_exact(m2, k2 * h)
    return tuple(float(Fraction(n, den)) for n in nums)


def occupancy_pmf(m2: int, k2: int, h: int, alpha: int) -> float:
    """Probability that exactly ``alpha`` filter bits are lit."""
    top = min(m2, k2 * h)
    if not 1 <= alpha <= top:
        raise ValueError(f"alpha={alpha} outside [1, {top}]")
    return occupancy_pmf_vector(m2, k2, h)[alpha - 1]


def collision_probabilities(alpha: int, m2: int, k2: int) -> tuple[float, float]:
    """(hit, miss) probability of one never-embedded pair given alpha lit bits."""
    if not 0 <= alpha <= m2:
        raise ValueError(f"alpha={alpha} outside [0, {m2}]")
    hit = (alpha / m2) ** k2
    return hit, 1.0 - hit


# ---------------------------------------------------------------------------
# critical pairs per sequence: exact enumeration


def count_critical_pairs(sequence: tuple[int, ...], num_segments: int) -> int:
    """Critical pairs of one admissible sequence.

    A substitution at one position stays admissible iff the new value still
    fits both neighbors, so each position admits at most one alternative
    and only local checks are needed.
    """
    n = len(sequence)
    j = 0
    for i in range(1, n):
        prev = sequence[i - 1]
        cur = sequence[i]
        if i + 1 < n:
            nxt = sequence[i + 1]
            lo = max(prev, nxt - 1)
            hi = min(prev + 1, nxt)
        else:
            lo, hi = prev, prev + 1
        for v in range(lo, hi + 1):
            if v != cur and 1 <= v <= num_segments:
                j += 1
    return j


@lru_cache(maxsize=64)
def critical_pair_histogram(
    num_segments: int, seq_len: int, cap: int = 10_000_000
) -> tuple[int, ...]:
    """Oracle histogram f[J-1] = #sequences with J critical pairs.

    Index runs over J = 1..2*num_segments-2. Sequences with J = 0 exist
    only for single-position or single-segment inputs and are simply not
    recorded; they can never create ambiguity.
    """
    total = count_valid_sequences(num_segments, seq_len)
    if total > cap:
        raise ResourceCapError(f"{total} sequences exceed the oracle cap of {cap}")
    hist = [0] * max(0, 2 * num_segments - 2)
    for seq in _walk(num_segments, seq_len):
        j = count_critical_pairs(seq, num_segments)
        if j == 0:
            if num_segments > 1 and seq_len > 1:
                raise AssertionError(f"sequence {seq} has no critical pair")
            continue
        hist[j - 1] += 1
    return tuple(hist)


def critical_pair_range(delta: int) -> range:
    """Admissible J values; empty when a single fragment leaves no slack."""
    if delta < 1:
        raise ValueError(f"delta={delta} must be >= 1")
    return range(1, 2 * delta - 1)


# ---------------------------------------------------------------------------
# critical pairs per sequence: fitted closed form


def even_full_coverage_term(j_even: int, delta: int, h: int) -> int:
    """Fitted count for sequences that reach every fragment (even order).

    Order 0 is the odd-order fallthrough: its bracketed sums are defined
    as 1.
    """
    _check_even_order(j_even)
    if delta < 1:
        raise ValueError(f"delta={delta} must be >= 1")
    half = j_even // 2
    if j_even == 0:
        first = 1
    else:
        first = sum(binom(half - 1, i) * binom(delta - half - 1, i) for i in range(half))
    second = sum(binom(half, i) * binom(h - delta - half + 1, i) for i in range(half + 1))
    return first * second


def even_partial_coverage_term(j_even: int, reach: int, h: int) -> int:
    """Fitted count for sequences whose highest fragment is ``reach``."""
    _check_even_order(j_even)
    if reach < 1:
        raise ValueError(f"reach={reach} must be >= 1")
    half = j_even // 2
    if j_even == 0:
        return 1
    first = sum(binom(half - 1, i) * binom(reach - half - 1, i) for i in range(half))
    second = sum(binom(half - 1, i) * binom(h - reach - half + 1, i) for i in range(half))
    return first * second


def _check_even_order(j_even: int) -> None:
    # orders past what a reach can support are legal: their binomials
    # vanish (or collapse to the fit's constant tail) on their own
    if j_even % 2:
        raise ValueError(f"order {j_even} is odd; only even orders are defined")
    if j_even < 0:
        raise ValueError(f"order {j_even} must be >= 0")


@lru_cache(maxsize=64)
def critical_pair_histogram_closed(delta: int, h: int) -> tuple[int, ...]:
    """Fitted histogram over J = 1..2*delta-2; odd J maps to order 2*(J//2).

    This is a regression-style fit, not a count: it can disagree with the
    enumeration oracle (including overshooting the number of admissible
    sequences), which is why downstream values are clamped and the backend
    comparison is reported rather than asserted.
    """
    if delta < 1:
        raise ValueError(f"delta={delta} must be >= 1")
    if h < 1:
        raise ValueError(f"h={h} must be >= 1")
    out = []
    for j in critical_pair_range(delta):
        order = 2 * (j // 2)
        val = even_full_coverage_term(order, delta, h)
        val += sum(even_partial_coverage_term(order, reach, h) for reach in range(1, delta))
        out.append(val)
    return tuple(out)


# ---------------------------------------------------------------------------
# subset counting and the conditional ambiguity probability


def fp_subset_count(j: int, critical: int, pool: int) -> int:
    """Size-j subsets of ``pool`` false pairs hitting >= 1 of ``critical``.

    Computed as the telescoping sum_{l=1..critical} C(pool-l, j-1); equal
    to C(pool, j) - C(pool-critical, j).
    """
    if j < 1:
        raise ValueError(f"subset size j={j} must be >= 1")
    if critical < 0 or pool < 0 or critical > pool:
        raise ValueError(f"critical={critical} outside [0, pool={pool}]")
    return sum(binom(pool - l, j - 1) for l in range(1, critical + 1))


@lru_cache(maxsize=64)
def fp_subset_totals(
    f_histogram: tuple[int, ...], delta: int, seq_len: int
) -> tuple[int, ...]:
    """C_j for j = 1..pool: histogram-weighted ambiguous subset counts.

    Reorders the double sum into suffix sums of the histogram so each j
    costs one pass over l.
    """
    pool = seq_len * (delta - 1)
    suffix = [0] * (len(f_histogram) + 2)
    for j in range(len(f_histogram), 0, -1):
        suffix[j] = suffix[j + 1] + f_histogram[j - 1]
    totals = []
    for j in range(1, pool + 1):
        totals.append(
            sum(binom(pool - l, j - 1) * suffix[l] for l in range(1, len(f_histogram) + 1))
        )
    return tuple(totals)


def conditional_fp_probability(
    alpha: int,
    params: ModelParams,
    subset_totals: tuple[int, ...],
    n_sequences: int,
) -> tuple[float, bool]:
    """Ambiguity probability given ``alpha`` lit bits, with a clamp flag.

    (1 / |P|) * sum_j hit^j * miss^(F-j) * C_j, clamped into [0, 1].
    """
    hit, miss = collision_probabilities(alpha, params.m2, params.k2)
    pool = params.false_pool
    if len(subset_totals) != pool:
        raise ValueError(f"{len(subset_totals)} subset totals for a pool of {pool}")
    if n_sequences < 1:
        raise ValueError("n_sequences must be >= 1")
    terms = []
    hit_pow = 1.0
    miss_pows = [1.0] * (pool + 1)
    for i in range(1, pool + 1):
        miss_pows[i] = miss_pows[i - 1] * miss
    for j in range(1, pool + 1):
        hit_pow *= hit
        c = subset_totals[j - 1]
        if not c:
            continue
        try:
            terms.append(hit_pow * miss_pows[pool - j] * float(c))
        except OverflowError:
            if hit_pow == 0.0 or miss_pows[pool - j] == 0.0:
                continue
            log_term = (
                math.log(hit_pow) + math.log(miss_pows[pool - j]) + math.log(c)
            )
            terms.append(math.exp(log_term) if log_term > -745.0 else 0.0)
    raw = math.fsum(terms) / n_sequences
    if raw > 1.0:
        return 1.0, True
    if raw < 0.0:
        return 0.0, True
    return raw, False


@dataclass(frozen=True)
class FpBreakdown:
    """Full evaluation trail of one false-positive probability."""

    params: ModelParams
    backend: str
    n_sequences: int
    occupancy: tuple[float, ...]
    critical_histogram: tuple[int, ...]
    subset_totals: tuple[int, ...]
    conditional: tuple[float, ...]
    total: float
    clamped: bool


def fp_probability(params: ModelParams, backend: str = "closed_form") -> FpBreakdown:
    """Unconditional ambiguity probability, averaged over the occupancy law."""
    if backend not in BACKENDS:
        raise ValueError(f"backend {backend!r} not in {BACKENDS}")
    if backend == "closed_form":
        hist = critical_pair_histogram_closed(params.delta, params.h)
    else:
        hist = critical_pair_histogram(params.delta, params.seq_len)
    n_seq = count_valid_sequences(params.delta, params.seq_len)
    totals = fp_subset_totals(hist, params.delta, params.seq_len)
    occ = occupancy_pmf_vector(params.m2, params.k2, params.h)
    conditional = []
    clamped_any = False
    for alpha in range(1, len(occ) + 1):
        value, clamped = conditional_fp_probability(alpha, params, totals, n_seq)
        conditional.append(value)
        clamped_any = clamped_any or clamped
    total = math.fsum(p * c for p, c in zip(occ, conditional))
    total = min(1.0, max(0.0, total))
    return FpBreakdown(
        params=params,
        backend=backend,
        n_sequences=n_seq,
        occupancy=occ,
        critical_histogram=hist,
        subset_totals=totals,
        conditional=tuple(conditional),
        total=total,
        clamped=clamped_any,
    )


# ---------------------------------------------------------------------------
# backend agreement report


@dataclass(frozen=True)
class BackendComparison:
    """Fitted vs enumerated critical-pair histograms for one(delta, h)."""

    delta: int
    h: int
    seq_len_mode: str
    n_sequences: int
    closed: tuple[int, ...]
    exact: tuple[int, ...]

    @property
    def max_abs_diff(self) -> int:
        return max(
            (abs(a - b) for a, b in zip(self.closed, self.exact)), default=0
        )

    def rows(self) -> list[tuple[int, int, int]]:
        """(J, fitted, enumerated) rows."""
        return [
            (j + 1, self.closed[j], self.exact[j]) for j in range(len(self.closed))
        ]

    def csv_text(self) -> str:
        lines = [
            "# schema: clbf.fj-comparison.v1",
            f"# delta={self.delta} h={self.h} seq_len_mode={self.seq_len_mode}"
            f" n_sequences={self.n_sequences}",
            "J,fitted,enumerated,abs_diff",
        ]
        for j, fit, ex in self.rows():
            lines.append(f"{j},{fit},{ex},{abs(fit - ex)}")
        lines.append(
            f"# sum fitted={sum(self.closed)} enumerated={sum(self.exact)}"
            f" max_abs_diff={self.max_abs_diff}"
        )
        return "\n".join(lines) + "\n"


def compare_backends(delta: int, h: int, seq_len_mode: str = "h") -> BackendComparison:
    if seq_len_mode not in SEQ_LEN_MODES:
        raise ValueError(f"seq_len_mode {seq_len_mode!r} not in {SEQ_LEN_MODES}")
    seq_len = h if seq_len_mode == "h" else h + 1
    return BackendComparison(
        delta=delta,
        h=h,
        seq_len_mode=seq_len_mode,
        n_sequences=count_valid_sequences(delta, seq_len),
        closed=critical_pair_histogram_closed(delta, h),
        exact=critical_pair_histogram(delta, seq_len),
    )
