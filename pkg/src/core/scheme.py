"""Deterministic quality schemes: segments, jumps, IC residuals and principal payoff"""
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from src.core.primitives import ProblemSpec, q_full, q_full_array
from src.exceptions import MalformedScheme
from src.utils.numerics import integrate

logger = logging.getLogger(__name__)

EXCLUSION = "exclusion"
POOLING = "pooling"
REVEAL = "reveal"
SEGMENT_KINDS = (EXCLUSION, POOLING, REVEAL)

# residual bound for jump indifference and segment ordering
IC_TOL = 1e-8


@dataclass(frozen=True)
class Segment:
    """[start, end) of types with one kind; the last segment is closed at the top"""
    start: float
    end: float
    kind: str
    standard: Optional[float] = None

    def to_dict(self) -> Dict:
        return {"start": self.start, "end": self.end, "kind": self.kind, "standard": self.standard}


@dataclass(frozen=True)
class Jump:
    theta: float
    q_left: float
    q_right: float
    index: int
    participation: bool = False


@dataclass(frozen=True)
class DeterministicScheme:
    """Ordered segments covering the support; cutoff is the participation type when one exists"""
    segments: Tuple[Segment, ...]
    cutoff: Optional[float] = None

    @property
    def kinds(self) -> List[str]:
        return [s.kind for s in self.segments]

    @property
    def standards(self) -> List[float]:
        return [s.standard for s in self.segments if s.kind == POOLING]

    def reveal_segments(self) -> List[Tuple[int, Segment]]:
        return [(i, s) for i, s in enumerate(self.segments) if s.kind == REVEAL]

    def pooling_segments(self) -> List[Tuple[int, Segment]]:
        return [(i, s) for i, s in enumerate(self.segments) if s.kind == POOLING]

    @property
    def boundaries(self) -> List[float]:
        return [self.segments[0].start] + [s.end for s in self.segments]

    def to_dict(self) -> Dict:
        return {"cutoff": self.cutoff, "segments": [s.to_dict() for s in self.segments]}


def validate_scheme(spec: ProblemSpec, scheme: DeterministicScheme):
    """Segment order, coverage and kind-specific fields; raises MalformedScheme"""
    segs = scheme.segments
    if not segs:
        raise MalformedScheme("scheme has no segments", operation="validate_scheme")
    lo, hi = spec.theta_lo, spec.theta_hi
    if abs(segs[0].start - lo) > IC_TOL or abs(segs[-1].end - hi) > IC_TOL:
        raise MalformedScheme(f"segments must cover [{lo}, {hi}]", operation="validate_scheme")
    previous_top = -np.inf
    for i, seg in enumerate(segs):
        if seg.kind not in SEGMENT_KINDS:
            raise MalformedScheme(f"segment {i} has unknown kind '{seg.kind}'", operation="validate_scheme")
        if seg.end <= seg.start:
            raise MalformedScheme(f"segment {i} is empty or reversed", operation="validate_scheme")
        if i and abs(seg.start - segs[i - 1].end) > IC_TOL:
            raise MalformedScheme(f"gap between segments {i - 1} and {i}", operation="validate_scheme")
        if seg.kind == POOLING and (seg.standard is None or seg.standard <= 0):
            raise MalformedScheme(f"pooling segment {i} needs a positive standard", operation="validate_scheme")
        if seg.kind == EXCLUSION and i:
            raise MalformedScheme("exclusion may only open the scheme", operation="validate_scheme")
        bottom = _left_value(spec, seg)
        if bottom < previous_top - IC_TOL:
            raise MalformedScheme(f"quality decreases into segment {i}", operation="validate_scheme")
        previous_top = _right_limit(spec, seg)


def _left_value(spec: ProblemSpec, seg: Segment) -> float:
    if seg.kind == EXCLUSION:
        return 0.0
    if seg.kind == POOLING:
        return float(seg.standard)
    return q_full(spec, seg.start)


def _right_limit(spec: ProblemSpec, seg: Segment) -> float:
    if seg.kind == EXCLUSION:
        return 0.0
    if seg.kind == POOLING:
        return float(seg.standard)
    return q_full(spec, seg.end)


def scheme_jumps(spec: ProblemSpec, scheme: DeterministicScheme) -> List[Jump]:
    """
    Discontinuities of q(theta), in increasing order

    A scheme whose first non-excluded piece is a pool also jumps from the
    outside option at the average-cost type c(q)/q, which may sit below
    theta_lo; that jump is flagged as the participation jump.
    """
    validate_scheme(spec, scheme)
    jumps: List[Jump] = []
    segs = scheme.segments
    first = segs[0]
    if first.kind == POOLING:
        q = float(first.standard)
        theta = float(scheme.cutoff) if scheme.cutoff is not None else float(spec.cost.c(q)) / q
        jumps.append(Jump(theta=min(theta, first.start), q_left=0.0, q_right=q, index=0, participation=True))
    for i in range(1, len(segs)):
        q_left = _right_limit(spec, segs[i - 1])
        q_right = _left_value(spec, segs[i])
        if q_right - q_left > IC_TOL:
            jumps.append(Jump(theta=segs[i].start, q_left=q_left, q_right=q_right, index=i,
                              participation=segs[i - 1].kind == EXCLUSION))
    return jumps


def scheme_quality(spec: ProblemSpec, scheme: DeterministicScheme, theta):
    """q(theta) of the scheme, right-continuous; vectorised"""
    x = np.atleast_1d(np.asarray(theta, dtype=float))
    out = np.zeros_like(x)
    segs = scheme.segments
    starts = np.array([s.start for s in segs])
    idx = np.clip(np.searchsorted(starts, x, side="right") - 1, 0, len(segs) - 1)
    for i, seg in enumerate(segs):
        mask = idx == i
        if not np.any(mask):
            continue
        if seg.kind == POOLING:
            out[mask] = seg.standard
        elif seg.kind == REVEAL:
            out[mask] = q_full_array(spec, np.clip(x[mask], seg.start, seg.end))
    return float(out[0]) if np.ndim(theta) == 0 else out


def ic_residuals(spec: ProblemSpec, scheme: DeterministicScheme) -> Dict[str, float]:
    """
    Residuals of the IC structure

    jump_indifference: |u(q-) - u(q+)| at interior jumps, u = theta q - c(q)
    pool_width: how far a pool around a jump falls short of c'(q) on its side
    reveal_continuity: |q - q_f| at the ends of reveal segments joined to pools
    participation: |q0 - q_i(theta0)| at the participation cutoff
    """
    cost = spec.cost
    lo, hi = spec.theta_lo, spec.theta_hi
    jumps = scheme_jumps(spec, scheme)
    segs = scheme.segments
    indifference = width = continuity = participation = 0.0
    for jump in jumps:
        t = jump.theta
        if jump.participation:
            # theta q - c(q) = 0 at the cutoff, i.e. q = q_i(theta0)
            if t >= lo:
                participation = max(participation, abs(t * jump.q_right - float(cost.c(jump.q_right))))
            else:
                participation = max(participation, max(0.0, float(cost.c(jump.q_right)) - lo * jump.q_right))
        else:
            u_left = t * jump.q_left - float(cost.c(jump.q_left))
            u_right = t * jump.q_right - float(cost.c(jump.q_right))
            indifference = max(indifference, abs(u_left - u_right))
        if jump.index > 0:
            left = segs[jump.index - 1]
            if left.kind == POOLING:
                reach = float(np.clip(cost.c1(jump.q_left), lo, hi))
                width = max(width, left.start - reach)
        right = segs[jump.index]
        if right.kind == POOLING:
            reach = float(np.clip(cost.c1(jump.q_right), lo, hi))
            width = max(width, reach - right.end)
    for i, seg in enumerate(segs):
        if seg.kind != REVEAL:
            continue
        if i > 0 and segs[i - 1].kind == POOLING:
            continuity = max(continuity, abs(segs[i - 1].standard - q_full(spec, seg.start)))
        if i + 1 < len(segs) and segs[i + 1].kind == POOLING:
            continuity = max(continuity, abs(segs[i + 1].standard - q_full(spec, seg.end)))
    return {
        "jump_indifference": indifference,
        "pool_width": max(width, 0.0),
        "reveal_continuity": continuity,
        "participation": participation,
    }


def scheme_payoff(spec: ProblemSpec, scheme: DeterministicScheme) -> float:
    """Principal value: integral of psi(q(theta), theta) dF over the segments"""
    validate_scheme(spec, scheme)
    objective, dist = spec.objective, spec.dist
    opts = spec.numerics
    total = 0.0
    for seg in scheme.segments:
        if seg.kind == EXCLUSION:
            continue
        if seg.kind == POOLING:
            q = float(seg.standard)
            integrand = lambda t, q=q: float(objective.psi(q, t)) * dist.pdf(t)
        else:
            integrand = lambda t: float(objective.psi(q_full(spec, t), t)) * dist.pdf(t)
        total += integrate(integrand, seg.start, seg.end, breakpoints=dist.breakpoints,
                           rel=opts.quad_rel, abs_tol=opts.quad_abs, limit=opts.quad_limit)
    return total
