"""Well-posedness thresholds and the exponents of the a-priori density estimate.

Indices equal to infinity are passed as ``math.inf``; ``1/inf = 0`` and the
conjugate of 1 is infinity.  All inequalities are strict.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

INF = math.inf

BURGERS_P_GRID = tuple(round(1.0 + 0.1 * k, 10) for k in range(91)) + (INF,)


class CriteriaError(ValueError):
    pass


def inv(x: float) -> float:
    return 0.0 if math.isinf(x) else 1.0 / x


def conjugate(p: float) -> float:
    """Hoelder conjugate exponent."""
    if p == 1:
        return INF
    if math.isinf(p):
        return 1.0
    return p / (p - 1.0)


def intrinsic_index(beta0: float, p0: float, d: int) -> float:
    """``beta0 + d / p0'``: regularity credited to the initial law."""
    if not (p0 >= 1):
        raise CriteriaError(f"p0 must lie in [1, inf], got {p0}")
    return beta0 + d * (1.0 - inv(p0))


@dataclass(frozen=True)
class LebesgueBesovIndices:
    """Kernel space L^r(B^beta_{p,q}), initial space B^beta0_{p0,q0}, noise index and slack."""

    d: int
    alpha: float
    beta: float
    p: float
    q: float = INF
    r: float = INF
    beta0: float = 0.0
    p0: float = 1.0
    q0: float = INF
    eta: float = 0.01
    has_div_bound: bool = False

    def __post_init__(self):
        if not (1.0 < self.alpha <= 2.0):
            raise CriteriaError(f"alpha must lie in (1, 2], got {self.alpha}")
        if not (-1.0 <= self.beta <= 0.0):
            raise CriteriaError(f"beta must lie in [-1, 0], got {self.beta}")
        if self.beta0 < 0:
            raise CriteriaError(f"beta0 must be >= 0, got {self.beta0}")
        for name in ("p", "q", "r", "p0", "q0"):
            if not getattr(self, name) >= 1:
                raise CriteriaError(f"{name} must lie in [1, inf], got {getattr(self, name)}")
        if not (self.eta > 0 and math.isfinite(self.eta)):
            raise CriteriaError(f"eta must be a positive real, got {self.eta}")
        if self.d < 1:
            raise CriteriaError(f"dimension must be positive, got {self.d}")

    @property
    def indicator(self) -> float:
        """1 when beta lies in (-1, 0], else 0."""
        return 1.0 if -1.0 < self.beta <= 0.0 else 0.0


@dataclass
class ConditionReport:
    intrinsic_index: float
    c0: bool
    c0_s: bool
    c1: bool
    c2: bool
    c1_s: bool
    c2_s: bool
    zeta0: float
    Gamma: float
    theta: float
    eta: float
    eta_max: float
    r0_window: tuple[float, float] | None
    margin: float
    c1_s_branch: str = ""
    reasons: list[str] = field(default_factory=list)

    @property
    def well_posed(self) -> bool:
        return (self.c1 or self.c2) and self.Gamma > 0

    @property
    def strong(self) -> bool:
        return self.c1_s or self.c2_s

    def lines(self) -> list[str]:
        def fmt(v):
            if isinstance(v, bool):
                return "true" if v else "false"
            if isinstance(v, float):
                return repr(v)
            if v is None:
                return "empty"
            if isinstance(v, tuple):
                return f"({v[0]!r}, {v[1]!r})"
            return str(v)

        keys = ["intrinsic_index", "c0", "c0_s", "c1", "c2", "c1_s", "c2_s", "zeta0", "Gamma",
                "theta", "eta", "eta_max", "r0_window", "margin", "c1_s_branch"]
        out = [f"{k}: {fmt(getattr(self, k))}" for k in keys]
        out.append(f"well_posed: {fmt(self.well_posed)}")
        out.append(f"strong: {fmt(self.strong)}")
        out.extend(f"reason: {r}" for r in self.reasons)
        return out


def evaluate_conditions(idx: LebesgueBesovIndices) -> ConditionReport:
    a, b, d = idx.alpha, idx.beta, idx.d
    ar = a * inv(idx.r)
    dp = d * inv(idx.p)
    intr = intrinsic_index(idx.beta0, idx.p0, d)
    ind = idx.indicator
    bracket = -b + dp - intr
    reasons: list[str] = []

    interior = ind == 1.0
    c0 = interior and (1 - a + dp + ar < b)
    c0_s = interior and (2 - 1.5 * a + dp + ar < b)

    c1_lhs = 1 - a + ar + max(bracket, 0.0)
    c1 = interior and c1_lhs < b
    strong_branch = 2 - 1.5 * a + ar + bracket
    c1_s = interior and max(strong_branch, c1_lhs) < b
    branch = "" if not interior else ("strong" if strong_branch >= c1_lhs else "weak")

    c2 = False
    c2_s = False
    c2_slacks = (a - 1 - ar, -1 - (1 - a + ar + dp - intr), intr - dp)
    if b == -1.0:
        if not idx.has_div_bound:
            reasons.append("missing div(b) structure condition")
        else:
            c2 = all(s > 0 for s in c2_slacks)
            c2_s = c2 and (2 - 1.5 * a + ar + dp - intr < -1)

    zeta0 = bracket / a
    Gamma = a + b * ind - 1 - ar - a * zeta0 - idx.eta
    theta = 1 - (1 - b * ind) / a - inv(idx.r) - idx.eta / a
    eta_max = Gamma + idx.eta

    lower_gap = a - (1 - b * ind)
    window = None
    if lower_gap > 0:
        lo = a / lower_gap
        # upper constraint 1/r0 > 1/r + theta is vacuous when the right side is <= 0
        rate = inv(idx.r) + theta
        hi = INF if rate <= 0 else 1.0 / rate
        if lo < hi:
            window = (lo, hi)

    if interior:
        margin = b - c1_lhs
    elif b == -1.0:
        margin = min(c2_slacks)
    else:
        margin = -INF
    if (c1 or c2) and Gamma <= 0:
        reasons.append(f"eta={idx.eta} too large: Gamma <= 0 (largest admissible eta is {eta_max!r})")

    return ConditionReport(
        intrinsic_index=intr, c0=c0, c0_s=c0_s, c1=c1, c2=c2, c1_s=c1_s, c2_s=c2_s,
        zeta0=zeta0, Gamma=Gamma, theta=theta, eta=idx.eta, eta_max=eta_max,
        r0_window=window, margin=margin, c1_s_branch=branch, reasons=reasons,
    )


@dataclass(frozen=True)
class ModelVerdict:
    weak: bool
    strong: bool
    binding_inequality: str
    best_p: float | None = None


MODELS = ("burgers", "vortex2d", "kellersegel")


def model_thresholds(model: str, alpha: float, d: int, beta0: float, p0: float) -> ModelVerdict:
    """Weak/strong verdicts for the three concrete interaction kernels.

    Burgers scans the kernel integrability p (the Dirac kernel lies in
    B^{-1/p'}_{p,inf} for every p) and keeps the best verdict; Keller-Segel
    evaluates the beta = -1 condition at p = d/(d-1); the vortex verdict is the
    epsilon -> 0 limit of the beta = -1 condition at p = (4 - 2 eps)/eps.
    """
    model = model.lower()
    intr = intrinsic_index(beta0, p0, d)
    if model == "burgers":
        if d != 1:
            raise CriteriaError("the Burgers model lives in dimension 1")
        best = None
        for p in BURGERS_P_GRID:
            beta = -(1.0 - inv(p))
            if beta <= -1.0:
                continue
            rep = evaluate_conditions(LebesgueBesovIndices(
                d=1, alpha=alpha, beta=beta, p=p, beta0=beta0, p0=p0, eta=1e-9))
            score = (rep.c1_s, rep.c1, rep.margin)
            if best is None or score > best[0]:
                best = (score, p, rep)
        (_, _, _), p, rep = best
        return ModelVerdict(rep.c1, rep.c1_s, "1 - alpha + [1 - (beta0 + 1/p0')]_+ < -1/p'"
                            if not rep.c1_s else "beta0 + 1/p0' > 3(1 - alpha/2)", best_p=p)
    if model == "vortex2d":
        if d != 2:
            raise CriteriaError("the vortex model lives in dimension 2")
        weak = intr > 2 - alpha and intr > 0
        strong = weak and intr > 3 - 1.5 * alpha
        text = "beta0 + 2/p0' > 3 - 3alpha/2" if weak else "beta0 + 2/p0' > 2 - alpha"
        return ModelVerdict(weak, strong, text)
    if model == "kellersegel":
        if d < 2:
            raise CriteriaError("the Keller-Segel model needs dimension >= 2")
        rep = evaluate_conditions(LebesgueBesovIndices(
            d=d, alpha=alpha, beta=-1.0, p=d / (d - 1.0), beta0=beta0, p0=p0, eta=1e-9,
            has_div_bound=True))
        text = "2 - 3alpha/2 + d < beta0 + d/p0'" if rep.c2 else "1 - alpha + d < beta0 + d/p0'"
        return ModelVerdict(rep.c2, rep.c2_s, text)
    raise CriteriaError(f"unknown model {model!r}; expected one of {MODELS}")
