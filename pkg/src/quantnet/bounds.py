"""Closed-form complexity bounds and the bound-based optimal bit-width.

The memory model is M(lam) = theta1 * lam * log2(lam) * theta2**(1/(lam-1) + 1)
with theta2 = log2(3 n 2**d / eps).  Its derivative has the sign of

    M_s(lam) = log2(lam) + 1/ln 2 - ln(theta2) * lam * log2(lam) / (lam - 1)**2,

which is increasing in lam, negative at lam = 2 when eps < 1/2 and unbounded
above, so M has exactly one minimiser on [2, inf).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

from .core import NetworkError

LN2 = math.log(2.0)


class NoInteriorMinimum(NetworkError):
    pass


@dataclass(frozen=True)
class BoundModel:
    d: int
    n: int
    epsilon: float
    theta1: float = 1.0

    def __post_init__(self):
        if self.d < 1 or self.n < 1:
            raise NetworkError("need d >= 1 and n >= 1")
        if not 0 < self.epsilon < 1:
            raise NetworkError("epsilon must lie in (0, 1)")
        if self.theta1 <= 0:
            raise NetworkError("theta1 must be positive")

    @property
    def theta2(self) -> float:
        # log2(3 n) + d - log2(eps), kept in this form so huge d does not overflow
        return math.log2(3 * self.n) + self.d - math.log2(self.epsilon)


def _check_lam(lam: float):
    if not lam >= 2:
        raise NetworkError(f"lambda must be >= 2, got {lam}")


def memory_bound(lam: float, model: BoundModel) -> float:
    _check_lam(lam)
    return model.theta1 * lam * math.log2(lam) * model.theta2 ** (1.0 / (lam - 1) + 1.0)


def ms(lam: float, model: BoundModel) -> float:
    """Sign carrier of dM/dlam."""
    _check_lam(lam)
    return math.log2(lam) + 1.0 / LN2 - math.log(model.theta2) * lam * math.log2(lam) / (lam - 1) ** 2


def dM_dlam(lam: float, model: BoundModel) -> float:
    """Analytic derivative: theta1 * theta2**(lam/(lam-1)) * M_s(lam)."""
    return model.theta1 * model.theta2 ** (lam / (lam - 1)) * ms(lam, model)


def lambda_opt(model: BoundModel, rel_tol: float = 1e-12) -> float:
    """Unique root of M_s on [2, inf): doubling bracket, then bisection."""
    if model.epsilon >= 0.5 or ms(2.0, model) >= 0:
        raise NoInteriorMinimum(f"no interior minimum for eps={model.epsilon}")
    lo, hi = 2.0, 4.0
    while ms(hi, model) <= 0:
        lo, hi = hi, 2 * hi
        if hi > 2.0 ** 200:
            raise NoInteriorMinimum("bracket search diverged")
    while hi - lo > rel_tol * lo:
        mid = 0.5 * (lo + hi)
        if ms(mid, model) <= 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def bitwidth_opt(model: BoundModel) -> float:
    return math.log2(lambda_opt(model))


def projections(model: BoundModel) -> dict:
    """Integer and power-of-two lambda next to the continuous optimum."""
    lam = lambda_opt(model)
    ints = [max(2, math.floor(lam)), math.ceil(lam)]
    best_int = min(ints, key=lambda v: memory_bound(v, model))
    pows = [2 ** max(1, math.floor(math.log2(lam))), 2 ** math.ceil(math.log2(lam))]
    best_pow = min(pows, key=lambda v: memory_bound(v, model))
    return {"lambda_opt": lam, "bitwidth_opt": math.log2(lam), "lambda_int": best_int, "lambda_pow2": best_pow}


THEOREMS = ("T1", "T2", "T3", "T4")


def bound_formulas(theorem: str, d: int, n: int, eps: float, lam: float) -> dict[str, float]:
    """Dominant-term values (constants set to 1) of the four complexity theorems."""
    theorem = theorem.upper()
    if theorem not in THEOREMS:
        raise NetworkError(f"unknown theorem {theorem!r}")
    if not 0 < eps < 1:
        raise NetworkError("epsilon must lie in (0, 1)")
    _check_lam(lam)
    if theorem in ("T3", "T4") and (d != 1 or n != 1):
        raise NetworkError(f"{theorem} only covers d = n = 1")
    L = math.log2(1 / eps)
    lg = math.log2(lam)
    vol = (1 / eps) ** (d / n)
    if theorem == "T1":
        weights = lam * L ** (1 / (lam - 1) + 1) * vol
        depth = lam * L ** (1 / (lam - 1)) + L
        return {"depth": depth, "weights": weights, "bits": lg * weights}
    if theorem == "T2":
        weights = (L + L * L / lg) * vol
        return {"depth": L, "weights": weights, "bits": lg * weights}
    if theorem == "T3":
        ll = math.log2(max(L, 2.0))
        weights = lam * ll ** (1 / (lam - 1) + 1) + 1 / eps
        return {"weights": weights, "bits": lg * weights}
    return {"weights": 1 / eps, "bits": lg / eps}


def overhead_report(d: int, n: int, eps: float, lam: float) -> dict[str, float]:
    """Quantized upper bound versus unquantized upper and lower bounds."""
    q = bound_formulas("T1", d, n, eps, lam)["weights"]
    L = math.log2(1 / eps)
    vol = (1 / eps) ** (d / n)
    upper = L * vol
    lower = L ** -3 * vol
    return {
        "quantized_upper": q,
        "unquantized_upper": upper,
        "unquantized_lower": lower,
        "overhead_factor": lam * L ** (1 / (lam - 1)),
    }


FIGURE1_HEADER = (
    "# columns: d,n,epsilon,lambda,scaled_derivative,bitwidth_opt\n"
    "# theta2 = log2(3*n*2^d/epsilon); theta1 = 1 (it does not move the argmin)\n"
    "# scaled_derivative = dM/dlambda * theta2^(-lambda/(lambda-1)) = M_s(lambda)\n"
    "# bitwidth_opt = log2(lambda_opt) for the (d, n, epsilon) of the row\n"
)

DEFAULT_LAMBDAS = tuple(2.0 ** (k / 4) for k in range(4, 41))


def emit_figure1_data(d_list, n_list, eps_list, lambdas=DEFAULT_LAMBDAS) -> list[dict]:
    rows = []
    for d in d_list:
        for n in n_list:
            for eps in eps_list:
                model = BoundModel(int(d), int(n), float(eps))
                bw = bitwidth_opt(model)
                for lam in lambdas:
                    rows.append({
                        "d": int(d), "n": int(n), "epsilon": float(eps), "lambda": float(lam),
                        "scaled_derivative": ms(lam, model), "bitwidth_opt": bw,
                    })
    return rows


def figure1_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    buf.write(FIGURE1_HEADER)
    w = csv.writer(buf, lineterminator="\n")
    cols = ["d", "n", "epsilon", "lambda", "scaled_derivative", "bitwidth_opt"]
    w.writerow(cols)
    for row in rows:
        w.writerow([repr(row[c]) if isinstance(row[c], float) else row[c] for c in cols])
    return buf.getvalue()
