"""Descriptives, assumption checks, ANOVA and post-hoc tests.

Distribution functions are computed here (incomplete beta by continued
fraction, normal CDF from ``math.erfc``, studentized range by composite
Gauss-Legendre quadrature) so results do not depend on a statistics
package.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np


class StatsError(ValueError):
    pass


# --- special functions ---------------------------------------------------

def _betacf(a: float, b: float, x: float) -> float:
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, 1000):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            return h
    raise StatsError("incomplete beta continued fraction did not converge")


def betainc(a: float, b: float, x: float, y: float | None = None) -> float:
    """Regularized incomplete beta I_x(a, b).

    ``y`` is 1 - x when the caller can form it without cancellation.
    """
    if y is None:
        y = 1.0 - x
    if x <= 0.0:
        return 0.0
    if y <= 0.0:
        return 1.0
    lbt = math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log(y)
    bt = math.exp(lbt)
    if x < (a + 1.0) / (a + b + 2.0):
        return bt * _betacf(a, b, x) / a
    return 1.0 - bt * _betacf(b, a, y) / b


def f_sf(f: float, df1: float, df2: float) -> float:
    """Upper tail P(F >= f)."""
    if math.isnan(f):
        return math.nan
    if f <= 0.0:
        return 1.0
    if math.isinf(f):
        return 0.0
    den = df2 + df1 * f
    return betainc(df2 / 2.0, df1 / 2.0, df2 / den, df1 * f / den)


def t_sf2(t: float, df: float) -> float:
    """Two-sided P(|T| >= |t|)."""
    den = df + t * t
    return betainc(df / 2.0, 0.5, df / den, t * t / den)


def normal_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


_erfc_vec = np.frompyfunc(math.erfc, 1, 1)


def _normal_cdf_vec(x: np.ndarray) -> np.ndarray:
    return 0.5 * _erfc_vec(-x / math.sqrt(2.0)).astype(float)


def kolmogorov_sf(lam: float) -> float:
    """P(K > lam) for the limiting Kolmogorov distribution."""
    if lam <= 0.0:
        return 1.0
    if lam < 1.18:
        s = sum(math.exp(-((2 * j - 1) ** 2) * math.pi ** 2 / (8 * lam * lam)) for j in range(1, 20))
        return 1.0 - math.sqrt(2 * math.pi) / lam * s
    s = sum((-1) ** (j - 1) * math.exp(-2 * j * j * lam * lam) for j in range(1, 101))
    return min(1.0, max(0.0, 2.0 * s))


# --- studentized range ---------------------------------------------------

_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)


def _nodes(lo: float, hi: float, panels: int) -> tuple[np.ndarray, np.ndarray]:
    edges = np.linspace(lo, hi, panels + 1)
    half = (edges[1:] - edges[:-1]) / 2.0
    mid = (edges[1:] + edges[:-1]) / 2.0
    x = (mid[:, None] + half[:, None] * _GL_X[None, :]).ravel()
    w = (half[:, None] * _GL_W[None, :]).ravel()
    return x, w


def _range_cdf_inf(w: np.ndarray, k: int, panels: int) -> np.ndarray:
    """P(range of k standard normals <= w), vectorized over w."""
    z, wz = _nodes(-8.5, 8.5, panels)
    phi = np.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)
    cz = _normal_cdf_vec(z)
    inner = np.clip(cz[None, :] - _normal_cdf_vec(z[None, :] - w[:, None]), 0.0, 1.0)
    return k * (inner ** (k - 1) * (phi * wz)[None, :]).sum(axis=1)


def _ptukey_fixed(q: float, k: int, df: float, panels: int) -> float:
    if math.isinf(df):
        return float(_range_cdf_inf(np.array([q]), k, panels)[0])
    spread = 9.0 / math.sqrt(2.0 * df)
    lo = max(0.0, 1.0 - spread) if df > 10 else 0.0
    hi = 1.0 + max(spread, 8.0 if df <= 10 else 0.0)
    s, ws = _nodes(lo, hi, panels)
    s = s[s > 0] if lo == 0.0 else s
    ws = ws[-len(s):]
    half = df / 2.0
    logf = (half * math.log(df) - math.lgamma(half) - (half - 1.0) * math.log(2.0)
            + (df - 1.0) * np.log(s) - half * s * s)
    return float((np.exp(logf) * ws * _range_cdf_inf(q * s, k, panels)).sum())


def ptukey(q: float, k: int, df: float, tol: float = 1e-8) -> float:
    """CDF of the studentized range for k means and df error degrees of freedom."""
    if k < 2:
        raise StatsError("studentized range needs k >= 2")
    if q <= 0.0:
        return 0.0
    panels = 8
    prev = _ptukey_fixed(q, k, df, panels)
    while panels < 256:
        panels *= 2
        cur = _ptukey_fixed(q, k, df, panels)
        if abs(cur - prev) < tol:
            return min(1.0, max(0.0, cur))
        prev = cur
    return min(1.0, max(0.0, prev))


def qtukey(p: float, k: int, df: float) -> float:
    """Quantile of the studentized range (bisection on :func:`ptukey`)."""
    if not 0.0 < p < 1.0:
        raise StatsError("p must be in (0, 1)")
    lo, hi = 0.0, 10.0
    while ptukey(hi, k, df) < p:
        hi *= 2.0
    while hi - lo > 1e-9:
        mid = 0.5 * (lo + hi)
        if ptukey(mid, k, df) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# --- descriptives and assumption checks ---------------------------------

def describe(sample: Sequence[float]) -> tuple[float, float]:
    """Mean and sample standard deviation (n - 1 denominator)."""
    n = len(sample)
    if n < 2:
        raise StatsError("standard deviation needs at least 2 observations")
    m = math.fsum(sample) / n
    var = math.fsum((x - m) ** 2 for x in sample) / (n - 1)
    return m, math.sqrt(var)


def ks_normality(sample: Sequence[float]) -> tuple[float, float]:
    """One-sample KS against a normal with the sample's mean and sd.

    p uses the asymptotic Kolmogorov law with the (sqrt(n) + 0.12 +
    0.11/sqrt(n)) small-sample factor; no Lilliefors correction.
    """
    n = len(sample)
    if n < 5:
        raise StatsError("KS normality needs n >= 5")
    m, sd = describe(sample)
    if sd == 0.0:
        raise StatsError("KS normality undefined for a constant sample")
    xs = sorted(sample)
    d = 0.0
    for i, x in enumerate(xs, start=1):
        f = normal_cdf((x - m) / sd)
        d = max(d, i / n - f, f - (i - 1) / n)
    rn = math.sqrt(n)
    return d, kolmogorov_sf((rn + 0.12 + 0.11 / rn) * d)


@dataclass(frozen=True)
class LeveneResult:
    W: float
    p: float
    df: tuple[int, int]
    degenerate: bool = False


def levene(groups: Mapping[str, Sequence[float]] | Sequence[Sequence[float]]) -> LeveneResult:
    """Mean-centred Levene test; 0/0 (all deviations zero) reports p = 1."""
    gs = _as_groups(groups)
    if len(gs) < 2 or any(len(g) < 2 for g in gs.values()):
        raise StatsError("Levene needs >= 2 groups with n >= 2")
    devs = {}
    for label, g in gs.items():
        m = math.fsum(g) / len(g)
        devs[label] = [abs(x - m) for x in g]
    res = anova_oneway(devs)
    eff = res.effects["between"]
    if res.degenerate:
        return LeveneResult(0.0, 1.0, (eff.df, res.within.df), degenerate=True)
    return LeveneResult(eff.F, eff.p, (eff.df, res.within.df))


# --- ANOVA ---------------------------------------------------------------

@dataclass(frozen=True)
class EffectRow:
    ss: float
    df: int
    ms: float
    F: float | None = None
    p: float | None = None
    eta_squared: float | None = None
    partial_eta_squared: float | None = None


@dataclass(frozen=True)
class AnovaResult:
    effects: dict[str, EffectRow]
    within: EffectRow
    total_ss: float
    degenerate: bool = False

    def as_dict(self) -> dict:
        out = {name: vars(row) for name, row in self.effects.items()}
        out["within"] = vars(self.within)
        out["total_ss"] = self.total_ss
        out["degenerate"] = self.degenerate
        return out


def _as_groups(groups) -> dict[str, list[float]]:
    if isinstance(groups, Mapping):
        return {str(k): [float(x) for x in v] for k, v in groups.items()}
    return {str(i): [float(x) for x in g] for i, g in enumerate(groups)}


def _effect(ss: float, df: int, ss_within: float, df_within: int, ss_total: float) -> EffectRow:
    ms = ss / df
    ms_w = ss_within / df_within
    if ms_w > 0:
        f = ms / ms_w
    else:
        f = math.inf if ss > 0 else 0.0
    p = f_sf(f, df, df_within)
    eta = ss / ss_total if ss_total > 0 else 0.0
    denom = ss + ss_within
    partial = ss / denom if denom > 0 else 0.0
    return EffectRow(ss, df, ms, f, p, eta, partial)


def anova_oneway(groups) -> AnovaResult:
    gs = _as_groups(groups)
    if len(gs) < 2:
        raise StatsError("one-way ANOVA needs at least 2 groups")
    if any(len(g) < 2 for g in gs.values()):
        raise StatsError("each group needs n >= 2")
    allx = [x for g in gs.values() for x in g]
    n = len(allx)
    grand = math.fsum(allx) / n
    means = {k: math.fsum(g) / len(g) for k, g in gs.items()}
    ssb = math.fsum(len(g) * (means[k] - grand) ** 2 for k, g in gs.items())
    ssw = math.fsum((x - means[k]) ** 2 for k, g in gs.items() for x in g)
    sst = math.fsum((x - grand) ** 2 for x in allx)
    dfb, dfw = len(gs) - 1, n - len(gs)
    between = _effect(ssb, dfb, ssw, dfw, sst)
    within = EffectRow(ssw, dfw, ssw / dfw)
    return AnovaResult({"between": between}, within, sst, degenerate=(ssw == 0.0 and ssb == 0.0))


def anova_twoway(cells: Mapping[tuple, Sequence[float]], names: tuple[str, str] = ("A", "B")) -> AnovaResult:
    """Balanced two-way between-groups ANOVA with interaction."""
    a_levels = sorted({k[0] for k in cells}, key=str)
    b_levels = sorted({k[1] for k in cells}, key=str)
    if len(a_levels) < 2 or len(b_levels) < 2:
        raise StatsError("two-way ANOVA needs >= 2 levels per factor")
    if len(cells) != len(a_levels) * len(b_levels):
        raise StatsError("incomplete factorial: missing cells")
    sizes = {len(v) for v in cells.values()}
    if len(sizes) != 1:
        raise StatsError("unbalanced design: cell sizes differ")
    n = sizes.pop()
    if n < 2:
        raise StatsError("each cell needs n >= 2")
    data = {k: [float(x) for x in v] for k, v in cells.items()}
    allx = [x for v in data.values() for x in v]
    grand = math.fsum(allx) / len(allx)
    cm = {k: math.fsum(v) / n for k, v in data.items()}
    am = {a: math.fsum(cm[(a, b)] for b in b_levels) / len(b_levels) for a in a_levels}
    bm = {b: math.fsum(cm[(a, b)] for a in a_levels) / len(a_levels) for b in b_levels}
    ssa = n * len(b_levels) * math.fsum((am[a] - grand) ** 2 for a in a_levels)
    ssb = n * len(a_levels) * math.fsum((bm[b] - grand) ** 2 for b in b_levels)
    ssab = n * math.fsum((cm[(a, b)] - am[a] - bm[b] + grand) ** 2 for a in a_levels for b in b_levels)
    ssw = math.fsum((x - cm[k]) ** 2 for k, v in data.items() for x in v)
    sst = math.fsum((x - grand) ** 2 for x in allx)
    dfa, dfb = len(a_levels) - 1, len(b_levels) - 1
    dfw = len(allx) - len(a_levels) * len(b_levels)
    effects = {
        names[0]: _effect(ssa, dfa, ssw, dfw, sst),
        names[1]: _effect(ssb, dfb, ssw, dfw, sst),
        f"{names[0]}:{names[1]}": _effect(ssab, dfa * dfb, ssw, dfw, sst),
    }
    return AnovaResult(effects, EffectRow(ssw, dfw, ssw / dfw), sst, degenerate=(sst == 0.0))


# --- post hoc ------------------------------------------------------------

@dataclass(frozen=True)
class PairComparison:
    a: str
    b: str
    mean_diff: float
    q: float
    p: float
    significant: bool


@dataclass(frozen=True)
class TukeyResult:
    alpha: float
    k: int
    df: int
    q_critical: float
    pairs: list[PairComparison] = field(default_factory=list)

    def pair(self, a: str, b: str) -> PairComparison:
        for pc in self.pairs:
            if (pc.a, pc.b) in ((a, b), (b, a)):
                return pc
        raise KeyError((a, b))


def tukey_hsd(groups, alpha: float = 0.05, ms_within: float | None = None,
              df_within: int | None = None) -> TukeyResult:
    """Tukey HSD (Tukey-Kramer for unequal n) over all pairs of groups.

    ``ms_within``/``df_within`` substitute the error term of a larger model.
    """
    gs = _as_groups(groups)
    k = len(gs)
    if k < 2:
        raise StatsError("Tukey HSD needs k >= 2 groups")
    if ms_within is None:
        res = anova_oneway(gs)
        ms_within, df_within = res.within.ms, res.within.df
    means = {lbl: math.fsum(g) / len(g) for lbl, g in gs.items()}
    qcrit = qtukey(1.0 - alpha, k, df_within)
    pairs = []
    for a, b in itertools.combinations(gs, 2):
        diff = means[a] - means[b]
        se = math.sqrt(ms_within / 2.0 * (1.0 / len(gs[a]) + 1.0 / len(gs[b])))
        if se == 0.0:
            q = 0.0 if diff == 0.0 else math.inf
        else:
            q = abs(diff) / se
        p = 0.0 if math.isinf(q) else 1.0 - ptukey(q, k, df_within)
        pairs.append(PairComparison(a, b, diff, q, p, q > qcrit))
    return TukeyResult(alpha, k, df_within, qcrit, pairs)


def t_test_pooled(x: Sequence[float], y: Sequence[float]) -> tuple[float, float]:
    """Pooled-variance two-sample t statistic and two-sided p."""
    mx, sx = describe(x)
    my, sy = describe(y)
    nx, ny = len(x), len(y)
    df = nx + ny - 2
    sp2 = ((nx - 1) * sx * sx + (ny - 1) * sy * sy) / df
    t = (mx - my) / math.sqrt(sp2 * (1.0 / nx + 1.0 / ny))
    return t, t_sf2(t, df)


def bonferroni(alpha: float, m: int) -> float:
    if m < 1:
        raise StatsError("number of tests must be >= 1")
    return alpha / m
