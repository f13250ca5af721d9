"""Joint distance / angle-of-arrival estimation from multi-mode OFDM training.

Pipeline: combine the element signals of every training slot, strip the
pilots and Bessel amplitudes to leave a 2-D complex exponential
e^{ik_p r} e^{iℓ_u γ}, read r and γ off its shift invariance along the
subcarrier and mode axes (rank-1 ESPRIT), then solve the Bessel amplitude
equation for the elevation α, cluster the roots and recover the azimuth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import minimize
from scipy.special import jv
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from ._validation import (
    AmbiguityError,
    DegenerateSignalError,
    EstimationError,
    check_complex_array,
    check_positive,
)
from .channel import _as_modes, i_power
from .geometry import ArrayConfig, LinkPose, azimuth_from_tilt, tilt_angle


@dataclass(frozen=True)
class ElevationSearchSpec:
    """Search range [α_a, α_b] (rad), initial interval count and root-finding grid."""

    alpha_min: float = math.radians(2.0)
    alpha_max: float = math.radians(8.0)
    initial_intervals: int = 2
    grid_points: int = 2000
    tol: float = 1e-8
    max_intervals: int = 64
    fallback_fraction: float = 0.8

    def __post_init__(self):
        if not (math.isfinite(self.alpha_min) and math.isfinite(self.alpha_max)):
            raise ValueError("elevation range must be finite")
        if not self.alpha_min < self.alpha_max:
            raise ValueError("alpha_min must be below alpha_max")
        if self.initial_intervals < 2:
            raise ValueError("initial_intervals must be at least 2")
        if self.grid_points < 2 or self.max_intervals < self.initial_intervals:
            raise ValueError("grid_points >= 2 and max_intervals >= initial_intervals required")
        if not 0 < self.fallback_fraction <= 1:
            raise ValueError("fallback_fraction must lie in (0, 1]")

    def grid(self) -> np.ndarray:
        return np.linspace(self.alpha_min, self.alpha_max, self.grid_points)


DEFAULT_SEARCH = ElevationSearchSpec()


def bessel_product(modes, wavenumbers, rt, rr, alpha):
    """J_ℓ(k R_t sin α) J_0(k R_r sin α) broadcast to (U, P, len(alpha))."""
    ell = np.asarray(modes)[:, None, None]
    k = np.asarray(wavenumbers, float)[None, :, None]
    sa = np.sin(np.asarray(alpha, float))[None, None, :]
    return jv(ell, k * rt * sa) * jv(0, k * rr * sa)


def signal_model(pose: LinkPose, tx: ArrayConfig, rx: ArrayConfig, modes, wavenumbers,
                 pilots=None, beta=1.0) -> np.ndarray:
    """Noiseless combined training signals x'(ℓ_u, k_p), shape (U, P).

    x' = σ e^{ikr} e^{iℓγ} i^{-ℓ} J_ℓ(kR_t sin α) J_0(kR_r sin α),
    σ = β N² s' / (2 k r).
    """
    ell = _as_modes(modes)
    k = np.asarray(wavenumbers, float)
    s = np.ones((len(ell), len(k))) if pilots is None else np.asarray(pilots, complex)
    n = tx.element_count
    sigma = beta * n * n * s / (2.0 * k[None, :] * pose.distance)
    amp = bessel_product(ell, k, tx.radius, rx.radius, [pose.elevation])[..., 0]
    phase = np.exp(1j * k[None, :] * pose.distance) * np.exp(1j * ell[:, None] * tilt_angle(pose))
    return sigma * phase * i_power(-ell)[:, None] * amp


def combine_training(frame) -> np.ndarray:
    """Sum over receive elements: frame (P, N, U) -> X' (U, P)."""
    y = check_complex_array(frame, "frame", ndim=3)
    return y.sum(axis=1).T


def normalize(x, pilots, signs, modes) -> np.ndarray:
    """Unit-modulus x̃ = (x'/|x'|)(s'*/|s'|) i^ℓ · sign."""
    x = check_complex_array(x, "combined signals", ndim=2, allow_zero=False)
    ell = _as_modes(modes)
    if x.shape[0] != len(ell):
        raise ValueError(f"{x.shape[0]} rows for {len(ell)} modes")
    s = np.broadcast_to(np.asarray(1.0 if pilots is None else pilots, complex), x.shape)
    if np.any(s == 0):
        raise DegenerateSignalError("zero pilot")
    signs = np.broadcast_to(np.asarray(signs, float), x.shape)
    return (x / np.abs(x)) * (s.conj() / np.abs(s)) * i_power(ell)[:, None] * signs


def _stack(x, axis):
    # subcarrier axis: modes vary fastest (column stacking); mode axis: row stacking
    if axis == "subcarrier":
        return np.swapaxes(x, -1, -2).reshape(x.shape[:-2] + (-1,)), x.shape[-2]
    if axis == "mode":
        return x.reshape(x.shape[:-2] + (-1,)), x.shape[-1]
    raise ValueError("axis must be 'subcarrier' or 'mode'")


def esprit_phase_step(x, axis="subcarrier", snapshots=None) -> float:
    """Rank-1 ESPRIT phase step along one axis of a (U, P) or (T, U, P) matrix.

    The stacked vectors form the sample covariance; the dominant eigenvector q
    is split into leading and trailing sub-vectors offset by one block, and
    Φ = q₁⁺ q₂ solves q₂ ≈ Φ q₁ in least squares. Returns arg Φ in (-π, π].
    """
    x = np.asarray(x, complex)
    if x.ndim == 2:
        x = x[None]
    if snapshots is not None:
        x = x[:snapshots]
    length = x.shape[2] if axis == "subcarrier" else x.shape[1]
    if length < 2:
        raise EstimationError(f"need at least 2 samples along the {axis} axis", "esprit")
    v, offset = _stack(x, axis)
    cov = v.T @ v.conj() / v.shape[0]
    w, q = np.linalg.eigh(cov)
    if not np.isfinite(w[-1]) or w[-1] <= 0:
        raise EstimationError("zero covariance", "esprit")
    q = q[:, -1]
    q1, q2 = q[:-offset], q[offset:]
    phi = np.vdot(q1, q2) / np.vdot(q1, q1).real
    return float(np.angle(phi))


def ls_phase_step(x, axis="subcarrier"):
    """Direct least-squares phase progression of a single snapshot (lag-1 correlation)."""
    x = np.asarray(x, complex)
    if axis == "subcarrier":
        c = np.sum(x[..., :, :-1].conj() * x[..., :, 1:], axis=(-2, -1))
    elif axis == "mode":
        c = np.sum(x[..., :-1, :].conj() * x[..., 1:, :], axis=(-2, -1))
    else:
        raise ValueError("axis must be 'subcarrier' or 'mode'")
    return np.angle(c)


def check_prior(prior, dk):
    """(lo, hi, period) for a usable window: nonempty and no wider than 2π/Δk."""
    lo, hi = map(float, prior)
    dk = check_positive(dk, "dk")
    period = 2 * math.pi / dk
    if not hi > lo:
        raise AmbiguityError("empty prior window", "ambiguity")
    if hi - lo > period * (1 + 1e-12):
        raise AmbiguityError(
            f"prior window [{lo:g}, {hi:g}) is wider than the ambiguity period {period:.6g} m",
            "ambiguity",
        )
    return lo, hi, period


def resolve_distance_ambiguity(phase_step, dk, prior):
    """Unique r ≡ phase_step/Δk (mod 2π/Δk) inside the half-open window [lo, hi).

    Returns (r, wraps) where ``wraps`` counts the 2π turns added.
    """
    lo, hi, period = check_prior(prior, dk)
    base = phase_step / dk
    wraps = math.ceil((lo - base) / period - 1e-12)
    r = base + wraps * period
    if not lo - 1e-12 <= r < hi:
        raise AmbiguityError(f"no distance candidate inside [{lo:g}, {hi:g})", "ambiguity")
    return r, wraps


@dataclass
class ElevationCandidates:
    """Flattened α roots; ``owner`` indexes the (u, p) pair in row-major order."""

    roots: np.ndarray
    owner: np.ndarray
    shape: tuple

    @property
    def empty(self) -> np.ndarray:
        counts = np.bincount(self.owner, minlength=int(np.prod(self.shape)))
        return (counts == 0).reshape(self.shape)

    def per_pair(self):
        order = np.argsort(self.owner, kind="stable")
        splits = np.cumsum(np.bincount(self.owner, minlength=int(np.prod(self.shape))))[:-1]
        return np.split(self.roots[order], splits)


@lru_cache(maxsize=32)
def _table(modes, wavenumbers, rt, rr, alpha_min, alpha_max, points):
    grid = np.linspace(alpha_min, alpha_max, points)
    tab = bessel_product(np.asarray(modes), np.asarray(wavenumbers), rt, rr, grid)
    tab.setflags(write=False)
    return grid, tab


def _lookup(modes, wavenumbers, rt, rr, spec):
    return _table(tuple(int(m) for m in modes), tuple(float(k) for k in wavenumbers),
                  float(rt), float(rr), spec.alpha_min, spec.alpha_max, spec.grid_points)


def amplitude_ratio(x, r_hat, pilots, element_count, wavenumbers, beta=1.0):
    """|x'| / |σ̂| with σ̂ = β N² s' / (2 k r̂)."""
    k = np.asarray(wavenumbers, float)
    s = np.broadcast_to(np.asarray(1.0 if pilots is None else pilots, complex), np.shape(x))
    sigma = np.abs(beta) * element_count**2 * np.abs(s) / (2.0 * k[None, :] * r_hat)
    return np.abs(x) / sigma


def solve_elevation(x, r_hat, spec: ElevationSearchSpec, tx: ArrayConfig, rx: ArrayConfig,
                    modes, wavenumbers, signs, pilots=None, beta=1.0) -> ElevationCandidates:
    """All α in the search range with J_ℓ(kR_t sin α) J_0(kR_r sin α) = δ(ℓ, k).

    Roots are bracketed on a dense grid and refined by bisection to ``spec.tol``.
    """
    if not r_hat > 0:
        raise EstimationError("distance estimate must be positive", "elevation")
    ell = _as_modes(modes)
    k = np.asarray(wavenumbers, float)
    x = np.asarray(x, complex)
    delta = amplitude_ratio(x, r_hat, pilots, tx.element_count, k, beta) * np.broadcast_to(signs, x.shape)
    grid, tab = _lookup(ell, k, tx.radius, rx.radius, spec)
    f = tab - delta[..., None]
    u, p, g = np.nonzero((f[..., :-1] == 0) | (f[..., :-1] * f[..., 1:] < 0))
    lo, hi = grid[g], grid[g + 1]
    flo = f[u, p, g]
    exact = flo == 0
    e_ell, e_k, e_d = ell[u], k[p], delta[u, p]
    while np.any(hi - lo > spec.tol):
        mid = 0.5 * (lo + hi)
        sm = np.sin(mid)
        fm = jv(e_ell, e_k * tx.radius * sm) * jv(0, e_k * rx.radius * sm) - e_d
        left = (flo * fm <= 0) | exact
        hi = np.where(left, mid, hi)
        lo = np.where(left, lo, mid)
        flo = np.where(left, flo, fm)
    roots = np.where(exact, grid[g], 0.5 * (lo + hi))
    owner = u * len(k) + p
    order = np.lexsort((roots, owner))
    return ElevationCandidates(roots[order], owner[order], (len(ell), len(k)))


@dataclass
class ClusterResult:
    alpha: float
    interval: tuple
    intervals_used: int
    members: int
    fallback: bool = False
    weak: bool = False


def _pick_members(roots, owner, sel):
    """One root per (u, p) pair inside the bin: the one nearest the bin median."""
    r, o = roots[sel], owner[sel]
    med = np.median(r)
    order = np.lexsort((np.abs(r - med), o))
    r, o = r[order], o[order]
    first = np.ones(len(o), bool)
    first[1:] = o[1:] != o[:-1]
    return r[first]


def cluster_and_average(candidates: ElevationCandidates, spec: ElevationSearchSpec = DEFAULT_SEARCH,
                        target=None, window=None) -> ClusterResult:
    """Interval-splitting cluster search over the elevation range.

    The range is split into 𝒟 equal intervals and candidates are binned; while
    the fullest bin holds more than ``target`` (default Ũ·P̃) candidates 𝒟 is
    incremented. A bin with exactly ``target`` candidates from distinct
    (ℓ, k) pairs is averaged into α̂. Past ``spec.max_intervals`` the search
    falls back to the finest partition with a bin covering at least
    ``fallback_fraction`` of the (ℓ, k) pairs and averages one root per pair,
    the one nearest the bin median.

    ``window`` optionally restricts the search to bins overlapping an α
    range; the estimator passes the range that generated its sign pattern.
    """
    roots, owner = candidates.roots, candidates.owner
    if roots.size == 0:
        raise EstimationError("no elevation candidates in the search range", "cluster")
    target = int(np.prod(candidates.shape)) if target is None else int(target)
    need = math.ceil(spec.fallback_fraction * target)
    best = None
    fallback = None
    span = spec.alpha_max - spec.alpha_min
    n_pairs = int(np.prod(candidates.shape))
    for d in range(spec.initial_intervals, spec.max_intervals + 1):
        edges = spec.alpha_min + span * np.arange(d + 1) / d
        allowed = np.ones(d, bool)
        if window is not None:
            allowed = (edges[1:] >= window[0]) & (edges[:-1] <= window[1])
            if not allowed.any():
                raise EstimationError("window lies outside the search range", "cluster")
        idx = np.minimum(((roots - spec.alpha_min) / span * d).astype(int), d - 1)
        counts = np.where(allowed, np.bincount(idx, minlength=d), -1)
        j = int(np.argmax(counts))
        sel = idx == j
        if counts[j] == target and np.unique(owner[sel]).size == target:
            return ClusterResult(float(np.mean(roots[sel])), (float(edges[j]), float(edges[j + 1])), d, target)
        # coverage: distinct (l, k) pairs per bin, robust to duplicate roots
        cover = np.where(allowed, np.bincount(np.unique(idx * n_pairs + owner) // n_pairs, minlength=d), -1)
        jc = int(np.argmax(cover))
        sel = idx == jc
        if cover[jc] >= need:
            fallback = (d, edges[jc], edges[jc + 1], sel)
        if best is None or cover[jc] > best[0]:
            best = (int(cover[jc]), d, edges[jc], edges[jc + 1], sel)
    weak = fallback is None
    d, lo, hi, sel = best[1:] if weak else fallback
    members = _pick_members(roots, owner, sel)
    return ClusterResult(float(np.mean(members)), (float(lo), float(hi)), d, members.size,
                         fallback=True, weak=weak)


@dataclass
class SignHypotheses:
    """Distinct sign patterns of the Bessel product over the elevation grid."""

    patterns: np.ndarray  # (H, U, P) of ±1
    intervals: np.ndarray  # (H, 2) generating α range


def sign_hypotheses(modes, wavenumbers, rt, rr, spec: ElevationSearchSpec = DEFAULT_SEARCH):
    grid, tab = _lookup(_as_modes(modes), wavenumbers, rt, rr, spec)
    sg = np.where(tab >= 0, 1, -1).astype(np.int8)
    flat = sg.reshape(-1, sg.shape[-1]).T  # (G, U*P)
    change = np.ones(len(flat), bool)
    change[1:] = np.any(flat[1:] != flat[:-1], axis=1)
    starts = np.flatnonzero(change)
    ends = np.append(starts[1:] - 1, len(flat) - 1)
    pats = flat[starts].reshape((-1,) + sg.shape[:2]).astype(float)
    return SignHypotheses(pats, np.stack([grid[starts], grid[ends]], axis=1))


def amplitude_misfit(delta, modes, wavenumbers, rt, rr, hyp: SignHypotheses,
                     spec: ElevationSearchSpec = DEFAULT_SEARCH) -> np.ndarray:
    """Per hypothesis, min over its α range of Σ (|δ| - |J_ℓ J_0|)² / Σ δ²."""
    grid, tab = _lookup(_as_modes(modes), wavenumbers, rt, rr, spec)
    d = np.abs(delta)[..., None]
    curve = np.sum((d - np.abs(tab)) ** 2, axis=(0, 1)) / np.sum(d**2)
    starts = np.searchsorted(grid, hyp.intervals[:, 0])
    return np.minimum.reduceat(curve, starts)


def coherence(xt, weights=None) -> np.ndarray:
    """Fit quality in [0, 1] of a 2-D complex exponential to unit-modulus x̃ (…, U, P)."""
    u, p = xt.shape[-2:]
    w = np.ones((u, p)) if weights is None else np.asarray(weights, float)
    z = xt * w
    wk = ls_phase_step(z, "subcarrier")
    wl = ls_phase_step(z, "mode")
    model = np.exp(-1j * (np.multiply.outer(wl, np.arange(u))[..., :, None]
                          + np.multiply.outer(wk, np.arange(p))[..., None, :]))
    return np.abs(np.sum(z * model, axis=(-2, -1))) / w.sum()


def refine_phase_steps(z, step_mode, step_sub):
    """Polish both phase steps by maximising the 2-D periodogram |Σ z e^{-i(ω_ℓ u + ω_k p)}|.

    Started from the ESPRIT steps, this is the single-tone maximum-likelihood
    estimate for the weighted signal ``z``.
    """
    u = np.arange(z.shape[0])[:, None]
    p = np.arange(z.shape[1])[None, :]

    def cost(w):
        return -np.abs(np.sum(z * np.exp(-1j * (w[0] * u + w[1] * p))))

    res = minimize(cost, [step_mode, step_sub], method="Nelder-Mead",
                   options={"xatol": 1e-11, "fatol": 1e-15, "maxiter": 2000})
    wl, wk = (float(np.angle(np.exp(1j * v))) for v in res.x)
    return wl, wk


@dataclass
class PoseEstimate:
    r_hat: float
    gamma_hat: float
    alpha_hat: float
    phi_hat: float
    diagnostics: dict = field(default_factory=dict, repr=False)

    def as_pose(self) -> LinkPose:
        if not abs(self.phi_hat) < math.pi / 2:
            raise EstimationError(
                f"azimuth estimate {math.degrees(self.phi_hat):.3f} deg is not a valid pose", "pose"
            )
        return LinkPose(self.r_hat, self.phi_hat, self.alpha_hat)

    def as_array(self) -> np.ndarray:
        return np.array([self.r_hat, self.gamma_hat, self.alpha_hat, self.phi_hat])

    def report(self) -> str:
        """Structured text dump of the estimate and its diagnostics."""
        d = self.diagnostics
        lines = [
            "[estimate]",
            f"r_hat = {self.r_hat!r}",
            f"gamma_hat_deg = {math.degrees(self.gamma_hat)!r}",
            f"alpha_hat_deg = {math.degrees(self.alpha_hat)!r}",
            f"phi_hat_deg = {math.degrees(self.phi_hat)!r}",
            "[distance]",
            f"phase_step = {d.get('phase_step_r')!r}",
            f"wraps = {d.get('wraps')!r}",
            "[hypotheses]",
        ]
        for rank, (score, lo, hi, ok) in enumerate(d.get("hypotheses", [])):
            lines.append(
                f"h{rank} = score {score:.6f} alpha_deg [{math.degrees(lo):.4f}, "
                f"{math.degrees(hi):.4f}] consistent {ok}"
            )
        c = d.get("cluster")
        if c is not None:
            lines += [
                "[cluster]",
                f"interval_deg = [{math.degrees(c.interval[0]):.6f}, {math.degrees(c.interval[1]):.6f}]",
                f"intervals_used = {c.intervals_used}",
                f"members = {c.members}",
                f"fallback = {c.fallback}",
                f"weak = {c.weak}",
            ]
        cand = d.get("candidates")
        if cand is not None:
            lines.append("[candidates_deg]")
            ell, k = d.get("modes", ()), d.get("wavenumbers", ())
            for i, roots in enumerate(cand.per_pair()):
                u, p = divmod(i, cand.shape[1])
                label = f"l{ell[u]}_k{k[p]:g}" if len(ell) else f"u{u}_p{p}"
                lines.append(f"{label} = " + " ".join(f"{math.degrees(a):.6f}" for a in roots))
        flags = d.get("flags", [])
        lines += ["[flags]", "flags = " + (", ".join(flags) if flags else "none")]
        return "\n".join(lines) + "\n"


def estimate_pose(x, tx: ArrayConfig, rx: ArrayConfig, modes, wavenumbers, prior,
                  pilots=None, beta=1.0, spec: ElevationSearchSpec = DEFAULT_SEARCH,
                  weighting="amplitude", refine=True, max_hypotheses=8,
                  margin=math.radians(0.5), keep_candidates=True,
                  ranking="amplitude") -> PoseEstimate:
    """Full estimator on combined training signals ``x`` (U, P) or a raw frame (P, N, U).

    ``prior`` is the distance window [lo, hi) used to unwrap the r phase step.
    With ``weighting="unit"`` and ``refine=False`` the ESPRIT stage runs on
    the unit-modulus matrix x̃ exactly as derived; the default weights every
    entry by |x'| and polishes the two phase steps on the 2-D periodogram,
    which keeps deep Bessel nulls from dominating the phase estimates.

    Sign hypotheses are ranked by ``ranking``: ``"amplitude"`` orders them by
    the best fit of |x'|/σ̂ to |J_ℓ J_0| inside each hypothesis' α range,
    ``"coherence"`` by exponential-fit coherence of the sign-corrected
    phases. The first whose elevation estimate falls inside its own
    generating α range (widened by ``margin``) is kept, otherwise the
    top-ranked one.
    """
    if weighting not in ("amplitude", "unit"):
        raise ValueError("weighting must be 'amplitude' or 'unit'")
    if ranking not in ("amplitude", "coherence"):
        raise ValueError("ranking must be 'amplitude' or 'coherence'")
    x = np.asarray(x, complex)
    if x.ndim == 3:
        x = combine_training(x)
    ell = _as_modes(modes)
    k = np.asarray(wavenumbers, float)
    x = check_complex_array(x, "combined signals", shape=(len(ell), len(k)))
    if np.any(x == 0):
        raise DegenerateSignalError("combined training signal has zero entries")
    dk = np.diff(k)
    dl = np.diff(ell)
    if len(k) < 2 or not np.allclose(dk, dk[0]):
        raise EstimationError("training subcarriers must be uniformly spaced", "esprit")
    if len(ell) < 2 or not np.all(dl == dl[0]):
        raise EstimationError("training modes must be uniformly spaced", "esprit")
    dk, dl = float(dk[0]), int(dl[0])
    check_prior(prior, dk)

    hyp = sign_hypotheses(ell, k, tx.radius, rx.radius, spec)
    base = normalize(x, pilots, 1.0, ell)
    weights = np.abs(x) if weighting == "amplitude" else np.ones(x.shape)
    scores = coherence(base[None] * hyp.patterns, weights)
    if ranking == "coherence":
        order = np.argsort(-scores, kind="stable")[:max_hypotheses]
    else:
        # distance from the most coherent pattern that lands inside the window
        r0 = None
        for top in np.argsort(-scores, kind="stable"):
            z0 = base * hyp.patterns[top] * weights
            try:
                r0, _ = resolve_distance_ambiguity(esprit_phase_step(z0, "subcarrier"), dk, prior)
                break
            except AmbiguityError:
                continue
        if r0 is None:
            raise AmbiguityError(f"no distance candidate inside [{prior[0]:g}, {prior[1]:g})",
                                 "ambiguity")
        delta = amplitude_ratio(x, r0, pilots, tx.element_count, k, beta)
        misfit = amplitude_misfit(delta, ell, k, tx.radius, rx.radius, hyp, spec)
        order = np.argsort(misfit, kind="stable")[:max_hypotheses]

    def phase_stage(h):
        z = base * hyp.patterns[h] * weights
        step_r = esprit_phase_step(z, "subcarrier")
        step_g = esprit_phase_step(z, "mode")
        if refine:
            step_g, step_r = refine_phase_steps(z, step_g, step_r)
        r_hat, wraps = resolve_distance_ambiguity(step_r, dk, prior)
        return step_r, r_hat, wraps, abs(step_g / dl)

    tried = []
    chosen = None
    for h in order:
        lo, hi = (float(v) for v in hyp.intervals[h])
        try:
            # a distance outside the prior window rules the sign pattern out
            step_r, r_hat, wraps, gamma_hat = phase_stage(h)
            cand = solve_elevation(x, r_hat, spec, tx, rx, ell, k, hyp.patterns[h], pilots, beta)
            cl = cluster_and_average(cand, spec, window=(lo - margin, hi + margin))
        except EstimationError:
            tried.append((float(scores[h]), lo, hi, False))
            continue
        ok = lo - margin <= cl.alpha <= hi + margin
        tried.append((float(scores[h]), lo, hi, bool(ok)))
        result = (h, step_r, r_hat, wraps, gamma_hat, cand, cl)
        if chosen is None:
            chosen = result
        if ok:
            chosen = result
            break
    if chosen is None:
        raise EstimationError("no sign hypothesis produced an elevation estimate", "cluster")
    h, step_r, r_hat, wraps, gamma_hat, cand, cl = chosen
    alpha_hat = cl.alpha
    if ranking == "amplitude":
        # phases from the most coherent sign pattern compatible with α̂
        near = np.flatnonzero((hyp.intervals[:, 0] - margin <= alpha_hat)
                              & (hyp.intervals[:, 1] + margin >= alpha_hat))
        best = int(near[np.argmax(scores[near])]) if near.size else h
        if best != h:
            try:
                step_r, r_hat, wraps, gamma_hat = phase_stage(best)
                h = best
            except AmbiguityError:
                pass
    flags = []
    if not tried[-1][3]:
        flags.append("no_consistent_hypothesis")
    if cl.fallback:
        flags.append("cluster_fallback")
    if cl.weak:
        flags.append("weak_cluster")
    if np.any(cand.empty):
        flags.append(f"empty_candidate_lists={int(cand.empty.sum())}")
    if math.cos(gamma_hat) > math.cos(alpha_hat):
        flags.append("tilt_below_elevation")
    phi_hat = float(azimuth_from_tilt(gamma_hat, alpha_hat))
    if phi_hat >= math.pi / 2:
        flags.append("azimuth_out_of_range")
    diag = {
        "phase_step_r": step_r,
        "wraps": wraps,
        "hypothesis": int(h),
        "hypotheses": tried,
        "cluster": cl,
        "candidates": cand if keep_candidates else None,
        "modes": tuple(int(v) for v in ell),
        "wavenumbers": tuple(float(v) for v in k),
        "flags": flags,
    }
    return PoseEstimate(float(r_hat), float(gamma_hat), float(alpha_hat), phi_hat, diag)


class PoseEstimator(BaseEstimator):
    """Estimator-API wrapper around :func:`estimate_pose`.

    ``fit`` takes one training observation, either combined signals (U, P) or
    a received frame (P, N, U), and sets ``r_``, ``gamma_``, ``alpha_``,
    ``phi_``, ``pose_`` and ``diagnostics_``. ``predict`` maps a stack of
    combined observations (T, U, P) to rows [r, γ, α, φ].
    """

    def __init__(self, tx=None, rx=None, modes=(-4, -3, -2, -1, 0, 1, 2, 3),
                 wavenumbers=tuple(range(47, 55)), distance_prior=(37.0, 43.0),
                 pilots=None, beta=1.0, search=DEFAULT_SEARCH, weighting="amplitude",
                 refine=True, max_hypotheses=8):
        self.tx = tx
        self.rx = rx
        self.modes = modes
        self.wavenumbers = wavenumbers
        self.distance_prior = distance_prior
        self.pilots = pilots
        self.beta = beta
        self.search = search
        self.weighting = weighting
        self.refine = refine
        self.max_hypotheses = max_hypotheses

    def _check_params(self):
        if not isinstance(self.tx, ArrayConfig) or not isinstance(self.rx, ArrayConfig):
            raise TypeError("tx and rx must be ArrayConfig instances")
        if self.tx.element_count != self.rx.element_count:
            raise ValueError("tx and rx must have the same element count")
        if len(self.distance_prior) != 2:
            raise ValueError("distance_prior must be a (lo, hi) pair")

    def _estimate(self, x, keep=True):
        return estimate_pose(
            x, self.tx, self.rx, self.modes, self.wavenumbers, self.distance_prior,
            self.pilots, self.beta, self.search, self.weighting, self.refine,
            self.max_hypotheses, keep_candidates=keep,
        )

    def fit(self, X, y=None):
        self._check_params()
        est = self._estimate(X)
        self.estimate_ = est
        self.r_, self.gamma_, self.alpha_, self.phi_ = est.as_array()
        self.pose_ = est.as_pose()
        self.diagnostics_ = est.diagnostics
        return self

    def predict(self, X):
        self._check_params()
        X = np.asarray(X, complex)
        if X.ndim == 2:
            X = X[None]
        return np.stack([self._estimate(x, keep=False).as_array() for x in X])

    def report(self):
        if not hasattr(self, "estimate_"):
            raise NotFittedError("PoseEstimator is not fitted yet")
        return self.estimate_.report()
