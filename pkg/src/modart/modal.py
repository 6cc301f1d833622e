"""Pole finding, eigenvector extraction, and undriven residues.

Two pole back-ends: simultaneous Newton iteration with Ehrlich-Aberth
deflation on det(I - A D(z)) (works with real-valued delays), and
largest-magnitude eigenvalues of the expanded state transition matrix
(integer delays only, sparse Arnoldi via ARPACK with a dense fallback at
small sizes).

Amplitude convention: the undriven residue is normalized so that the
rendered sum_m R_m p_m^n reproduces the time-domain response exactly
(simple poles). For H(z) with a simple pole p this amplitude is
C(p) adj(L(p)) B(p) / (p * tr(adj(L(p)) L'(p))); the extra 1/p relative
to the raw adjugate-trace quotient is required for the z^-1 partial
fraction convention (verified against the scalar comb closed form and a
contour-integral oracle in the tests).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (
    BreakdownError,
    DegenerateModeError,
    DomainError,
    EmptySelectionError,
    IncompatibleFlagsError,
    NoConvergenceError,
    NotAPoleError,
    UndefinedT60Error,
)
from .sampling import stream_generator
from .timedomain import ArtSystem, StateTransition, build_state_transition

_DENSE_EIG_CUTOFF = 900  # below this state count, decompose densely
_REAL_SNAP = 1e-10  # |Im| below this snaps a pole to the real axis
_MERGE_TOL = 1e-8  # estimates closer than this are one root


def magnitude_threshold(t_tr_s: float, fs_e: float) -> float:
    """Smallest pole magnitude whose decay time reaches t_tr seconds."""
    return 10.0 ** (-6.0 / (t_tr_s * fs_e))


def pole_descriptors(pole, fs_e: float):
    """(t60 seconds, frequency Hz) of one pole value."""
    p = complex(pole)
    mag = abs(p)
    if mag == 0.0:
        raise DomainError("descriptors undefined at p = 0")
    if mag == 1.0:
        raise UndefinedT60Error("critically stable pole (|p| = 1) has no decay time")
    t60 = math.log(1e-6) / (fs_e * math.log(mag))
    freq = fs_e * np.angle(p) / (2.0 * np.pi)
    return t60, float(freq)


@dataclass(frozen=True)
class Pole:
    value: complex
    magnitude: float
    phase: float
    t60_s: float
    freq_hz: float
    backend: str

    @classmethod
    def from_value(cls, value: complex, fs_e: float, backend: str) -> "Pole":
        t60, freq = pole_descriptors(value, fs_e)
        return cls(
            value=complex(value),
            magnitude=abs(value),
            phase=float(np.angle(value)),
            t60_s=t60,
            freq_hz=freq,
            backend=backend,
        )


@dataclass(frozen=True)
class ModePair:
    """One energy decay mode: pole, coupling eigenvectors, undriven residue."""

    pole: Pole
    left: np.ndarray  # u, length N_L
    right: np.ndarray  # v, length N_L
    undriven_residue: complex


@dataclass(frozen=True)
class ModalModel:
    modes: tuple  # ModePair, sorted by descending |pole|
    fs_e: float
    transition_time_s: float
    delay_mode: str  # "integer" | "fractional"
    system_hash: str = ""
    scene_hash: str = ""
    is_full: bool = False

    @property
    def n_modes(self) -> int:
        return len(self.modes)

    @property
    def poles(self):
        return [m.pole for m in self.modes]


def _as_dense(a) -> np.ndarray:
    if sp.issparse(a):
        return a.toarray()
    return np.asarray(a, dtype=np.float64)


def _loop_dense(a: np.ndarray, tau: np.ndarray, z: complex):
    d = np.asarray(z, dtype=np.complex128) ** (-tau)
    return np.eye(len(tau), dtype=np.complex128) - a * d[np.newaxis, :]


def _loop_prime_dense(a: np.ndarray, tau: np.ndarray, z: complex):
    dprime = -tau * np.asarray(z, dtype=np.complex128) ** (-tau - 1.0)
    return -a * dprime[np.newaxis, :]


def _canonicalize(values, merge_tol=_MERGE_TOL):
    """Merge duplicate estimates and enforce exact conjugate closure."""
    vals = [complex(v) for v in values]
    clusters = []
    for v in sorted(vals, key=lambda q: (-abs(q), q.real, q.imag)):
        for c in clusters:
            if abs(v - c[0] / c[1]) <= merge_tol:
                c[0] += v
                c[1] += 1
                break
        else:
            clusters.append([v, 1])
    merged = [c[0] / c[1] for c in clusters]
    reals = []
    upper = []
    for v in merged:
        if abs(v.imag) <= _REAL_SNAP:
            reals.append(complex(v.real, 0.0))
        elif v.imag > 0:
            upper.append(v)
    # Pair each upper-half pole with its mirror (averaging when both were
    # found); emit exact conjugate pairs.
    lowers = [v for v in merged if v.imag < -_REAL_SNAP]
    out = list(reals)
    used = [False] * len(lowers)
    for v in upper:
        best, bestd = None, np.inf
        for i, w in enumerate(lowers):
            if used[i]:
                continue
            d = abs(np.conj(w) - v)
            if d < bestd:
                best, bestd = i, d
        if best is not None and bestd <= 1e-6 * max(1.0, abs(v)):
            used[best] = True
            v = 0.5 * (v + np.conj(lowers[best]))
        out.append(v)
        out.append(np.conj(v))
    for i, w in enumerate(lowers):
        if not used[i]:
            out.append(np.conj(w))
            out.append(w)
    return out


_LIVE, _CONVERGED, _SUBTHRESHOLD, _DIVERGED = 0, 1, 2, 3


def eai_poles(feedback, delays, fs_e: float, t_tr_s: float, restrict: str = "all",
              n_estimates: int = None, max_sweeps: int = 500, step_tol: float = 1e-10,
              cond_max: float = 1e12) -> list:
    """Simultaneous pole search on det(I - A D(z)); fractional delays allowed.

    Estimates update with a Newton step 1/tr(L^-1 L') deflated against all
    other estimates (frozen ones included). An estimate freezes when its
    step is below step_tol, when cond(L) exceeds cond_max (it sits on a
    pole), or when it falls below the t_tr magnitude threshold.
    """
    a = _as_dense(feedback.matrix if hasattr(feedback, "matrix") else feedback)
    tau = np.asarray(delays, dtype=np.float64)
    n_l = a.shape[0]
    thresh = magnitude_threshold(t_tr_s, fs_e)

    if n_estimates is None:
        n_estimates = int(np.rint(tau.sum()))
    n_estimates = max(n_estimates, 1)
    if n_estimates > 4000:
        raise ValueError(
            f"{n_estimates} estimates is impractical for the dense Newton "
            "iteration; use the state-transition eigenvalue backend"
        )

    # No root can exceed max_j gain_j^(1/tau_j): beyond it every column sum
    # of A D(z) is < 1, so I - A D(z) is nonsingular. Seeding just outside
    # that bound makes the estimates sweep inward over the whole spectrum.
    col_gain = np.asarray(a.sum(axis=0)).ravel()
    ok = col_gain > 0
    if np.any(ok):
        bound = float(np.max(col_gain[ok] ** (1.0 / tau[ok])))
    else:
        bound = 0.5
    radius = min(bound * 1.001, 0.9995)

    if restrict == "real_positive":
        lo = max(1e-3, min(thresh * 1.0001, 0.999))
        hi = 0.9995
        p = np.linspace(lo, hi, n_estimates).astype(np.complex128)
    elif restrict == "all":
        angles = 2.0 * np.pi * np.arange(n_estimates) / n_estimates
        p = radius * np.exp(1j * angles)
    else:
        raise ValueError(f"unknown restrict mode {restrict!r}")

    status = np.full(n_estimates, _LIVE, dtype=np.int8)
    eye = np.eye(n_l, dtype=np.complex128)

    for _sweep in range(max_sweeps):
        live = np.flatnonzero(status == _LIVE)
        if live.size == 0:
            break
        snapshot = p.copy()
        for m in live:
            pm = snapshot[m]
            lmat = _loop_dense(a, tau, pm)
            try:
                inv = np.linalg.solve(lmat, eye)
            except np.linalg.LinAlgError:
                status[m] = _CONVERGED
                continue
            cond1 = np.linalg.norm(lmat, 1) * np.linalg.norm(inv, 1)
            if cond1 > cond_max:
                status[m] = _CONVERGED
                continue
            lprime = _loop_prime_dense(a, tau, pm)
            # Newton step on the generalized characteristic polynomial
            # q(z) = z^(sum tau) det L(z): q'/q = (sum tau)/z + tr(L^-1 L').
            # det L alone tends to 1 away from the spectrum and would repel
            # estimates seeded outside the root ring.
            denom_tr = tau.sum() / pm + np.einsum("ij,ji->", inv, lprime)
            if denom_tr == 0:
                status[m] = _DIVERGED
                continue
            newton = 1.0 / denom_tr
            diffs = pm - np.delete(snapshot, m)
            small = np.abs(diffs) < 1e-30
            defl = np.sum(1.0 / diffs[~small])
            aberth_den = 1.0 - newton * defl
            step = newton if abs(aberth_den) < 1e-12 else newton / aberth_den
            pn = pm - step
            if restrict == "real_positive":
                pn = complex(pn.real, 0.0)
                if pn.real <= 0.0:
                    status[m] = _SUBTHRESHOLD
                    p[m] = complex(1e-300, 0.0)
                    continue
            if not np.isfinite(pn) or abs(pn) > 2.0:
                status[m] = _DIVERGED
                p[m] = pn if np.isfinite(pn) else complex(2.0, 0.0)
                continue
            p[m] = pn
            if abs(pn) < thresh:
                status[m] = _SUBTHRESHOLD
            elif abs(step) < step_tol:
                status[m] = _CONVERGED
    else:
        survivors = [complex(v) for v, s in zip(p, status) if s == _CONVERGED]
        raise NoConvergenceError(
            f"{int(np.sum(status == _LIVE))} estimates still moving after "
            f"{max_sweeps} sweeps",
            partial=survivors,
        )

    converged = [complex(v) for v, s in zip(p, status) if s == _CONVERGED]
    vals = [v for v in _canonicalize(converged) if abs(v) >= thresh]
    if restrict == "real_positive":
        vals = [v for v in vals if abs(v.imag) <= _REAL_SNAP and v.real > 0]
    vals.sort(key=lambda q: (-abs(q), -q.real, q.imag))
    return [Pole.from_value(v, fs_e, "eai") for v in vals]


def arnoldi_poles(transition: StateTransition, fs_e: float, t_tr_s: float = None,
                  how_many: int = None, residual_tol: float = 1e-9,
                  seed: int = 0, arpack_tol: float = 1e-12) -> list:
    """Largest-magnitude eigenvalues of the state transition matrix.

    With t_tr_s given, the subspace is grown until the smallest computed
    magnitude crosses the threshold, so every pole above it is captured.
    Accepted eigenpairs must satisfy ||T q - p q|| / |p| <= residual_tol.
    """
    if t_tr_s is None and how_many is None:
        raise ValueError("give t_tr_s or how_many")
    mat = transition.matrix
    n = mat.shape[0]
    thresh = magnitude_threshold(t_tr_s, fs_e) if t_tr_s is not None else 0.0

    def _residual_ok(vals, vecs, accept_mask):
        for i in np.flatnonzero(accept_mask):
            q = vecs[:, i]
            r = np.linalg.norm(mat.dot(q) - vals[i] * q) / max(abs(vals[i]), 1e-300)
            if r > residual_tol:
                return False
        return True

    dense = n <= _DENSE_EIG_CUTOFF or (how_many is not None and how_many >= n - 2)
    if dense:
        vals, vecs = np.linalg.eig(mat.toarray())
    else:
        k = min(max(how_many or 16, 4), n - 2)
        vals = vecs = None
        while True:
            last_err = None
            for attempt in range(5):
                v0 = np.ones(n)
                if attempt:
                    rng = stream_generator(seed, ("krylov", attempt))
                    v0 = v0 + 0.5 * rng.standard_normal(n)
                v0 /= np.linalg.norm(v0)
                try:
                    with warnings.catch_warnings():
                        warnings.simplefilter("ignore")
                        vals, vecs = spla.eigs(
                            mat, k=k, which="LM", v0=v0, tol=arpack_tol,
                            ncv=min(n, max(6 * k, 60)),
                        )
                    break
                except spla.ArpackNoConvergence as exc:
                    last_err = exc
                    vals = vecs = None
            if vals is None:
                raise BreakdownError(
                    f"Krylov iteration failed after 5 restarts: {last_err}"
                )
            if how_many is not None or k >= n - 2:
                break
            if np.min(np.abs(vals)) <= thresh:
                break
            k = min(2 * k, n - 2)

    order = np.argsort(-np.abs(vals), kind="stable")
    vals = vals[order]
    vecs = vecs[:, order]
    if how_many is not None:
        accept = np.zeros(len(vals), dtype=bool)
        accept[: min(how_many, len(vals))] = True
        accept &= np.abs(vals) > 1e-12  # zero modes carry no decay content
    else:
        accept = np.abs(vals) >= thresh
    if not _residual_ok(vals, vecs, accept):
        raise BreakdownError("an accepted eigenpair failed the residual check")
    out = _canonicalize([complex(v) for v in vals[accept]])
    if how_many is None:
        out = [v for v in out if abs(v) >= thresh]
    out.sort(key=lambda q: (-abs(q), -q.real, q.imag))
    return [Pole.from_value(v, fs_e, "arnoldi") for v in out]


def _fix_phase(vec: np.ndarray) -> np.ndarray:
    mags = np.abs(vec)
    big = np.flatnonzero(mags > 1e-8 * mags.max())
    k = big[0] if big.size else int(np.argmax(mags))
    ph = vec[k] / abs(vec[k])
    return vec * np.conj(ph)


def eigenvectors_at(feedback, delays, pole, dense_cutoff: int = _DENSE_EIG_CUTOFF):
    """Left/right null vectors (u, v) of L(pole) = I - A D(pole).

    The adjugate of L at a simple pole is v u^H up to one scalar, which is
    folded into the undriven residue. Normalization: unit norm, first
    significant component real positive.
    """
    a_sparse = feedback.matrix if hasattr(feedback, "matrix") else sp.csr_matrix(feedback)
    tau = np.asarray(delays, dtype=np.float64)
    n = a_sparse.shape[0]
    p = complex(pole)
    if n <= dense_cutoff:
        lmat = _loop_dense(a_sparse.toarray(), tau, p)
        u_svd, s_svd, vh = np.linalg.svd(lmat)
        if s_svd[-1] > 1e-6 * s_svd[0]:
            raise NotAPoleError(
                f"smallest singular value {s_svd[-1]:.3g} exceeds 1e-6 * ||L|| "
                f"({s_svd[0]:.3g}) at z={p}"
            )
        v = vh[-1].conj()
        u = u_svd[:, -1]
    else:
        d = np.asarray(p, dtype=np.complex128) ** (-tau)
        lmat = (sp.eye(n, dtype=np.complex128, format="csr")
                - a_sparse.multiply(d[np.newaxis, :])).tocsc()
        norm1 = spla.norm(lmat, 1)
        try:
            lu = spla.splu(lmat)
        except RuntimeError:
            lu = spla.splu((lmat + 1e-14 * norm1 *
                            sp.eye(n, dtype=np.complex128, format="csc")).tocsc())
        start = np.ones(n, dtype=np.complex128) / np.sqrt(n)
        v = start
        u = start
        for _ in range(3):
            v = lu.solve(v)
            v /= np.linalg.norm(v)
            u = lu.solve(u, trans="H")
            u /= np.linalg.norm(u)
        sigma = np.linalg.norm(lmat.dot(v))
        if sigma > 1e-6 * norm1:
            raise NotAPoleError(
                f"inverse iteration residual {sigma:.3g} exceeds 1e-6 * ||L||_1 "
                f"({norm1:.3g}) at z={p}"
            )
    return _fix_phase(u), _fix_phase(v)


def undriven_residue(feedback, delays, pole, u, v) -> complex:
    """Endpoint-independent amplitude factor of one mode.

    1 / (-p u^H A D'(p) v) with D' the element-wise derivative of the
    delay matrix; the 1/p folds the z^-1 partial-fraction convention into
    the factor (see module docstring).
    """
    a_sparse = feedback.matrix if hasattr(feedback, "matrix") else sp.csr_matrix(feedback)
    tau = np.asarray(delays, dtype=np.float64)
    p = complex(pole)
    dprime_v = (-tau * np.asarray(p, dtype=np.complex128) ** (-tau - 1.0)) * v
    den = -p * np.vdot(u, a_sparse.dot(dprime_v))
    if abs(den) < 1e-14:
        raise DegenerateModeError(
            f"residue denominator {abs(den):.3g} at z={p}; defective or multiple pole"
        )
    return 1.0 / den


def select_modes(poles, t_tr_s: float, fs_e: float, restrict="all"):
    """Filter poles by the t_tr magnitude threshold and a phase criterion.

    restrict is "all", "real_positive", or ("band", f_lo, f_hz). Conjugate
    closure is enforced for "all" and band selections.
    """
    thresh = magnitude_threshold(t_tr_s, fs_e)
    selected = [p for p in poles if p.magnitude >= thresh]
    if restrict == "real_positive":
        selected = [p for p in selected
                    if abs(p.value.imag) <= _REAL_SNAP and p.value.real > 0]
    elif restrict == "all":
        pass
    elif isinstance(restrict, tuple) and restrict[0] == "band":
        f_lo, f_hi = restrict[1], restrict[2]
        selected = [p for p in selected if f_lo <= abs(p.freq_hz) <= f_hi]
    else:
        raise ValueError(f"unknown restrict mode {restrict!r}")
    if restrict != "real_positive":
        vals = _canonicalize([p.value for p in selected])
        backend = poles[0].backend if poles else "eai"
        selected = [Pole.from_value(v, fs_e, backend) for v in vals]
    if not selected:
        mx = max((p.magnitude for p in poles), default=0.0)
        raise EmptySelectionError(
            f"no pole passes threshold {thresh:.6g} (largest |p| = {mx:.6g})"
        )
    selected.sort(key=lambda q: (-q.magnitude, -q.value.real, q.value.imag))
    return selected


def build_modal_model(feedback, delays, poles, fs_e: float, t_tr_s: float,
                      restrict="all", delay_mode: str = "integer",
                      system_hash: str = "", scene_hash: str = "",
                      is_full: bool = False,
                      skip_degenerate: bool = False) -> ModalModel:
    """Select poles and extract eigenvectors + undriven residues for each."""
    selected = select_modes(poles, t_tr_s, fs_e, restrict=restrict)
    modes = []
    done = {}
    for pol in selected:
        key = np.conj(pol.value)
        if key in done:
            partner = done[key]
            modes.append(
                ModePair(
                    pole=pol,
                    left=np.conj(partner.left),
                    right=np.conj(partner.right),
                    undriven_residue=np.conj(partner.undriven_residue),
                )
            )
            continue
        try:
            u, v = eigenvectors_at(feedback, delays, pol.value)
            rho = undriven_residue(feedback, delays, pol.value, u, v)
        except DegenerateModeError:
            if skip_degenerate:
                warnings.warn(f"skipping defective pole at {pol.value}")
                continue
            raise
        pair = ModePair(pole=pol, left=u, right=v, undriven_residue=rho)
        done[pol.value] = pair
        modes.append(pair)
    modes.sort(key=lambda m: (-m.pole.magnitude, -m.pole.value.real, m.pole.value.imag))
    return ModalModel(
        modes=tuple(modes),
        fs_e=fs_e,
        transition_time_s=t_tr_s,
        delay_mode=delay_mode,
        system_hash=system_hash,
        scene_hash=scene_hash,
        is_full=is_full,
    )


def decompose(system: ArtSystem, t_tr_s: float, backend: str = "arnoldi",
              restrict="real_positive", fractional: bool = False,
              how_many: int = None, seed: int = 0,
              skip_degenerate: bool = False) -> ModalModel:
    """Full decomposition pipeline: find poles, select, extract mode pairs.

    The state-transition eigenvalue backend requires integer delays;
    fractional analysis is only available through the simultaneous
    iteration backend.
    """
    if backend == "arnoldi":
        if fractional:
            raise IncompatibleFlagsError(
                "the state-transition eigenvalue backend requires integer "
                "delays; use backend='eai' for fractional analysis"
            )
        transition = build_state_transition(system.feedback, system.delays)
        if how_many is not None:
            poles = arnoldi_poles(transition, system.fs_e, how_many=how_many, seed=seed)
        else:
            poles = arnoldi_poles(transition, system.fs_e, t_tr_s=t_tr_s, seed=seed)
    elif backend == "eai":
        delays = system.delays.real if fractional else system.delays.integer
        poles = eai_poles(system.feedback, delays, system.fs_e, t_tr_s,
                          restrict=restrict if restrict in ("all", "real_positive")
                          else "all")
    else:
        raise ValueError(f"unknown backend {backend!r}")
    delays_for_modes = system.delays.real if fractional else system.delays.integer
    scene_hash = system.scene.content_hash if system.scene is not None else ""
    return build_modal_model(
        system.feedback, delays_for_modes, poles, system.fs_e, t_tr_s,
        restrict=restrict,
        delay_mode="fractional" if fractional else "integer",
        system_hash=system.content_hash,
        scene_hash=scene_hash,
        is_full=how_many is not None and how_many >= transition_order(system),
        skip_degenerate=skip_degenerate,
    )


def transition_order(system: ArtSystem) -> int:
    """Total state count N_M = sum of integer delays."""
    return int(system.delays.integer.sum())
