"""Brute-force time-domain reference simulator and state-space expansion.

The recursion x <- A (per-path delayed x) + b u, y = c x + d u is the
oracle every modal result is validated against. The expanded state
transition matrix puts the same dynamics in companion form: per path, a
chain of inner shift slots feeding a collector slot (the pre-reflection
value) feeding the reflection block A, whose output is the last block of
state variables.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import _kernels
from .assembly import DelaySet, FeedbackMatrix, GainEntries, GainSet, PathSet
from .errors import DimensionError, InstabilityError, SingularityError
from .geometry import Scene

INSTABILITY_LIMIT = 1e12


@dataclass(frozen=True)
class ArtSystem:
    """Complete energy propagation system for one scene and sample rate."""

    feedback: FeedbackMatrix
    delays: DelaySet
    gains: GainSet
    fs_e: float
    paths: PathSet
    scene: Scene = None
    factors: sp.csr_matrix = None

    @property
    def n_paths(self) -> int:
        return self.paths.n_paths

    @property
    def a_matrix(self) -> sp.csr_matrix:
        return self.feedback.matrix

    @property
    def content_hash(self) -> str:
        h = hashlib.sha256()
        m = self.feedback.matrix
        for arr in (m.data, m.indices, m.indptr, self.delays.real, self.delays.integer):
            h.update(np.ascontiguousarray(arr).tobytes())
        h.update(np.float64(self.fs_e).tobytes())
        if self.scene is not None:
            h.update(self.scene.content_hash.encode())
        return h.hexdigest()


@dataclass(frozen=True)
class EnergyResponse:
    """Sampled energy impulse responses, one row per (listener, source)."""

    samples: np.ndarray  # (N_R, N_S, N_T), nonnegative
    fs_e: float

    @property
    def n_samples(self) -> int:
        return self.samples.shape[-1]


@dataclass(frozen=True)
class StateTransition:
    """Expanded sparse transition matrix; eigenvalues are the system poles."""

    matrix: sp.csr_matrix  # (N_M, N_M)
    n_paths: int
    delays: np.ndarray  # int64
    inner_start: np.ndarray  # per path, first inner slot (or -1)
    v_index: np.ndarray  # per path, collector slot (or -1 when delay == 1)
    s_base: int  # first reflection-output slot; slot s_base+k mirrors x[k]

    @property
    def n_states(self) -> int:
        return self.matrix.shape[0]


def _injection_schedule(entries: GainEntries, n_samples: int):
    """Group (path, gain) injections by integer time step, CSR-style."""
    t = entries.delay_int
    keep = t < n_samples
    t = t[keep]
    path = entries.path[keep]
    gain = entries.gain[keep]
    order = np.argsort(t, kind="stable")
    t, path, gain = t[order], path[order], gain[order]
    indptr = np.zeros(n_samples + 1, dtype=np.int64)
    np.add.at(indptr, t + 1, 1)
    np.cumsum(indptr, out=indptr)
    return indptr, path.astype(np.int64), gain.astype(np.float64)


def _listener_taps(gains: GainSet):
    listener = []
    path = []
    gain = []
    delay = []
    for l, entries in enumerate(gains.listeners):
        listener.append(np.full(entries.nnz, l, dtype=np.int64))
        path.append(entries.path)
        gain.append(entries.gain)
        delay.append(entries.delay_int)
    if listener:
        return (
            np.concatenate(listener),
            np.concatenate(path).astype(np.int64),
            np.concatenate(gain).astype(np.float64),
            np.concatenate(delay).astype(np.int64),
        )
    z = np.zeros(0)
    return z.astype(np.int64), z.astype(np.int64), z, z.astype(np.int64)


def simulate_eir(system: ArtSystem, n_samples: int, include_direct: bool = True) -> EnergyResponse:
    """Run the integer-delay time recursion; impulse input per source.

    Raises InstabilityError when any state sample exceeds 1e12 (lossless or
    amplifying configurations).
    """
    a = system.a_matrix
    n_r = len(system.gains.listeners)
    n_s = len(system.gains.sources)
    tap_l, tap_p, tap_g, tap_d = _listener_taps(system.gains)
    out = np.zeros((n_r, n_s, n_samples))
    for s in range(n_s):
        indptr, ipath, igain = _injection_schedule(system.gains.sources[s], n_samples)
        y = _kernels.run_energy_recursion(
            a.indptr, a.indices, a.data,
            system.delays.integer,
            indptr, ipath, igain,
            tap_l, tap_p, tap_g, tap_d,
            n_r, n_samples, INSTABILITY_LIMIT,
        )
        out[:, s, :] = y
    if include_direct:
        for l in range(n_r):
            for s in range(n_s):
                if system.gains.direct_present[l, s]:
                    n = int(np.rint(system.gains.direct_delay[l, s]))
                    if 0 <= n < n_samples:
                        out[l, s, n] += system.gains.direct_gain[l, s]
    return EnergyResponse(samples=out, fs_e=system.fs_e)


def build_state_transition(feedback, delays) -> StateTransition:
    """Expand (A, integer delays) into the sparse transition matrix.

    Handles short delays explicitly: delay 2 collapses the inner chain to
    size 0 (the collector reads the reflection output directly); delay 1
    drops the collector too (the A column reads the reflection output).
    nnz equals (N_M - N_L) + nnz(A) exactly.
    """
    a = feedback.matrix if isinstance(feedback, FeedbackMatrix) else sp.csr_matrix(feedback)
    tau = np.asarray(delays.integer if isinstance(delays, DelaySet) else delays, dtype=np.int64)
    n_l = a.shape[0]
    if a.shape[0] != a.shape[1] or len(tau) != n_l:
        raise DimensionError(
            f"feedback is {a.shape} but delay vector has length {len(tau)}"
        )
    if np.any(tau < 1):
        raise DimensionError("all integer delays must be >= 1")

    inner_len = np.maximum(tau - 2, 0)
    inner_start = np.full(n_l, -1, dtype=np.int64)
    pos = 0
    for k in range(n_l):
        if inner_len[k] > 0:
            inner_start[k] = pos
            pos += int(inner_len[k])
    n_inner = pos
    v_index = np.full(n_l, -1, dtype=np.int64)
    for k in range(n_l):
        if tau[k] >= 2:
            v_index[k] = pos
            pos += 1
    s_base = pos
    n_m = pos + n_l
    assert n_m == int(tau.sum())

    rows = []
    cols = []
    vals = []
    for k in range(n_l):
        m = int(inner_len[k])
        st = inner_start[k]
        if m > 0:
            # Inner shift chain: slot i takes slot i+1.
            for i in range(m - 1):
                rows.append(st + i)
                cols.append(st + i + 1)
                vals.append(1.0)
            rows.append(st + m - 1)  # chain tail takes the reflection output
            cols.append(s_base + k)
            vals.append(1.0)
            rows.append(v_index[k])  # collector takes the chain head
            cols.append(st)
            vals.append(1.0)
        elif tau[k] == 2:
            rows.append(v_index[k])
            cols.append(s_base + k)
            vals.append(1.0)
        # tau == 1: no storage slots; A reads the reflection output directly.
    acoo = a.tocoo()
    for i, k, v in zip(acoo.row, acoo.col, acoo.data):
        rows.append(s_base + i)
        cols.append(v_index[k] if tau[k] >= 2 else s_base + k)
        vals.append(v)
    mat = sp.csr_matrix(
        (np.asarray(vals), (np.asarray(rows), np.asarray(cols))), shape=(n_m, n_m)
    )
    mat.sort_indices()
    return StateTransition(
        matrix=mat,
        n_paths=n_l,
        delays=tau,
        inner_start=inner_start,
        v_index=v_index,
        s_base=s_base,
    )


def simulate_state_space(transition: StateTransition, gains: GainSet, n_samples: int,
                         source_index: int = 0) -> np.ndarray:
    """Impulse response of the expanded form, routed through the s-slot
    injectors/collectors. Matches simulate_eir sample-for-sample."""
    n_m = transition.n_states
    n_l = transition.n_paths
    mat = transition.matrix
    indptr, ipath, igain = _injection_schedule(gains.sources[source_index], n_samples)
    tap_l, tap_p, tap_g, tap_d = _listener_taps(gains)
    n_r = len(gains.listeners)
    y = np.zeros((n_r, n_samples))
    state = np.zeros(n_m)
    s_lo = transition.s_base
    for n in range(n_samples):
        state = mat.dot(state)
        a, b = indptr[n], indptr[n + 1]
        if b > a:
            np.add.at(state, s_lo + ipath[a:b], igain[a:b])
        if state.size and np.max(state) > INSTABILITY_LIMIT:
            raise InstabilityError(f"state exceeded {INSTABILITY_LIMIT:g} at sample {n}")
        x = state[s_lo:]
        pos = tap_d + n
        ok = pos < n_samples
        np.add.at(y, (tap_l[ok], pos[ok]), tap_g[ok] * x[tap_p[ok]])
    return y


def _complex_powers(z: complex, tau: np.ndarray) -> np.ndarray:
    return np.asarray(z, dtype=np.complex128) ** (-np.asarray(tau, dtype=np.float64))


def loop_matrix(a: sp.csr_matrix, tau: np.ndarray, z: complex) -> sp.csr_matrix:
    """L(z) = I - A diag(z^-tau) as a sparse complex matrix."""
    d = _complex_powers(z, tau)
    scaled = a.multiply(d[np.newaxis, :]).tocsr()
    return (sp.eye(a.shape[0], dtype=np.complex128, format="csr") - scaled).tocsr()


def gain_vector_at(entries: GainEntries, z: complex, n_paths: int,
                   delay_mode: str = "integer") -> np.ndarray:
    """Evaluate one sparse gain filter column/row at a complex point."""
    tau = entries.delay_int if delay_mode == "integer" else entries.delay
    out = np.zeros(n_paths, dtype=np.complex128)
    if entries.nnz:
        np.add.at(out, entries.path, entries.gain * _complex_powers(z, tau))
    return out


def transfer_eval(system: ArtSystem, z: complex, delay_mode: str = "integer") -> np.ndarray:
    """Transfer function c(z) (I - A D(z))^-1 b(z) + d(z), all pairs.

    Uses the same delay quantization as the simulator by default, so its
    unit-circle values match the DFT of simulate_eir output.
    """
    a = system.a_matrix
    n_l = a.shape[0]
    tau = system.delays.integer if delay_mode == "integer" else system.delays.real
    lmat = loop_matrix(a, tau, z)
    dense = lmat.toarray()
    cond = np.linalg.cond(dense, 1)
    if not np.isfinite(cond) or cond > 1e12:
        raise SingularityError(f"loop matrix at z={z} has condition number {cond:.3g}")
    n_s = len(system.gains.sources)
    n_r = len(system.gains.listeners)
    bmat = np.column_stack(
        [gain_vector_at(e, z, n_l, delay_mode) for e in system.gains.sources]
    ) if n_s else np.zeros((n_l, 0), dtype=np.complex128)
    x = np.linalg.solve(dense, bmat)
    h = np.zeros((n_r, n_s), dtype=np.complex128)
    for l, e in enumerate(system.gains.listeners):
        c = gain_vector_at(e, z, n_l, delay_mode)
        h[l, :] = c @ x
    zz = np.asarray(z, dtype=np.complex128)
    ddel = np.rint(system.gains.direct_delay) if delay_mode == "integer" else system.gains.direct_delay
    h += np.where(system.gains.direct_present, system.gains.direct_gain * zz ** (-ddel), 0.0)
    return h


def build_system(scene: Scene, fs_e: float, seed: int = 0,
                 rays_per_patch: int = 4000, endpoint_rays: int = 20000) -> ArtSystem:
    """Full assembly pipeline for a validated scene."""
    from . import assembly

    paths = assembly.enumerate_paths(scene, seed=seed)
    factors = assembly.form_factors(scene, rays_per_patch, seed=seed)
    feedback = assembly.assemble_feedback(scene, paths, factors)
    delays = assembly.make_delays(paths, fs_e, scene.speed_of_sound)
    gains = assembly.build_gain_set(scene, paths, factors, fs_e, endpoint_rays, seed)
    return ArtSystem(
        feedback=feedback, delays=delays, gains=gains, fs_e=float(fs_e),
        paths=paths, scene=scene, factors=factors,
    )
