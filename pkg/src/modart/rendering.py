"""Runtime side of the engine: residue components, response assembly,
pole descriptors, and noise-shaped pressure-response synthesis.

Residues factor into per-mode, per-endpoint scalars: one complex number
per source and one per listener, combined with the endpoint-independent
undriven residue. Moving one endpoint therefore touches exactly one
column of the component tables.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .assembly import GainEntries, GainSet
from .errors import (
    NegativeEnergyError,
    NegativityError,
    NonRealOutputError,
    StaleModelError,
    ValidationError,
)
from .modal import ModalModel, pole_descriptors  # noqa: F401  (re-exported)
from .sampling import stream_generator


@dataclass(frozen=True)
class RenderConfig:
    n_samples: int
    fs_e: float
    include_direct: bool = True
    noise_seed: int = 0
    fs_audio: float = None

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValidationError("n_samples must be >= 1")
        if self.fs_audio is not None and self.fs_audio < 2 * self.fs_e:
            raise ValidationError("fs_audio must be at least 2 * fs_e")


@dataclass(frozen=True)
class ResidueComponents:
    """Per-mode endpoint coupling scalars; R[m,l,s] = rho_c[m,l] conj(rho_b[m,s]) rho_A[m]."""

    poles: np.ndarray  # (N_K,) complex
    undriven: np.ndarray  # (N_K,) complex
    rho_b: np.ndarray  # (N_K, N_S) complex
    rho_c: np.ndarray  # (N_K, N_R) complex
    direct_gain: np.ndarray  # (N_R, N_S)
    direct_delay: np.ndarray  # (N_R, N_S), samples
    direct_present: np.ndarray  # (N_R, N_S) bool
    # First sample index at which the modal sum represents the response:
    # past the finite (FIR) part spanned by the coupler delays.
    onset_samples: int = 0

    @property
    def n_modes(self) -> int:
        return len(self.poles)

    def residue_matrix(self) -> np.ndarray:
        """Full (N_K, N_R, N_S) residue tensor."""
        return (
            self.rho_c[:, :, None]
            * np.conj(self.rho_b)[:, None, :]
            * self.undriven[:, None, None]
        )


def _endpoint_component(entries: GainEntries, vec: np.ndarray, pole: complex,
                        delay_mode: str) -> complex:
    """Sparse dot of one gain filter, evaluated at the pole, with vec."""
    if entries.nnz == 0:
        return 0.0 + 0.0j
    tau = entries.delay_int if delay_mode == "integer" else entries.delay
    powers = np.asarray(pole, dtype=np.complex128) ** (-np.asarray(tau, dtype=np.float64))
    return complex(np.sum(entries.gain * powers * vec[entries.path]))


def source_component(entries: GainEntries, mode, delay_mode: str) -> complex:
    """rho_b entry: conj(u^H b(p)) for one source."""
    return np.conj(_endpoint_component(entries, np.conj(mode.left), mode.pole.value, delay_mode))


def listener_component(entries: GainEntries, mode, delay_mode: str) -> complex:
    """rho_c entry: c(p) v for one listener."""
    return _endpoint_component(entries, mode.right, mode.pole.value, delay_mode)


def residue_components(model: ModalModel, gains: GainSet) -> ResidueComponents:
    """Evaluate every per-endpoint coupling scalar for the model's modes."""
    if model.system_hash and gains.scene_hash and model.fs_e != gains.fs_e:
        raise StaleModelError(
            f"model at fs_e={model.fs_e} but gains at fs_e={gains.fs_e}"
        )
    if getattr(model, "scene_hash", "") and gains.scene_hash and \
            model.scene_hash != gains.scene_hash:
        raise StaleModelError("gains and modal model come from different scenes")
    n_k = model.n_modes
    n_s = len(gains.sources)
    n_r = len(gains.listeners)
    rho_b = np.zeros((n_k, n_s), dtype=np.complex128)
    rho_c = np.zeros((n_k, n_r), dtype=np.complex128)
    for m, mode in enumerate(model.modes):
        for s, entries in enumerate(gains.sources):
            rho_b[m, s] = source_component(entries, mode, model.delay_mode)
        for l, entries in enumerate(gains.listeners):
            rho_c[m, l] = listener_component(entries, mode, model.delay_mode)
    return ResidueComponents(
        poles=np.array([mode.pole.value for mode in model.modes], dtype=np.complex128),
        undriven=np.array([mode.undriven_residue for mode in model.modes],
                          dtype=np.complex128),
        rho_b=rho_b,
        rho_c=rho_c,
        direct_gain=gains.direct_gain.copy(),
        direct_delay=gains.direct_delay.copy(),
        direct_present=gains.direct_present.copy(),
        onset_samples=coupler_onset(gains),
    )


def coupler_onset(gains: GainSet) -> int:
    """First sample past the FIR span of the input/output coupler delays."""
    max_b = max((float(e.delay.max()) for e in gains.sources if e.nnz), default=0.0)
    max_c = max((float(e.delay.max()) for e in gains.listeners if e.nnz), default=0.0)
    return int(np.ceil(max_b) + np.ceil(max_c)) + 1


def replace_source_column(residues: ResidueComponents, model: ModalModel,
                          s: int, entries: GainEntries,
                          direct=None) -> ResidueComponents:
    """New components with only source s (and its direct column) recomputed."""
    rho_b = residues.rho_b.copy()
    for m, mode in enumerate(model.modes):
        rho_b[m, s] = source_component(entries, mode, model.delay_mode)
    dg, dd, dp = (residues.direct_gain.copy(), residues.direct_delay.copy(),
                  residues.direct_present.copy())
    if direct is not None:
        dg[:, s], dd[:, s], dp[:, s] = direct
    return replace(residues, rho_b=rho_b, direct_gain=dg, direct_delay=dd,
                   direct_present=dp)


def replace_listener_column(residues: ResidueComponents, model: ModalModel,
                            l: int, entries: GainEntries,
                            direct=None) -> ResidueComponents:
    """New components with only listener l (and its direct row) recomputed."""
    rho_c = residues.rho_c.copy()
    for m, mode in enumerate(model.modes):
        rho_c[m, l] = listener_component(entries, mode, model.delay_mode)
    dg, dd, dp = (residues.direct_gain.copy(), residues.direct_delay.copy(),
                  residues.direct_present.copy())
    if direct is not None:
        dg[l, :], dd[l, :], dp[l, :] = direct
    return replace(residues, rho_c=rho_c, direct_gain=dg, direct_delay=dd,
                   direct_present=dp)


def render_eir(model: ModalModel, residues: ResidueComponents,
               config: RenderConfig) -> np.ndarray:
    """Assemble h[l,s,n] = sum_m R_m[l,s] p_m^n (+ direct impulse).

    Conjugate-closed mode sets give a real result; the imaginary part must
    stay below 1e-9 of the peak. Small negative dips are clamped to zero;
    a full decomposition with significant negativity signals an upstream
    bug and raises.
    """
    n = np.arange(config.n_samples)
    powers = residues.poles[:, None] ** n[None, :]  # (N_K, N_T)
    rmat = residues.residue_matrix()  # (N_K, N_R, N_S)
    h = np.tensordot(rmat, powers, axes=(0, 0))  # (N_R, N_S, N_T)
    # A (near-)complete decomposition only represents the response past the
    # coupler-delay FIR span; its pre-onset values are meaningless partial
    # fractions and are zeroed (the direct impulse is re-added below).
    check_from = min(residues.onset_samples, config.n_samples) if model.is_full else 0
    if check_from:
        h[..., :check_from] = 0.0
    peak = np.max(np.abs(h.real)) if h.size else 0.0
    if peak > 0 and np.max(np.abs(h.imag)) > 1e-9 * peak:
        raise NonRealOutputError(
            f"imaginary part {np.max(np.abs(h.imag)):.3g} exceeds 1e-9 of peak "
            f"{peak:.3g}; mode set is not conjugate-closed"
        )
    h = h.real.copy()
    if h.size:
        neg_floor = -1e-9 * max(peak, 1e-300)
        if model.is_full and np.min(h) < neg_floor:
            raise NegativityError(
                f"full decomposition dipped to {np.min(h):.3g} "
                f"(floor {neg_floor:.3g})"
            )
        np.maximum(h, 0.0, out=h)
    if config.include_direct:
        for l in range(h.shape[0]):
            for s in range(h.shape[1]):
                if residues.direct_present[l, s]:
                    nd = int(np.rint(residues.direct_delay[l, s]))
                    if 0 <= nd < config.n_samples:
                        h[l, s, nd] += residues.direct_gain[l, s]
    return h


def energy_decay_curve(samples: np.ndarray) -> np.ndarray:
    """Backward-integrated energy, normalized to start at 1."""
    tail = np.cumsum(samples[::-1])[::-1]
    total = tail[0] if tail.size and tail[0] > 0 else 1.0
    return tail / total


def noise_shape(eir: np.ndarray, fs_e: float, fs_audio: float, seed: int) -> np.ndarray:
    """Synthesize a pressure response: sqrt of the interpolated energy
    envelope times seeded unit-variance white noise."""
    eir = np.asarray(eir, dtype=np.float64)
    if np.any(eir < 0):
        raise NegativeEnergyError(f"energy response has negative samples "
                                  f"(min {eir.min():.3g})")
    if fs_audio < 2 * fs_e:
        raise ValidationError("fs_audio must be at least 2 * fs_e")
    n_audio = int(np.round(len(eir) * fs_audio / fs_e))
    pos = np.arange(n_audio) * (fs_e / fs_audio)
    envelope = np.interp(pos, np.arange(len(eir)), eir)
    rng = stream_generator(seed, ("noise",))
    noise = rng.standard_normal(n_audio)
    return np.sqrt(envelope) * noise
