"""Interactive session: cached modal model plus movable endpoints.

A move re-traces exactly one endpoint and recomputes that endpoint's
residue components; the recursion parameters, poles, eigenvectors, and
undriven residues are never touched (their content hashes are exposed so
tests can assert this).
"""

from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass

import numpy as np

from . import assembly, rendering
from .errors import OutOfEnclosureError, ValidationError
from .geometry import point_inside
from .modal import ModalModel
from .timedomain import ArtSystem


@dataclass
class MoveReport:
    revision: int
    rays: int
    dot_products: int
    wall_us: float


class Session:
    """Single-writer interactive state over one built system and model."""

    def __init__(self, system: ArtSystem, model: ModalModel, seed: int = 0,
                 n_rays: int = 20000, session_id: str = "main"):
        self.id = session_id
        self.system = system
        self.model = model
        self.seed = seed
        self.n_rays = n_rays
        self.revision = 0
        self.source_positions = [np.array(p, dtype=float) for p in system.scene.sources]
        self.listener_positions = [np.array(p, dtype=float) for p in system.scene.listeners]
        self._gains = system.gains
        self.residues = rendering.residue_components(model, system.gains)

    @property
    def gains(self) -> assembly.GainSet:
        return self._gains

    def invariant_hashes(self) -> dict:
        """Digests of everything a move must never change."""
        m = self.system.a_matrix
        def digest(*arrays):
            h = hashlib.sha256()
            for a in arrays:
                h.update(np.ascontiguousarray(a).tobytes())
            return h.hexdigest()
        mode_vecs = [v for mode in self.model.modes for v in (mode.left, mode.right)]
        return {
            "feedback": digest(m.data, m.indices, m.indptr),
            "delays": digest(self.system.delays.real, self.system.delays.integer),
            "poles": digest(np.array([mo.pole.value for mo in self.model.modes])),
            "eigenvectors": digest(*mode_vecs) if mode_vecs else "",
            "undriven": digest(np.array([mo.undriven_residue for mo in self.model.modes])),
        }

    def move_endpoint(self, kind: str, index: int, new_position) -> MoveReport:
        """Re-trace one endpoint; all other residue entries stay bit-exact."""
        t0 = time.perf_counter()
        new_position = np.asarray(new_position, dtype=float)
        scene = self.system.scene
        if kind == "source":
            if not 0 <= index < len(self.source_positions):
                raise ValidationError(f"no source {index}")
        elif kind == "listener":
            if not 0 <= index < len(self.listener_positions):
                raise ValidationError(f"no listener {index}")
        else:
            raise ValidationError(f"unknown endpoint kind {kind!r}")
        if not point_inside(scene, new_position):
            raise OutOfEnclosureError(
                f"{kind} {index} position {new_position.tolist()} is outside"
            )
        entries = assembly.endpoint_gains(
            scene, self.system.paths, self.system.factors, new_position,
            kind, self.n_rays, self.seed, endpoint_index=index,
            fs_e=self.system.fs_e,
        )
        if kind == "source":
            self.source_positions[index] = new_position
            direct = self._direct_for_source(index)
            new_sources = list(self._gains.sources)
            new_sources[index] = entries
            self._gains = assembly.GainSet(
                sources=tuple(new_sources), listeners=self._gains.listeners,
                direct_gain=self._gains.direct_gain, direct_delay=self._gains.direct_delay,
                direct_present=self._gains.direct_present,
                fs_e=self._gains.fs_e, scene_hash=self._gains.scene_hash,
            )
            self.residues = rendering.replace_source_column(
                self.residues, self.model, index, entries, direct=direct
            )
        else:
            self.listener_positions[index] = new_position
            direct = self._direct_for_listener(index)
            new_listeners = list(self._gains.listeners)
            new_listeners[index] = entries
            self._gains = assembly.GainSet(
                sources=self._gains.sources, listeners=tuple(new_listeners),
                direct_gain=self._gains.direct_gain, direct_delay=self._gains.direct_delay,
                direct_present=self._gains.direct_present,
                fs_e=self._gains.fs_e, scene_hash=self._gains.scene_hash,
            )
            self.residues = rendering.replace_listener_column(
                self.residues, self.model, index, entries, direct=direct
            )
        self.revision += 1
        dots = self.model.n_modes * entries.nnz
        return MoveReport(
            revision=self.revision,
            rays=self.n_rays,
            dot_products=dots,
            wall_us=(time.perf_counter() - t0) * 1e6,
        )

    def _direct_for_source(self, s: int):
        scene = self.system.scene
        n_r = len(self.listener_positions)
        g = np.zeros(n_r)
        d = np.zeros(n_r)
        pres = np.zeros(n_r, dtype=bool)
        for l, lpos in enumerate(self.listener_positions):
            out = assembly.direct_gain(scene, self.source_positions[s], lpos,
                                       self.system.fs_e)
            if out is not None:
                g[l], d[l] = out
                pres[l] = True
        return g, d, pres

    def _direct_for_listener(self, l: int):
        scene = self.system.scene
        n_s = len(self.source_positions)
        g = np.zeros(n_s)
        d = np.zeros(n_s)
        pres = np.zeros(n_s, dtype=bool)
        for s, spos in enumerate(self.source_positions):
            out = assembly.direct_gain(scene, spos, self.listener_positions[l],
                                       self.system.fs_e)
            if out is not None:
                g[s], d[s] = out
                pres[s] = True
        return g, d, pres

    def render(self, listener: int, source: int, n_samples: int,
               include_direct: bool = True) -> np.ndarray:
        cfg = rendering.RenderConfig(
            n_samples=n_samples, fs_e=self.system.fs_e, include_direct=include_direct
        )
        h = rendering.render_eir(self.model, self.residues, cfg)
        return h[listener, source]

    def residue_map(self, mode_index: int, source: int = 0, grid_n: int = 20,
                    z: float = None, n_rays: int = 2000):
        """Residue of one mode over an x-y listener grid (exterior cells NaN)."""
        scene = self.system.scene
        lo = scene.vertices.min(axis=0)
        hi = scene.vertices.max(axis=0)
        if z is None:
            z = 0.5 * (lo[2] + hi[2])
        xs = np.linspace(lo[0], hi[0], grid_n + 2)[1:-1]
        ys = np.linspace(lo[1], hi[1], grid_n + 2)[1:-1]
        mode = self.model.modes[mode_index]
        rho_a = mode.undriven_residue
        rho_b = self.residues.rho_b[mode_index, source]
        out = np.full((grid_n, grid_n), np.nan)
        for iy, y in enumerate(ys):
            for ix, x in enumerate(xs):
                p = np.array([x, y, z])
                if not point_inside(scene, p):
                    continue
                entries = assembly.endpoint_gains(
                    scene, self.system.paths, self.system.factors, p,
                    "listener", n_rays, self.seed, endpoint_index=10_000 + iy * grid_n + ix,
                    fs_e=self.system.fs_e,
                )
                rho_c = rendering.listener_component(entries, mode, self.model.delay_mode)
                out[iy, ix] = (rho_c * np.conj(rho_b) * rho_a).real
        return xs, ys, out
