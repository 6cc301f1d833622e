"""Analytic operation-count model for interactive reverberation updates.

Evaluates the published asymptotic costs with unit constants (natural
logs), enough to reproduce curve shapes and crossovers, not absolute
FLOPs. Methods: ray tracing at a given reflection order (naive and
tree-accelerated), the time-iterated energy recursion (fully interactive
and static-source variants), and the modal runtime.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field


@dataclass(frozen=True)
class CostInputs:
    n_patches: int  # N_P
    visibility: float  # nu, average fraction of patches seen from a patch
    n_sources: int
    n_listeners: int
    n_rays: int
    n_samples: int  # EIR length N_T
    n_modes: int  # retained modes N_K
    n_paths: float = None  # N_L; defaults to nu * N_P^2
    moved_sources: int = None  # defaults to all
    moved_listeners: int = None
    refl_low: int = 10
    refl_high: int = 100

    def resolved(self):
        n_l = self.n_paths if self.n_paths is not None else self.visibility * self.n_patches ** 2
        ds = self.n_sources if self.moved_sources is None else self.moved_sources
        dl = self.n_listeners if self.moved_listeners is None else self.moved_listeners
        return n_l, ds, dl


def _zero_endpoints(c: CostInputs) -> bool:
    return c.n_sources == 0 and c.n_listeners == 0


def rtm_cost(c: CostInputs, order: int) -> float:
    """Ray tracing: every listener casts rays for `order` reflections."""
    if _zero_endpoints(c):
        return 0.0
    return c.n_listeners * order * c.n_rays * (math.log(c.n_patches) + c.n_sources)


def tracing_cost(c: CostInputs) -> float:
    """One order of tracing from each moved endpoint (tree-accelerated)."""
    _, ds, dl = c.resolved()
    return (ds + dl) * c.n_rays * math.log(c.n_patches)


def td_art_cost(c: CostInputs) -> float:
    """Tracing plus the per-sample sparse recursion and pickup products."""
    if _zero_endpoints(c):
        return 0.0
    n_l, _, _ = c.resolved()
    running = c.n_samples * n_l * c.visibility * (c.n_sources + c.n_listeners + c.n_patches)
    return tracing_cost(c) + running


def td_art_static_cost(c: CostInputs) -> float:
    """Static sources: stored path history, only listener pickups run."""
    if _zero_endpoints(c):
        return 0.0
    n_l, _, _ = c.resolved()
    tracing = c.n_listeners * c.n_rays * math.log(c.n_patches)
    return tracing + c.n_samples * n_l * c.visibility * c.n_listeners


def modal_cost(c: CostInputs) -> float:
    """Tracing plus N_K sparse dot products per moved endpoint."""
    if _zero_endpoints(c):
        return 0.0
    n_l, ds, dl = c.resolved()
    return tracing_cost(c) + c.n_modes * n_l * c.visibility * (ds + dl)


METHODS = (
    ("rtm_low", lambda c: rtm_cost(c, c.refl_low)),
    ("rtm_high", lambda c: rtm_cost(c, c.refl_high)),
    ("td_art", td_art_cost),
    ("td_art_static", td_art_static_cost),
    ("mod_art", modal_cost),
)


def complexity_report(c: CostInputs) -> dict:
    """Operation count for every method at one parameter point."""
    return {name: fn(c) for name, fn in METHODS}


def report_table(rows: list, sweep_name: str) -> str:
    """Columnar text: sweep value then one column per method."""
    header = [sweep_name] + [name for name, _ in METHODS]
    lines = ["\t".join(header)]
    for value, counts in rows:
        lines.append(
            "\t".join([f"{value:g}"] + [f"{counts[name]:.6e}" for name, _ in METHODS])
        )
    return "\n".join(lines) + "\n"


def sweep_endpoints(base: CostInputs, counts) -> list:
    """Costs as the number of sources = listeners sweeps over `counts`."""
    rows = []
    for n in counts:
        c = CostInputs(
            n_patches=base.n_patches, visibility=base.visibility,
            n_sources=n, n_listeners=n, n_rays=base.n_rays,
            n_samples=base.n_samples, n_modes=base.n_modes,
            refl_low=base.refl_low, refl_high=base.refl_high,
        )
        rows.append((n, complexity_report(c)))
    return rows


def sweep_patches(base: CostInputs, patch_counts) -> list:
    """Costs as the patch count sweeps (visibility held fixed)."""
    rows = []
    for n_p in patch_counts:
        c = CostInputs(
            n_patches=n_p, visibility=base.visibility,
            n_sources=base.n_sources, n_listeners=base.n_listeners,
            n_rays=base.n_rays, n_samples=base.n_samples, n_modes=base.n_modes,
            refl_low=base.refl_low, refl_high=base.refl_high,
        )
        rows.append((n_p, complexity_report(c)))
    return rows
