"""Numerical verification of conjugacy relations for a (system, map) pair.

Four checks, each producing a verdict plus per-point records:

* ``flow``: the flows commute with the map, psi_t(h(x0)) = h(phi_t(x0)),
  sampled at evenly spaced times for a set of initial points;
* ``t1``: fixed points map onto independently discovered fixed points of
  the transformed system;
* ``t2``: perpetual points map likewise (decidable only for linear maps;
  nonlinear maps get advisory details instead of a verdict);
* ``t3``: eigenvalue spectra at matched points agree, and the Jacobians
  satisfy the similarity identities J' = Dh J Dh^-1 (velocity side) and
  likewise for the acceleration side;
* ``r1``: transformed-system critical points with no preimage among the
  mapped ones ("newly created" points).

Target-side point sets are found independently by the same multi-start
solver, never trusted from the pushforward, which is what makes the checks
non-circular.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .expr import DomainError
from .fields import (TransformationMap, VectorField, acceleration_map,
                     image_region, transformed_system)
from .flows import BlowUpError, IntegratorConfig, StepUnderflowError, integrate
from .linalg import eigenvalues, min_pivot, solve_linear, spectrum_distance
from .points import (FIXED, PERPETUAL, CriticalPoint, PointSearch, SolverConfig,
                     fixed_point_search, perpetual_point_search)
from .region import AnalysisRegion, lattice_points

__all__ = [
    "HOLDS", "FAILS", "NOT_APPLICABLE", "THEOREM_IDS",
    "MatchRecord", "TheoremCheck", "ConjugacyReport",
    "verify_flow_conjugacy", "verify_point_mapping",
    "verify_spectrum_preservation", "detect_new_points",
    "select_flow_points", "run_verification",
]

HOLDS = "holds"
FAILS = "fails"
NOT_APPLICABLE = "not-applicable"

THEOREM_IDS = ("flow", "t1", "t2", "t3", "r1")

#: states larger than this are excluded from flow-residual comparison;
#: near escape, absolute residuals measure integrator noise, not conjugacy
_COMPARE_CEILING = 1e6


@dataclass(frozen=True)
class MatchRecord:
    source: tuple | None = None  # critical point of f (source coordinates)
    mapped: tuple | None = None  # h(source)
    matched: tuple | None = None  # matched critical point of g, if any
    kind: str | None = None
    residual: float | None = None
    spectrum_distance: float | None = None
    similarity_residual: float | None = None
    note: str = ""


@dataclass(frozen=True)
class TheoremCheck:
    theorem_id: str
    verdict: str
    worst_residual: float | None
    details: tuple[MatchRecord, ...]
    tolerance: float | None = None
    note: str = ""


@dataclass(frozen=True)
class ConjugacyReport:
    system_name: str
    transformed_name: str
    map_sources: tuple[str, ...]
    declared_linear: bool
    diffeomorphic: bool
    checks: tuple[TheoremCheck, ...]
    tolerances: dict[str, float]

    def check(self, theorem_id: str) -> TheoremCheck:
        for c in self.checks:
            if c.theorem_id == theorem_id:
                return c
        raise KeyError(theorem_id)

    @property
    def all_accepted(self) -> bool:
        return all(c.verdict in (HOLDS, NOT_APPLICABLE) for c in self.checks)


# ---------------------------------------------------------------------------
# Flow conjugacy

def _scheduled_states(f, x0, cfg: IntegratorConfig):
    """Integrate, returning (states at scheduled times, truncation note)."""
    try:
        traj = integrate(f, x0, cfg)
        return traj.states, ""
    except BlowUpError as err:
        return err.partial.states[:-1], f"blow-up near t = {err.escape_time:.4g}"
    except (StepUnderflowError, DomainError) as err:
        return np.array(x0, dtype=float).reshape(1, -1), f"integration failed: {err}"


def verify_flow_conjugacy(f: VectorField, g: VectorField, h: TransformationMap,
                          initial_points: Sequence, t_end: float, tol: float,
                          sample_count: int = 32,
                          integrator: IntegratorConfig | None = None) -> TheoremCheck:
    """Check psi_t(h(x0)) = h(phi_t(x0)) over [0, t_end].

    The residual is the max norm difference over initial points and sample
    times. Samples after a blow-up, after phi leaves h's domain, or after
    either state norm passes the comparison ceiling are dropped (noted per
    point).
    """
    base = integrator or IntegratorConfig()
    cfg = replace(base, t_end=float(t_end), sample_count=sample_count)
    records: list[MatchRecord] = []
    worst = 0.0
    compared_any = False
    for x0 in initial_points:
        x0 = np.asarray(x0, dtype=float)
        if not h.domain.contains(x0):
            records.append(MatchRecord(source=tuple(x0),
                                       note="skipped: initial point outside map domain"))
            continue
        y0 = h.value(x0)
        xs, note_x = _scheduled_states(f, x0, cfg)
        ys, note_y = _scheduled_states(g, y0, cfg)
        count = min(len(xs), len(ys))
        point_worst = 0.0
        compared = 0
        truncation = "; ".join(n for n in (note_x, note_y) if n)
        for k in range(count):
            xk, yk = xs[k], ys[k]
            if not h.domain.contains(xk):
                truncation = truncation or "trajectory left the map domain"
                break
            if np.linalg.norm(xk) > _COMPARE_CEILING or np.linalg.norm(yk) > _COMPARE_CEILING:
                truncation = truncation or "state norm passed comparison ceiling"
                break
            try:
                residual = float(np.linalg.norm(yk - h.value(xk)))
            except DomainError:
                truncation = truncation or "map not evaluable along trajectory"
                break
            point_worst = max(point_worst, residual)
            compared += 1
        if compared:
            compared_any = True
            worst = max(worst, point_worst)
        records.append(MatchRecord(
            source=tuple(x0), mapped=tuple(y0), residual=point_worst,
            note=(f"compared {compared}/{sample_count} samples; {truncation}"
                  if truncation else f"compared {compared}/{sample_count} samples")))
    if not compared_any:
        return TheoremCheck("flow", NOT_APPLICABLE, None, tuple(records), tol,
                            note="no comparable samples for any initial point")
    verdict = HOLDS if worst <= tol else FAILS
    return TheoremCheck("flow", verdict, worst, tuple(records), tol)


def select_flow_points(f: VectorField, h: TransformationMap,
                       region: AnalysisRegion, count: int, t_end: float) -> list[np.ndarray]:
    """Deterministic initial points for the flow check: a stratified lattice
    over region ∩ h.domain, preferring points whose trajectory stays inside
    the map domain and bounded over [0, t_end]."""
    base = region.intersect(h.domain)
    candidates = lattice_points(base, 4 * count, rng_seed=0)
    quick = IntegratorConfig(abs_tol=1e-6, rel_tol=1e-6, t_end=float(t_end),
                             sample_count=17)
    good: list[np.ndarray] = []
    rest: list[np.ndarray] = []
    for c in candidates:
        if len(good) >= count:
            break
        try:
            traj = integrate(f, c, quick)
        except (BlowUpError, StepUnderflowError, DomainError):
            rest.append(c)
            continue
        if all(h.domain.contains(s) for s in traj.states):
            good.append(c)
        else:
            rest.append(c)
    return (good + rest)[:count]


# ---------------------------------------------------------------------------
# Point mapping, spectra, new points

def _search(f: VectorField, kind: str, region: AnalysisRegion,
            cfg: SolverConfig) -> PointSearch:
    if kind == FIXED:
        return fixed_point_search(f, region, cfg)
    return perpetual_point_search(f, region, cfg)


def _match_points(h: TransformationMap, f_points: Sequence[CriticalPoint],
                  g_points: Sequence[CriticalPoint], match_tol: float):
    """Greedily match h(x*) against discovered target points."""
    taken = [False] * len(g_points)
    records: list[MatchRecord] = []
    worst = 0.0
    all_matched = True
    for p in f_points:
        try:
            mapped = h.value(p.location)
        except DomainError:
            records.append(MatchRecord(source=tuple(p.location), kind=p.kind,
                                       note="map not evaluable at this point"))
            all_matched = False
            continue
        best_j, best_d = -1, math.inf
        for j, q in enumerate(g_points):
            if taken[j]:
                continue
            d = float(np.linalg.norm(mapped - q.location))
            if d < best_d:
                best_j, best_d = j, d
        # non-injective maps may send several points onto one target
        if best_d > match_tol:
            for j, q in enumerate(g_points):
                d = float(np.linalg.norm(mapped - q.location))
                if d < best_d:
                    best_j, best_d = j, d
        if best_j >= 0 and best_d <= match_tol:
            taken[best_j] = True
            worst = max(worst, best_d)
            records.append(MatchRecord(source=tuple(p.location), mapped=tuple(mapped),
                                       matched=tuple(g_points[best_j].location),
                                       kind=p.kind, residual=best_d))
        else:
            all_matched = False
            records.append(MatchRecord(
                source=tuple(p.location), mapped=tuple(mapped), kind=p.kind,
                residual=best_d if best_d < math.inf else None,
                note="image does not coincide with any discovered target point"))
    unmatched_targets = [q for j, q in enumerate(g_points) if not taken[j]]
    return records, unmatched_targets, worst, all_matched


def _resolve_matching(f, h, g, region, cfg, kind, match_tol,
                      f_search=None, g_search=None, g_region=None):
    match_tol = 10.0 * cfg.dedup_tol if match_tol is None else match_tol
    f_region = region.intersect(h.domain)
    if f_search is None:
        f_search = _search(f, kind, f_region, cfg)
    if g_search is None:
        g_search = _search(g, kind, g_region or image_region(h), cfg)
    return (*_match_points(h, f_search.points, g_search.points, match_tol),
            f_search, g_search, match_tol)


def verify_point_mapping(f: VectorField, h: TransformationMap, g: VectorField,
                         region: AnalysisRegion, cfg: SolverConfig, kind: str,
                         match_tol: float | None = None,
                         f_search: PointSearch | None = None,
                         g_search: PointSearch | None = None,
                         g_region: AnalysisRegion | None = None) -> TheoremCheck:
    """Check that every critical point of f (of the given kind) inside
    region ∩ h.domain maps onto an independently discovered critical point
    of g. For perpetual points the verdict requires a linear map; nonlinear
    maps yield not-applicable with advisory details.
    """
    records, unmatched, worst, all_matched, *_ = _resolve_matching(
        f, h, g, region, cfg, kind, match_tol, f_search, g_search, g_region)
    records = list(records)
    for q in unmatched:
        records.append(MatchRecord(matched=tuple(q.location), kind=q.kind,
                                   note="target point has no preimage among mapped points"))
    theorem_id = "t1" if kind == FIXED else "t2"
    if kind == PERPETUAL and not h.declared_linear:
        return TheoremCheck(theorem_id, NOT_APPLICABLE, worst, tuple(records),
                            note="map is nonlinear; perpetual-point mapping is "
                                 "not guaranteed, details are advisory")
    verdict = HOLDS if all_matched else FAILS
    return TheoremCheck(theorem_id, verdict, worst, tuple(records))


def _linear_jacobian(h: TransformationMap):
    center = 0.5 * (h.domain.lower + h.domain.upper)
    return h.jacobian(center)


def _similarity(dh: np.ndarray, dh_inv: np.ndarray, j_src: np.ndarray,
                j_dst: np.ndarray) -> float:
    pushed = dh @ j_src @ dh_inv
    denom = max(1.0, float(np.linalg.norm(pushed)))
    return float(np.linalg.norm(pushed - j_dst)) / denom


def verify_spectrum_preservation(f: VectorField, h: TransformationMap,
                                 g: VectorField, region: AnalysisRegion,
                                 cfg: SolverConfig,
                                 spectrum_tol: float = 1e-6,
                                 similarity_tol: float = 1e-7,
                                 match_tol: float | None = None,
                                 searches: dict | None = None,
                                 g_region: AnalysisRegion | None = None) -> TheoremCheck:
    """Check eigenvalue preservation at matched critical points, plus the
    two similarity identities as relative matrix residuals.

    Requires a linear map with invertible Jacobian (diffeomorphism
    hypothesis); anything else is not-applicable.
    """
    if not h.declared_linear:
        return TheoremCheck("t3", NOT_APPLICABLE, None, (),
                            note="map is nonlinear; eigenvalue preservation is "
                                 "not guaranteed")
    dh = _linear_jacobian(h)
    pivot = min_pivot(dh)
    if pivot <= 1e-13 * max(1.0, float(np.linalg.norm(dh, np.inf))):
        return TheoremCheck("t3", NOT_APPLICABLE, None, (),
                            note=f"map Jacobian is singular (min pivot {pivot:.3e}); "
                                 f"not a diffeomorphism")
    n = dh.shape[0]
    dh_inv = np.column_stack([solve_linear(dh, e) for e in np.eye(n)])

    searches = searches if searches is not None else {}
    records: list[MatchRecord] = []
    worst_sd = 0.0
    worst_sim = 0.0
    any_pair = False
    ok = True
    for kind in (FIXED, PERPETUAL):
        matched, _, _, _, f_search, g_search, _ = _resolve_matching(
            f, h, g, region, cfg, kind, match_tol,
            searches.get(("f", kind)), searches.get(("g", kind)), g_region)
        searches.setdefault(("f", kind), f_search)
        searches.setdefault(("g", kind), g_search)
        if kind == FIXED:
            src_field, dst_field = f, g
        else:
            src_field = searches.setdefault("f_accel", acceleration_map(f))
            dst_field = searches.setdefault("g_accel", acceleration_map(g))
        for rec in matched:
            if rec.matched is None:
                continue
            any_pair = True
            try:
                j_src = src_field.jacobian(np.array(rec.source))
                j_dst = dst_field.jacobian(np.array(rec.matched))
                sd = spectrum_distance(eigenvalues(j_src), eigenvalues(j_dst))
                sim = _similarity(dh, dh_inv, j_src, j_dst)
            except DomainError as err:
                records.append(replace(rec, note=f"spectra not evaluable: {err}"))
                ok = False
                continue
            worst_sd = max(worst_sd, sd)
            worst_sim = max(worst_sim, sim)
            if sd > spectrum_tol or sim > similarity_tol:
                ok = False
            records.append(replace(rec, spectrum_distance=sd, similarity_residual=sim))
    note = "" if any_pair else "no matched critical-point pairs to compare"
    verdict = HOLDS if ok else FAILS
    return TheoremCheck("t3", verdict, max(worst_sd, worst_sim) if any_pair else None,
                        tuple(records), tolerance=spectrum_tol, note=note)


def detect_new_points(f: VectorField, h: TransformationMap, g: VectorField,
                      region: AnalysisRegion, cfg: SolverConfig,
                      match_tol: float | None = None,
                      searches: dict | None = None,
                      g_region: AnalysisRegion | None = None) -> TheoremCheck:
    """List critical points of the transformed system with no preimage
    among the mapped ones.

    Verdict: holds when nothing new appears; a new point under an
    invertible linear map is a failure, under anything else an advisory
    (creation is possible there, not forbidden).
    """
    searches = searches if searches is not None else {}
    records: list[MatchRecord] = []
    new_found = False
    for kind in (FIXED, PERPETUAL):
        _, unmatched, _, _, f_search, g_search, _ = _resolve_matching(
            f, h, g, region, cfg, kind, match_tol,
            searches.get(("f", kind)), searches.get(("g", kind)), g_region)
        searches.setdefault(("f", kind), f_search)
        searches.setdefault(("g", kind), g_search)
        for q in unmatched:
            new_found = True
            records.append(MatchRecord(matched=tuple(q.location), kind=q.kind,
                                       note=f"newly created {q.kind} point"))
    if not new_found:
        return TheoremCheck("r1", HOLDS, 0.0, ())
    invertible = False
    if h.declared_linear:
        dh = _linear_jacobian(h)
        invertible = min_pivot(dh) > 1e-13 * max(1.0, float(np.linalg.norm(dh, np.inf)))
    if h.declared_linear and invertible:
        return TheoremCheck("r1", FAILS, None, tuple(records),
                            note="new critical points under an invertible linear map")
    return TheoremCheck("r1", NOT_APPLICABLE, None, tuple(records),
                        note="new critical points found; possible for this map")


# ---------------------------------------------------------------------------
# Orchestration

def run_verification(f: VectorField, h: TransformationMap,
                     region: AnalysisRegion,
                     theorems: Sequence[str] = THEOREM_IDS,
                     t_end: float = 1.0,
                     flow_tol: float = 1e-6,
                     spectrum_tol: float = 1e-6,
                     similarity_tol: float = 1e-7,
                     cfg: SolverConfig = SolverConfig(),
                     initial_points: Sequence | None = None,
                     flow_point_count: int = 5,
                     g: VectorField | None = None) -> tuple[ConjugacyReport, VectorField]:
    """Run the requested checks against the transformed system (built from
    h's declared inverse unless ``g`` is supplied). Point searches are
    shared across checks."""
    unknown = set(theorems) - set(THEOREM_IDS)
    if unknown:
        raise ValueError(f"unknown theorem ids: {sorted(unknown)}")
    if g is None:
        g = transformed_system(f, h)
    g_region = image_region(h)
    f_region = region.intersect(h.domain)
    searches: dict = {}

    def shared(side: str, fld: VectorField, kind: str) -> PointSearch:
        key = (side, kind)
        if key not in searches:
            sub = f_region if side == "f" else g_region
            searches[key] = _search(fld, kind, sub, cfg)
        return searches[key]

    checks: list[TheoremCheck] = []
    for tid in THEOREM_IDS:
        if tid not in theorems:
            continue
        if tid == "flow":
            pts = initial_points
            if pts is None:
                pts = select_flow_points(f, h, region, flow_point_count, t_end)
            checks.append(verify_flow_conjugacy(f, g, h, pts, t_end, flow_tol))
        elif tid in ("t1", "t2"):
            kind = FIXED if tid == "t1" else PERPETUAL
            checks.append(verify_point_mapping(
                f, h, g, region, cfg, kind,
                f_search=shared("f", f, kind),
                g_search=shared("g", g, kind), g_region=g_region))
        elif tid == "t3":
            checks.append(verify_spectrum_preservation(
                f, h, g, region, cfg, spectrum_tol, similarity_tol,
                searches=searches, g_region=g_region))
        elif tid == "r1":
            checks.append(detect_new_points(f, h, g, region, cfg,
                                            searches=searches, g_region=g_region))
    dh = _linear_jacobian(h) if h.declared_linear else None
    diffeo = bool(dh is not None and
                  min_pivot(dh) > 1e-13 * max(1.0, float(np.linalg.norm(dh, np.inf))))
    report = ConjugacyReport(
        system_name=f.name,
        transformed_name=g.name,
        map_sources=h.source_strings(),
        declared_linear=h.declared_linear,
        diffeomorphic=diffeo,
        checks=tuple(checks),
        tolerances={"flow": flow_tol, "spectrum": spectrum_tol,
                    "similarity": similarity_tol,
                    "match": 10.0 * cfg.dedup_tol},
    )
    return report, g
