"""Oriented simplicial complexes with boundary markers and obstacle carving.

A complex stores one array of p-simplices per degree p = 0..d.  Every simplex
is a sorted tuple of vertex ids and the lists are lexicographically ordered,
so incidence matrices and file dumps are reproducible bit for bit.  The sign
of a face in the incidence matrix is the parity of the deleted position, which
is the sorted-vertex-permutation convention.

Complexes are immutable after construction: all derived quantities (face
indices, coface counts, boundary facets) are computed once and cached.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

OUTER = "outer"
OBSTACLE = "obstacle"


class MeshError(ValueError):
    """Raised for malformed meshes: dangling faces, bad markers, non-manifold carves."""


def _canonical_rows(rows: np.ndarray) -> np.ndarray:
    """Sort each row ascending, then lexsort rows.  Raises on repeated vertices."""
    rows = np.asarray(rows, dtype=np.int64)
    if rows.ndim == 1:
        rows = rows.reshape(-1, 1)
    rows = np.sort(rows, axis=1)
    if rows.shape[1] > 1 and np.any(rows[:, :-1] == rows[:, 1:]):
        bad = int(np.nonzero(np.any(rows[:, :-1] == rows[:, 1:], axis=1))[0][0])
        raise MeshError(f"degenerate simplex with repeated vertex: row {bad}")
    order = np.lexsort(rows.T[::-1])
    return rows[order]


def _faces_of(simplices: np.ndarray) -> np.ndarray:
    """All (p-1)-faces of the given p-simplices, with repetitions."""
    p1 = simplices.shape[1]
    out = []
    for k in range(p1):
        out.append(np.delete(simplices, k, axis=1))
    return np.vstack(out)


def _unique_rows(rows: np.ndarray) -> np.ndarray:
    rows = np.sort(np.asarray(rows, dtype=np.int64), axis=1)
    order = np.lexsort(rows.T[::-1])
    rows = rows[order]
    if len(rows) == 0:
        return rows
    keep = np.ones(len(rows), dtype=bool)
    keep[1:] = np.any(rows[1:] != rows[:-1], axis=1)
    return rows[keep]


@dataclass
class SimplicialComplex:
    """Simplicial complex of dimension ``dim`` embedded in R^ambient.

    ``cell_coords`` optionally overrides per-cell vertex positions; it is used
    by glued (quotient) complexes where a shared vertex id carries different
    coordinates on the two sides of the gluing locus.  All metric assembly is
    per top-cell and reads coordinates through :meth:`cell_vertex_coords`.
    """

    dim: int
    vertices: np.ndarray
    simplices: dict[int, np.ndarray]
    regions: list[str]
    boundary_markers: dict[str, np.ndarray]
    cell_coords: np.ndarray | None = None
    _index: dict[int, dict[tuple, int]] = field(default_factory=dict, repr=False)
    _bfacets: np.ndarray | None = field(default=None, repr=False)

    # -- construction -------------------------------------------------------

    @classmethod
    def from_top_cells(
        cls,
        vertices: np.ndarray,
        cells: np.ndarray,
        regions: Iterable[str] | None = None,
        cell_coords: np.ndarray | None = None,
        outer_marker: str = OUTER,
    ) -> "SimplicialComplex":
        """Build the full complex generated by top-dimensional cells.

        All proper faces are enumerated, and boundary facets (one coface) get
        ``outer_marker``.
        """
        vertices = np.asarray(vertices, dtype=float)
        cells = np.asarray(cells, dtype=np.int64)
        dim = cells.shape[1] - 1
        cells_sorted = np.sort(cells, axis=1)
        order = np.lexsort(cells_sorted.T[::-1])
        cells_sorted = cells_sorted[order]
        regions = list(regions) if regions is not None else [""] * len(cells)
        regions = [regions[i] for i in order]
        if cell_coords is not None:
            cell_coords = np.asarray(cell_coords, dtype=float)[order]
            # coordinates follow the vertex sort of each cell
            cc = []
            for row, orig in zip(cells[order], cell_coords):
                perm = np.argsort(row)
                cc.append(orig[perm])
            cell_coords = np.array(cc)

        simplices: dict[int, np.ndarray] = {dim: cells_sorted}
        cur = cells_sorted
        for p in range(dim - 1, 0, -1):
            cur = _unique_rows(_faces_of(cur))
            simplices[p] = cur
        # 0-simplices are the vertices actually used by the cells, so a carved
        # complex is literally a sub-list of its reference in every degree
        simplices[0] = np.unique(cells_sorted).reshape(-1, 1)

        cplx = cls(
            dim=dim,
            vertices=vertices,
            simplices=simplices,
            regions=regions,
            boundary_markers={},
            cell_coords=cell_coords,
        )
        bf = cplx.boundary_facets()
        if len(bf):
            cplx.boundary_markers = {outer_marker: bf.copy()}
        cplx.validate()
        return cplx

    # -- cached lookups ------------------------------------------------------

    def n(self, p: int) -> int:
        return len(self.simplices[p])

    def index(self, p: int) -> dict[tuple, int]:
        if p not in self._index:
            self._index[p] = {tuple(row): i for i, row in enumerate(self.simplices[p])}
        return self._index[p]

    def coface_counts(self, p: int) -> np.ndarray:
        """Number of (p+1)-cofaces of each p-simplex."""
        counts = np.zeros(self.n(p), dtype=np.int64)
        idx = self.index(p)
        for s in self.simplices[p + 1]:
            for k in range(len(s)):
                counts[idx[tuple(np.delete(s, k))]] += 1
        return counts

    def boundary_facets(self) -> np.ndarray:
        """Indices of (d-1)-simplices with exactly one coface."""
        if self._bfacets is None:
            counts = self.coface_counts(self.dim - 1)
            if np.any(counts > 2):
                bad = int(np.nonzero(counts > 2)[0][0])
                raise MeshError(
                    f"facet {tuple(self.simplices[self.dim - 1][bad])} has "
                    f"{counts[bad]} cofaces; complex is not a manifold"
                )
            self._bfacets = np.nonzero(counts == 1)[0]
        return self._bfacets

    def boundary_subsimplices(self, p: int) -> np.ndarray:
        """Indices of p-simplices contained in some boundary facet."""
        d = self.dim
        bf = self.simplices[d - 1][self.boundary_facets()]
        if p == d - 1:
            return self.boundary_facets().copy()
        if p >= d or len(bf) == 0:
            return np.zeros(0, dtype=np.int64)
        idx = self.index(p)
        out = set()
        from itertools import combinations

        for facet in bf:
            for comb in combinations(facet, p + 1):
                out.add(idx[comb])
        return np.array(sorted(out), dtype=np.int64)

    def cell_vertex_coords(self) -> np.ndarray:
        """(n_cells, dim+1, ambient) coordinates used for metric assembly."""
        if self.cell_coords is not None:
            return self.cell_coords
        return self.vertices[self.simplices[self.dim]]

    def cell_volumes(self) -> np.ndarray:
        coords = self.cell_vertex_coords()
        e = coords[:, 1:, :] - coords[:, :1, :]
        d = self.dim
        if e.shape[2] != d:
            raise MeshError("ambient dimension must equal complex dimension")
        from math import factorial

        return np.abs(np.linalg.det(e)) / factorial(d)

    def euler_characteristic(self) -> int:
        return int(sum((-1) ** p * self.n(p) for p in range(self.dim + 1)))

    # -- validation ----------------------------------------------------------

    def validate(self) -> None:
        d = self.dim
        for p in range(1, d + 1):
            idx = self.index(p - 1)
            for s in self.simplices[p]:
                for k in range(p + 1):
                    face = tuple(np.delete(s, k))
                    if face not in idx:
                        raise MeshError(f"dangling face: {face} of {tuple(s)} not stored")
        bf = set(self.boundary_facets().tolist())
        marked: set[int] = set()
        for marker, facets in self.boundary_markers.items():
            fs = set(int(i) for i in facets)
            if not fs <= bf:
                raise MeshError(f"marker {marker!r} contains non-boundary facets")
            if fs & marked:
                raise MeshError(f"marker {marker!r} overlaps another marker")
            marked |= fs
        if marked != bf:
            raise MeshError("boundary markers do not cover all boundary facets")
        if len(self.regions) != self.n(d):
            raise MeshError("one region tag per top simplex required")

    # -- text format ----------------------------------------------------------

    def to_text(self) -> str:
        out = io.StringIO()
        out.write("decmesh 1\n")
        out.write(f"dim {self.dim}\n")
        out.write(f"vertices {len(self.vertices)}\n")
        for v in self.vertices:
            out.write(" ".join(repr(float(x)) for x in v) + "\n")
        for p in range(1, self.dim + 1):
            out.write(f"simplices {p} {self.n(p)}\n")
            for s in self.simplices[p]:
                out.write(" ".join(str(int(x)) for x in s) + "\n")
        out.write(f"regions {self.n(self.dim)}\n")
        for tag in self.regions:
            out.write((tag if tag else "-") + "\n")
        out.write("boundary\n")
        facets = self.simplices[self.dim - 1]
        for marker in sorted(self.boundary_markers):
            for i in sorted(int(j) for j in self.boundary_markers[marker]):
                out.write(marker + " " + " ".join(str(int(x)) for x in facets[i]) + "\n")
        out.write("end\n")
        return out.getvalue()

    def save(self, path: str) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_text())

    def metadata(self) -> dict:
        """Canonical JSON-able summary used for golden tests."""
        comps = boundary_components(self)
        return {
            "dim": self.dim,
            "counts": {str(p): self.n(p) for p in range(self.dim + 1)},
            "euler_characteristic": self.euler_characteristic(),
            "boundary_components": [
                {"marker": m, "facets": len(f)} for m, f in comps
            ],
            "regions": sorted(set(t for t in self.regions if t)),
        }

    def metadata_json(self) -> str:
        return json.dumps(self.metadata(), sort_keys=True, indent=1)


# -- loading -------------------------------------------------------------------


def load_complex(source: str | bytes | io.IOBase, fmt: str = "decmesh") -> SimplicialComplex:
    """Parse a mesh from text.  ``fmt`` is ``decmesh`` or ``tetgen``.

    For tetgen, ``source`` must be the path prefix of the ``.node``/``.ele``
    pair (optionally with a ``.face`` file carrying boundary markers).
    """
    if fmt == "tetgen":
        return _load_tetgen(str(source))
    if fmt != "decmesh":
        raise MeshError(f"unsupported mesh format: {fmt!r}")
    if isinstance(source, bytes):
        text = source.decode()
    elif isinstance(source, str):
        text = source
    else:
        text = source.read()
        if isinstance(text, bytes):
            text = text.decode()
    return _parse_decmesh(text)


def _parse_decmesh(text: str) -> SimplicialComplex:
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    pos = 0

    def take() -> str:
        nonlocal pos
        if pos >= len(lines):
            raise MeshError("unexpected end of mesh file")
        ln = lines[pos]
        pos += 1
        return ln

    header = take()
    if not header.startswith("decmesh"):
        raise MeshError("not a decmesh file")
    dim = int(take().split()[1])
    nv = int(take().split()[1])
    vertices = np.array([[float(x) for x in take().split()] for _ in range(nv)])
    simplices: dict[int, np.ndarray] = {}
    regions: list[str] | None = None
    markers_raw: list[tuple[str, tuple]] = []
    while pos < len(lines):
        ln = take()
        tok = ln.split()
        if tok[0] == "simplices":
            p, n = int(tok[1]), int(tok[2])
            rows = np.array(
                [[int(x) for x in take().split()] for _ in range(n)], dtype=np.int64
            ).reshape(n, p + 1)
            if np.any(rows < 0) or np.any(rows >= nv):
                raise MeshError(f"simplex vertex id out of range in degree {p}")
            simplices[p] = _canonical_rows(rows)
            if len(_unique_rows(rows)) != n:
                raise MeshError(f"duplicate simplex in degree {p}")
        elif tok[0] == "regions":
            n = int(tok[1])
            regions = [("" if t == "-" else t) for t in (take() for _ in range(n))]
        elif tok[0] == "boundary":
            while pos < len(lines) and lines[pos] != "end":
                parts = take().split()
                markers_raw.append((parts[0], tuple(sorted(int(x) for x in parts[1:]))))
        elif tok[0] == "end":
            break
        else:
            raise MeshError(f"unknown section {tok[0]!r}")
    for p in range(1, dim + 1):
        if p not in simplices:
            raise MeshError(f"missing simplices of degree {p}")
    simplices[0] = np.unique(simplices[dim]).reshape(-1, 1)
    cplx = SimplicialComplex(
        dim=dim,
        vertices=vertices,
        simplices=simplices,
        regions=regions if regions is not None else [""] * len(simplices[dim]),
        boundary_markers={},
        cell_coords=None,
    )
    bf = cplx.boundary_facets()
    if markers_raw:
        fidx = cplx.index(dim - 1)
        markers: dict[str, list[int]] = {}
        for marker, verts in markers_raw:
            if verts not in fidx:
                raise MeshError(f"marker {marker!r} names unknown facet {verts}")
            markers.setdefault(marker, []).append(fidx[verts])
        cplx.boundary_markers = {
            m: np.array(sorted(v), dtype=np.int64) for m, v in markers.items()
        }
    elif len(bf):
        cplx.boundary_markers = {OUTER: bf.copy()}
    cplx.validate()
    return cplx


def _load_tetgen(prefix: str) -> SimplicialComplex:
    def rows(path: str) -> list[list[str]]:
        with open(path) as fh:
            out = []
            for ln in fh:
                ln = ln.split("#")[0].strip()
                if ln:
                    out.append(ln.split())
            return out

    node = rows(prefix + ".node")
    nv, ndim = int(node[0][0]), int(node[0][1])
    base = int(node[1][0])
    vertices = np.array([[float(x) for x in r[1 : 1 + ndim]] for r in node[1 : 1 + nv]])
    ele = rows(prefix + ".ele")
    nt, npc = int(ele[0][0]), int(ele[0][1])
    has_attr = len(ele[1]) > 1 + npc
    cells = np.array(
        [[int(x) - base for x in r[1 : 1 + npc]] for r in ele[1 : 1 + nt]], dtype=np.int64
    )
    regions = [f"r{int(float(r[1 + npc]))}" if has_attr else "" for r in ele[1 : 1 + nt]]
    return SimplicialComplex.from_top_cells(vertices, cells, regions)


# -- carving -------------------------------------------------------------------


@dataclass
class ObstacleScenario:
    """A matched pair: reference complex Z0 and the carved complex sharing its DOFs."""

    reference: SimplicialComplex
    carved: SimplicialComplex
    obstacle_tags: frozenset
    injections: dict[int, np.ndarray]

    @property
    def has_obstacle(self) -> bool:
        return self.carved.n(self.carved.dim) < self.reference.n(self.reference.dim)


def carve_obstacle(reference: SimplicialComplex, obstacle_tags: Iterable[str]) -> ObstacleScenario:
    """Remove the interior of the tagged region and mark the fresh boundary.

    The carved complex keeps the reference vertex array so that simplices are
    literally sub-lists of the reference ones; per-degree injection maps are
    index arrays into the reference simplex lists.
    """
    tags = frozenset(obstacle_tags)
    d = reference.dim
    keep_cells = np.array(
        [i for i, t in enumerate(reference.regions) if t not in tags], dtype=np.int64
    )
    if len(keep_cells) == reference.n(d):
        injections = {p: np.arange(reference.n(p), dtype=np.int64) for p in range(d + 1)}
        return ObstacleScenario(reference, reference, tags, injections)
    if len(keep_cells) == 0:
        raise MeshError("obstacle tags cover the whole complex")

    cells = reference.simplices[d][keep_cells]
    regions = [reference.regions[i] for i in keep_cells]
    cc = reference.cell_coords[keep_cells] if reference.cell_coords is not None else None
    carved = SimplicialComplex.from_top_cells(
        reference.vertices, cells, regions, cell_coords=cc
    )

    # markers: inherited where the facet was already boundary in Z0, obstacle otherwise
    ref_facets = reference.simplices[d - 1]
    ref_marker_of: dict[tuple, str] = {}
    for marker, facets in reference.boundary_markers.items():
        for i in facets:
            ref_marker_of[tuple(ref_facets[i])] = marker
    new_markers: dict[str, list[int]] = {}
    carved_facets = carved.simplices[d - 1]
    for i in carved.boundary_facets():
        key = tuple(carved_facets[i])
        marker = ref_marker_of.get(key, OBSTACLE)
        new_markers.setdefault(marker, []).append(int(i))
    carved.boundary_markers = {
        m: np.array(sorted(v), dtype=np.int64) for m, v in new_markers.items()
    }
    carved.validate()
    _check_manifold_boundary(carved)
    if OBSTACLE in carved.boundary_markers:
        # an obstacle facet must not sit on the hull of the reference complex
        ref_bset = {tuple(ref_facets[i]) for i in reference.boundary_facets()}
        for i in carved.boundary_markers[OBSTACLE]:
            if tuple(carved_facets[i]) in ref_bset:
                raise MeshError("obstacle region touches the outer boundary")

    injections = {}
    for p in range(d + 1):
        ref_idx = reference.index(p)
        injections[p] = np.array(
            [ref_idx[tuple(s)] for s in carved.simplices[p]], dtype=np.int64
        )
    return ObstacleScenario(reference, carved, tags, injections)


def _check_manifold_boundary(cplx: SimplicialComplex) -> None:
    """Every boundary ridge must lie in exactly two boundary facets."""
    d = cplx.dim
    if d < 2:
        return
    bf = cplx.simplices[d - 1][cplx.boundary_facets()]
    from collections import Counter

    ridge_count: Counter = Counter()
    for facet in bf:
        for k in range(d):
            ridge_count[tuple(np.delete(facet, k))] += 1
    bad = [r for r, c in ridge_count.items() if c != 2]
    if bad:
        raise MeshError(f"non-manifold carve boundary at ridge {bad[0]}")


def boundary_components(cplx: SimplicialComplex) -> list[tuple[str, np.ndarray]]:
    """Connected components of the boundary facet graph with their marker."""
    d = cplx.dim
    bf = cplx.boundary_facets()
    facets = cplx.simplices[d - 1]
    marker_of = {}
    for marker, fs in cplx.boundary_markers.items():
        for i in fs:
            marker_of[int(i)] = marker
    # adjacency via shared ridges
    ridge_map: dict[tuple, list[int]] = {}
    for i in bf:
        for k in range(d):
            ridge_map.setdefault(tuple(np.delete(facets[i], k)), []).append(int(i))
    adj: dict[int, set[int]] = {int(i): set() for i in bf}
    for members in ridge_map.values():
        for a in members:
            for b in members:
                if a != b:
                    adj[a].add(b)
    seen: set[int] = set()
    comps = []
    for i in sorted(int(j) for j in bf):
        if i in seen:
            continue
        stack, comp = [i], []
        seen.add(i)
        while stack:
            cur = stack.pop()
            comp.append(cur)
            for nb in adj[cur]:
                if nb not in seen:
                    seen.add(nb)
                    stack.append(nb)
        markers = sorted({marker_of.get(j, "?") for j in comp})
        comps.append(("+".join(markers), np.array(sorted(comp), dtype=np.int64)))
    comps.sort(key=lambda mc: (mc[0], mc[1][0] if len(mc[1]) else -1))
    return comps


# -- vertex identification (gluing) --------------------------------------------


def glue_vertices(cplx: SimplicialComplex, vmap: Mapping[int, int]) -> SimplicialComplex:
    """Quotient the complex by a vertex identification map.

    Top cells keep their original geometry through ``cell_coords``, so the
    glued complex is assembled as two isometric half-neighbourhoods along the
    identification locus.  The map must be injective on its domain, must not
    create degenerate cells, and domain and range must be disjoint.
    """
    dom = set(int(k) for k in vmap)
    rng = set(int(v) for v in vmap.values())
    if dom & rng:
        raise MeshError("gluing map domain and range overlap")
    if len(rng) != len(dom):
        raise MeshError("gluing map is not injective")
    d = cplx.dim
    old_cells = cplx.simplices[d]
    coords = cplx.cell_vertex_coords().copy()
    mapped = old_cells.copy()
    lut = np.arange(len(cplx.vertices), dtype=np.int64)
    for k, v in vmap.items():
        lut[int(k)] = int(v)
    mapped = lut[mapped]
    if np.any(np.sort(mapped, axis=1)[:, :-1] == np.sort(mapped, axis=1)[:, 1:]):
        raise MeshError("gluing collapses a cell")

    used = np.unique(mapped)
    compact = -np.ones(len(cplx.vertices), dtype=np.int64)
    compact[used] = np.arange(len(used))
    new_cells = compact[mapped]
    new_vertices = cplx.vertices[used]
    return SimplicialComplex.from_top_cells(
        new_vertices, new_cells, cplx.regions, cell_coords=coords
    )


def orientable(cplx: SimplicialComplex) -> bool:
    """Check for a consistent orientation of the top cells (sign propagation)."""
    d = cplx.dim
    cells = cplx.simplices[d]
    idx_f = cplx.index(d - 1)
    # facet -> list of (cell, incidence sign)
    inc: dict[int, list[tuple[int, int]]] = {}
    for c, s in enumerate(cells):
        for k in range(d + 1):
            f = idx_f[tuple(np.delete(s, k))]
            inc.setdefault(f, []).append((c, (-1) ** k))
    sign = np.zeros(len(cells), dtype=np.int64)
    for start in range(len(cells)):
        if sign[start]:
            continue
        sign[start] = 1
        stack = [start]
        while stack:
            c = stack.pop()
            for k in range(d + 1):
                f = idx_f[tuple(np.delete(cells[c], k))]
                for c2, s2 in inc[f]:
                    if c2 == c:
                        continue
                    s1 = (-1) ** k
                    want = -sign[c] * s1 * s2
                    if sign[c2] == 0:
                        sign[c2] = want
                        stack.append(c2)
                    elif sign[c2] != want:
                        return False
    return True
