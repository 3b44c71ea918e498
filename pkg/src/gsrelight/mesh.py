"""Coarse template mesh: OBJ I/O, vertex normals, UV texel binding.

The mesh is triangles only, with a UV per face corner.  Binding rasterizes
the UV triangles onto an R x R texel grid so each covered texel owns a
face, a barycentric triple, a surface point, and an interpolated normal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AssetError, UVOverlapError

#: Barycentric slack for counting a texel center as covered.
_EDGE_EPS = 1e-9
#: Texels with all weights above this are interior claims; competing
#: interior claims are an error, edge-on ties go to the lowest face id.
_INTERIOR_EPS = 1e-7


@dataclass(frozen=True)
class CoarseMesh:
    """Triangle mesh with per-corner UVs.

    ``faces`` and ``uv_faces`` are parallel (F, 3) index arrays into
    ``vertices`` and ``uvs`` respectively.
    """

    vertices: np.ndarray  # (V, 3) float64
    faces: np.ndarray  # (F, 3) int32, indices into vertices
    uvs: np.ndarray  # (T, 2) float64 in [0, 1]^2
    uv_faces: np.ndarray  # (F, 3) int32, indices into uvs

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64)
        f = np.asarray(self.faces, dtype=np.int32)
        uv = np.asarray(self.uvs, dtype=np.float64)
        uvf = np.asarray(self.uv_faces, dtype=np.int32)
        if v.ndim != 2 or v.shape[1] != 3 or len(v) < 3:
            raise AssetError(f"vertices must be (V, 3) with V >= 3, got {v.shape}")
        if f.ndim != 2 or f.shape[1] != 3 or len(f) < 1:
            raise AssetError(f"faces must be (F, 3), got {f.shape}")
        if uv.ndim != 2 or uv.shape[1] != 2 or len(uv) < 3:
            raise AssetError(f"uvs must be (T, 2), got {uv.shape}")
        if uvf.shape != f.shape:
            raise AssetError("uv_faces must parallel faces")
        if not np.all(np.isfinite(v)) or not np.all(np.isfinite(uv)):
            raise AssetError("mesh contains non-finite coordinates")
        if f.min() < 0 or f.max() >= len(v):
            raise AssetError("face index out of range")
        if uvf.min() < 0 or uvf.max() >= len(uv):
            raise AssetError("uv face index out of range")
        if uv.min() < -1e-9 or uv.max() > 1.0 + 1e-9:
            raise AssetError("uv coordinates must lie in [0, 1]^2")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)
        object.__setattr__(self, "uvs", np.clip(uv, 0.0, 1.0))
        object.__setattr__(self, "uv_faces", uvf)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)


def load_obj(path) -> CoarseMesh:
    """Parse an OBJ with `v`, `vt`, and `f v/vt` records.

    Vertex normals (`vn`) are tolerated and ignored; normals are always
    recomputed from geometry.  Faces must be triangles and every corner
    must carry a UV index.
    """
    vertices, uvs, faces, uv_faces = [], [], [], []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            tag = parts[0]
            if tag == "v":
                if len(parts) < 4:
                    raise AssetError(f"{path}:{lineno}: malformed vertex")
                vertices.append([float(x) for x in parts[1:4]])
            elif tag == "vt":
                if len(parts) < 3:
                    raise AssetError(f"{path}:{lineno}: malformed uv")
                uvs.append([float(x) for x in parts[1:3]])
            elif tag == "vn":
                continue
            elif tag == "f":
                corners = parts[1:]
                if len(corners) != 3:
                    raise AssetError(
                        f"{path}:{lineno}: only triangles supported, got {len(corners)} corners"
                    )
                vi, ti = [], []
                for corner in corners:
                    fields = corner.split("/")
                    if len(fields) < 2 or not fields[1]:
                        raise AssetError(
                            f"{path}:{lineno}: face corner {corner!r} lacks a UV index"
                        )
                    vi.append(int(fields[0]) - 1)
                    ti.append(int(fields[1]) - 1)
                faces.append(vi)
                uv_faces.append(ti)
    if not vertices or not faces:
        raise AssetError(f"{path}: no usable geometry")
    return CoarseMesh(
        np.array(vertices), np.array(faces, dtype=np.int32),
        np.array(uvs), np.array(uv_faces, dtype=np.int32),
    )


def save_obj(path, mesh: CoarseMesh) -> None:
    """Write the mesh with `v`, `vt`, and `f v/vt` records.

    Coordinates use 17 significant digits so float64 values survive a
    save/load round trip exactly.
    """
    with open(path, "w") as fh:
        for v in mesh.vertices:
            fh.write(f"v {v[0]:.17g} {v[1]:.17g} {v[2]:.17g}\n")
        for uv in mesh.uvs:
            fh.write(f"vt {uv[0]:.17g} {uv[1]:.17g}\n")
        for f, t in zip(mesh.faces, mesh.uv_faces):
            fh.write(
                f"f {f[0] + 1}/{t[0] + 1} {f[1] + 1}/{t[1] + 1} {f[2] + 1}/{t[2] + 1}\n"
            )


def vertex_normals(mesh: CoarseMesh) -> np.ndarray:
    """Area-weighted average of incident face normals, unit where defined.

    Accumulating raw cross products weights each face by twice its area.
    Vertices with no incident area keep a zero normal; binding rejects
    them if a covered texel ever interpolates one.
    """
    v = mesh.vertices
    f = mesh.faces
    e1 = v[f[:, 1]] - v[f[:, 0]]
    e2 = v[f[:, 2]] - v[f[:, 0]]
    face_n = np.cross(e1, e2)  # length = 2 * face area
    out = np.zeros_like(v)
    for c in range(3):
        np.add.at(out, f[:, c], face_n)
    norms = np.linalg.norm(out, axis=1)
    ok = norms > 0.0
    out[ok] /= norms[ok, None]
    return out


def median_edge_length(mesh: CoarseMesh) -> float:
    """Median length over unique mesh edges."""
    f = mesh.faces
    edges = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
    edges = np.unique(np.sort(edges, axis=1), axis=0)
    lengths = np.linalg.norm(
        mesh.vertices[edges[:, 0]] - mesh.vertices[edges[:, 1]], axis=1
    )
    return float(np.median(lengths))


@dataclass(frozen=True)
class TexelBinding:
    """Per-texel binding produced by :func:`bind_texels`.

    Arrays are (R, R, ...) with texel (row, col) centered at
    ``u = (col + 0.5) / R, v = (row + 0.5) / R``.  ``face_id`` is -1 on
    uncovered texels; ``positions`` and ``normals`` are zero there.
    """

    resolution: int
    face_id: np.ndarray  # (R, R) int32
    barycentric: np.ndarray  # (R, R, 3) float64
    positions: np.ndarray  # (R, R, 3) float64, t-hat
    normals: np.ndarray  # (R, R, 3) float64, n-hat (unit on covered texels)

    @property
    def mask(self) -> np.ndarray:
        return self.face_id >= 0

    @property
    def n_covered(self) -> int:
        return int(np.count_nonzero(self.face_id >= 0))


def bind_texels(mesh: CoarseMesh, resolution: int) -> TexelBinding:
    """Rasterize UV triangles onto an R x R grid of texel centers.

    Each covered texel gets exactly one owning face.  Genuinely
    overlapping interiors raise :class:`UVOverlapError`; texel centers
    that only graze shared edges are assigned to the lowest face id,
    which keeps ownership deterministic across runs.
    """
    if resolution < 1:
        raise AssetError(f"resolution must be positive, got {resolution}")
    r = int(resolution)
    face_id = np.full((r, r), -1, dtype=np.int32)
    interior = np.zeros((r, r), dtype=bool)
    bary = np.zeros((r, r, 3))
    conflicts = []

    uv = mesh.uvs
    for fi in range(mesh.n_faces):
        tri = uv[mesh.uv_faces[fi]]  # (3, 2)
        d1 = tri[1] - tri[0]
        d2 = tri[2] - tri[0]
        denom = d1[0] * d2[1] - d1[1] * d2[0]
        if abs(denom) < 1e-14:
            continue  # zero-area UV triangle cannot own texel interiors
        lo = np.floor(np.min(tri, axis=0) * r - 0.5).astype(int)
        hi = np.ceil(np.max(tri, axis=0) * r - 0.5).astype(int)
        c0, r0 = np.maximum(lo, 0)
        c1, r1 = np.minimum(hi, r - 1)
        if c1 < c0 or r1 < r0:
            continue
        cols = (np.arange(c0, c1 + 1) + 0.5) / r
        rows = (np.arange(r0, r1 + 1) + 0.5) / r
        pu = cols[None, :] - tri[0, 0]
        pv = rows[:, None] - tri[0, 1]
        w1 = (pu * d2[1] - pv * d2[0]) / denom
        w2 = (pv * d1[0] - pu * d1[1]) / denom
        w0 = 1.0 - w1 - w2
        covered = (w0 >= -_EDGE_EPS) & (w1 >= -_EDGE_EPS) & (w2 >= -_EDGE_EPS)
        if not np.any(covered):
            continue
        inside = (w0 > _INTERIOR_EPS) & (w1 > _INTERIOR_EPS) & (w2 > _INTERIOR_EPS)
        rr, cc = np.nonzero(covered)
        grid_r = rr + r0
        grid_c = cc + c0
        prev = face_id[grid_r, grid_c]
        new_inside = inside[rr, cc]
        # both claims interior -> genuine overlap
        clash = (prev >= 0) & new_inside & interior[grid_r, grid_c]
        for k in np.nonzero(clash)[0]:
            conflicts.append(
                (int(prev[k]), fi, int(grid_r[k]), int(grid_c[k]))
            )
        # claim free texels; an interior claim also beats an edge-graze
        take = (prev < 0) | (new_inside & ~interior[grid_r, grid_c])
        tr, tc = grid_r[take], grid_c[take]
        face_id[tr, tc] = fi
        interior[tr, tc] = new_inside[take]
        bary[tr, tc, 0] = w0[rr, cc][take]
        bary[tr, tc, 1] = w1[rr, cc][take]
        bary[tr, tc, 2] = w2[rr, cc][take]

    if conflicts:
        raise UVOverlapError(conflicts)

    covered_mask = face_id >= 0
    positions = np.zeros((r, r, 3))
    normals = np.zeros((r, r, 3))
    if np.any(covered_mask):
        vn = vertex_normals(mesh)
        rows, cols = np.nonzero(covered_mask)
        fids = face_id[rows, cols]
        w = bary[rows, cols]  # (K, 3)
        corners = mesh.faces[fids]  # (K, 3)
        pos = np.einsum("kc,kcd->kd", w, mesh.vertices[corners])
        nrm = np.einsum("kc,kcd->kd", w, vn[corners])
        lens = np.linalg.norm(nrm, axis=1)
        bad = lens < 1e-12
        if np.any(bad):
            where = rows[bad][0], cols[bad][0]
            raise AssetError(
                f"interpolated normal vanishes at texel {tuple(int(x) for x in where)}; "
                "mesh has degenerate geometry around its owning face"
            )
        positions[rows, cols] = pos
        normals[rows, cols] = nrm / lens[:, None]
    return TexelBinding(r, face_id, bary, positions, normals)
