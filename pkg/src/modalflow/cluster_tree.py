"""Grid upper-level-set components and the cluster tree over a level ladder."""
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import DimensionMismatch, EmptyLevel, NotInUpperLevelSet


@dataclass(frozen=True, eq=False)
class Grid:
    """Density sampled at the cell centers of a regular box partition.

    ``values`` has shape ``resolution`` (one axis per dimension). ``model`` is
    kept when the grid came from :func:`build_grid` so that downstream code
    can evaluate gradients at cell centers.
    """

    box: tuple
    resolution: tuple
    values: np.ndarray
    model: object = None

    def __post_init__(self):
        box = tuple((float(lo), float(hi)) for lo, hi in self.box)
        res = tuple(int(r) for r in self.resolution)
        if not 1 <= len(box) <= 3 or len(res) != len(box):
            raise DimensionMismatch("grid dimension must be 1, 2 or 3")
        if any(lo >= hi for lo, hi in box) or any(r < 2 for r in res):
            raise ValueError("grid needs lo < hi and at least 2 cells per axis")
        vals = np.asarray(self.values, dtype=float).reshape(res)
        if not np.all(np.isfinite(vals)) or np.any(vals < 0):
            raise ValueError("grid values must be finite and non-negative")
        vals.setflags(write=False)
        object.__setattr__(self, "box", box)
        object.__setattr__(self, "resolution", res)
        object.__setattr__(self, "values", vals)

    @property
    def dim(self):
        return len(self.box)

    @property
    def lo(self):
        return np.array([b[0] for b in self.box])

    @property
    def hi(self):
        return np.array([b[1] for b in self.box])

    @property
    def spacing(self):
        return (self.hi - self.lo) / np.array(self.resolution)

    @property
    def cell_diagonal(self):
        return float(np.linalg.norm(self.spacing))

    def axes(self):
        return [lo + (np.arange(n) + 0.5) * w
                for lo, n, w in zip(self.lo, self.resolution, self.spacing)]

    def centers(self):
        """All cell centers as an ``(N, d)`` array in C (flat index) order."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.column_stack([m.ravel() for m in mesh])

    def center_of(self, flat_index):
        idx = np.unravel_index(flat_index, self.resolution)
        return self.lo + (np.array(idx, dtype=float) + 0.5) * self.spacing

    def cell_of(self, x):
        """Flat index of the cell whose center is nearest to ``x``.

        Ties go to the lower index. Raises NotInUpperLevelSet for points
        outside the box.
        """
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.shape[0] != self.dim:
            raise DimensionMismatch("point dimension differs from the grid")
        if np.any(x < self.lo) or np.any(x > self.hi):
            raise NotInUpperLevelSet(f"point {x.tolist()} lies outside the grid box")
        u = (x - self.lo) / self.spacing - 0.5
        idx = np.clip(np.ceil(u - 0.5).astype(int), 0, np.array(self.resolution) - 1)
        return int(np.ravel_multi_index(tuple(idx), self.resolution))

    def max_value(self):
        return float(self.values.max())


def build_grid(model, box, resolution):
    """Evaluate ``model`` at the cell centers of ``box`` split into ``resolution`` cells."""
    box = [tuple(b) for b in box]
    if np.isscalar(resolution):
        resolution = (int(resolution),) * len(box)
    if len(box) != model.dim:
        raise DimensionMismatch("box dimension differs from the model")
    probe = Grid(box, resolution, np.zeros(tuple(int(r) for r in resolution)))
    values = model.value(probe.centers()).reshape(probe.resolution)
    return Grid(box, resolution, values, model=model)


def upper_level_components(grid, t):
    """Label the face-connected components of ``{cells : value >= t}``.

    Returns ``(labels, count)``; labels are -1 outside the upper level set
    and numbered by the smallest flat cell index of each component.
    """
    labels, count = _kernels.label_components(grid.values >= t)
    if count == 0:
        raise EmptyLevel(f"no grid cell has value >= {t}")
    return labels, count


# ---------------------------------------------------------------------------
# tree
# ---------------------------------------------------------------------------

@dataclass
class TreeNode:
    id: int
    birth_level: float
    death_level: float
    parent: int = None
    children: list = field(default_factory=list)
    reference_cells: np.ndarray = None
    mode_ids: list = field(default_factory=list)
    peak_cell: int = None
    # ladder index range [first, last] over which the node is alive
    first: int = 0
    last: int = 0

    @property
    def is_leaf(self):
        return not self.children

    def to_dict(self):
        return {"id": self.id, "birth_level": self.birth_level,
                "death_level": self.death_level, "parent": self.parent,
                "children": list(self.children), "n_reference_cells":
                int(self.reference_cells.size), "min_cell": int(self.reference_cells[0]),
                "mode_ids": list(self.mode_ids), "peak_cell": self.peak_cell}


@dataclass
class SplitEvent:
    """Ascending split: ``parent`` gives way to ``children`` between two ladder levels."""

    level_lo: float
    level_hi: float
    parent: int
    children: list
    locus: np.ndarray
    locus_grad_norm: float
    saddle_index: int = None
    saddle_distance: float = None

    @property
    def level(self):
        return 0.5 * (self.level_lo + self.level_hi)

    def to_dict(self):
        return {"level": self.level, "level_lo": self.level_lo, "level_hi": self.level_hi,
                "parent": self.parent, "children": list(self.children),
                "locus": self.locus.tolist(), "locus_grad_norm": self.locus_grad_norm,
                "saddle_index": self.saddle_index, "saddle_distance": self.saddle_distance}


@dataclass
class ClusterTree:
    nodes: list
    ladder: np.ndarray
    roots: list
    events: list
    labels: list        # per ladder level: grid-shaped component labels
    comp_node: list     # per ladder level: component label -> node id
    grid_shape: tuple

    def node(self, i):
        return self.nodes[i]

    @property
    def leaves(self):
        return [n for n in self.nodes if n.is_leaf]

    def ancestors(self, node_id):
        out = []
        p = self.nodes[node_id].parent
        while p is not None:
            out.append(p)
            p = self.nodes[p].parent
        return out

    def is_descendant(self, a, b):
        """True if node ``a`` equals ``b`` or lies below it."""
        return a == b or b in self.ancestors(a)

    def alive_at(self, level_index):
        return [int(n) for n in self.comp_node[level_index]]

    def to_dict(self):
        return {"ladder": self.ladder.tolist(), "roots": list(self.roots),
                "nodes": [n.to_dict() for n in self.nodes],
                "split_events": [e.to_dict() for e in self.events]}


def default_ladder(grid, n_levels=64):
    m = grid.max_value()
    return np.linspace(1e-4 * m, 0.999 * m, n_levels)


def _grow_partition(inside, seeds):
    """Assign every ``inside`` cell to the nearest seed label by face steps.

    ``seeds`` is an int grid with labels >= 0 on seed cells, -1 elsewhere.
    Ties go to the first axis, lower side, processed.
    """
    lab = np.where(inside, seeds, -1)
    nd = inside.ndim
    while True:
        todo = inside & (lab < 0)
        if not todo.any():
            break
        new = lab.copy()
        for a in range(nd):
            for shift in (1, -1):
                src = np.roll(lab, shift, axis=a)
                edge = [slice(None)] * nd
                edge[a] = 0 if shift == 1 else -1
                src[tuple(edge)] = -1
                take = todo & (new < 0) & (src >= 0)
                new[take] = src[take]
        if np.array_equal(new, lab):
            break
        lab = new
    return lab


def _meeting_locus(grid, parent_mask, child_labels, child_ids):
    """Cell where grown child regions meet inside the parent component."""
    seeds = np.full(grid.resolution, -1, dtype=np.int64)
    for k, c in enumerate(child_ids):
        seeds[child_labels == c] = k
    part = _grow_partition(parent_mask, seeds)
    boundary = np.zeros(grid.resolution, dtype=bool)
    for a in range(grid.dim):
        lo = [slice(None)] * grid.dim
        hi = [slice(None)] * grid.dim
        lo[a] = slice(0, -1)
        hi[a] = slice(1, None)
        lo, hi = tuple(lo), tuple(hi)
        diff = (part[lo] >= 0) & (part[hi] >= 0) & (part[lo] != part[hi])
        boundary[lo] |= diff
        boundary[hi] |= diff
    cells = np.flatnonzero(boundary.ravel())
    if cells.size == 0:
        cells = np.flatnonzero(parent_mask.ravel() & (seeds.ravel() < 0))
    if cells.size == 0:
        cells = np.flatnonzero(parent_mask.ravel())
    pts = np.array([grid.center_of(c) for c in cells])
    if grid.model is not None:
        _, G, _ = grid.model.eval_batch(pts, want_hess=False)
        gn = np.linalg.norm(G, axis=1)
        best = int(np.argmin(gn))
        return pts[best], float(gn[best])
    vals = grid.values.ravel()[cells]
    best = int(np.argmax(vals))
    return pts[best], float("nan")


def build_cluster_tree(grid, ladder=None, critical_points=None):
    """Cluster tree of the grid's upper level sets over ``ladder``.

    Nodes are maximal runs of components that continue one-to-one from one
    ladder level to the next; a node ends where its component holds several
    components at the next level (a split event) or none (a leaf top).
    Leaves are matched to the nearest mode in ``critical_points`` when given.
    """
    ladder = default_ladder(grid) if ladder is None else np.asarray(ladder, dtype=float)
    if ladder.ndim != 1 or ladder.size == 0 or np.any(np.diff(ladder) <= 0):
        raise ValueError("ladder must be a non-empty strictly increasing sequence")
    if ladder[0] <= 0 or ladder[-1] >= grid.max_value():
        raise ValueError("ladder levels must lie strictly inside (0, max f)")
    labels, counts = [], []
    for t in ladder:
        lab, cnt = upper_level_components(grid, t)
        labels.append(lab)
        counts.append(cnt)

    flat_labels = [lab.ravel() for lab in labels]
    min_cell = []
    for lab, cnt in zip(flat_labels, counts):
        inside = np.flatnonzero(lab >= 0)
        mc = np.full(cnt, -1, dtype=np.int64)
        # labels are numbered by smallest cell, so first occurrence is the min
        _, first = np.unique(lab[inside], return_index=True)
        mc[:] = inside[first]
        min_cell.append(mc)

    # parent component at level i of each component at level i + 1
    up_parent = []
    for i in range(len(ladder) - 1):
        up_parent.append(flat_labels[i][min_cell[i + 1]])

    raw = []            # (first, last, parent_raw, label_at_first)
    comp_raw = [np.full(c, -1, dtype=np.int64) for c in counts]
    for c in range(counts[0]):
        comp_raw[0][c] = len(raw)
        raw.append([0, 0, None, c])
    pending = []
    for i in range(len(ladder) - 1):
        kids = [[] for _ in range(counts[i])]
        for c, p in enumerate(up_parent[i]):
            kids[p].append(c)
        for p, ks in enumerate(kids):
            node = comp_raw[i][p]
            if len(ks) == 1:
                comp_raw[i + 1][ks[0]] = node
                raw[node][1] = i + 1
            elif len(ks) > 1:
                new_ids = []
                for c in ks:
                    comp_raw[i + 1][c] = len(raw)
                    new_ids.append(len(raw))
                    raw.append([i + 1, i + 1, node, c])
                pending.append((i, p, node, ks, new_ids))

    # stable ids: birth level, then smallest cell index at birth
    order = sorted(range(len(raw)), key=lambda r: (raw[r][0], min_cell[raw[r][0]][raw[r][3]]))
    remap = {r: k for k, r in enumerate(order)}
    nodes = []
    for r in order:
        first, last, par, lab0 = raw[r]
        cells = np.flatnonzero(flat_labels[first] == lab0)
        nodes.append(TreeNode(id=remap[r], birth_level=float(ladder[first]),
                              death_level=float(ladder[last]),
                              parent=None if par is None else remap[par],
                              reference_cells=cells, first=first, last=last))
    for n in nodes:
        if n.parent is not None:
            nodes[n.parent].children.append(n.id)
    for n in nodes:
        n.children.sort()
    comp_node = [np.array([remap[int(r)] for r in cr], dtype=np.int64) for cr in comp_raw]

    modes = []
    if critical_points is not None:
        modes = [(k, c) for k, c in enumerate(critical_points) if c.is_mode]
    vals = grid.values.ravel()
    for n in nodes:
        if not n.is_leaf:
            continue
        comp = int(np.flatnonzero(comp_node[n.last] == n.id)[0])
        cells = np.flatnonzero(flat_labels[n.last] == comp)
        n.peak_cell = int(cells[np.argmax(vals[cells])])
        if modes:
            peak = grid.center_of(n.peak_cell)
            dist = [np.linalg.norm(c.location - peak) for _, c in modes]
            n.mode_ids = [modes[int(np.argmin(dist))][0]]
    for n in sorted(nodes, key=lambda n: -n.first):
        if n.children:
            n.mode_ids = sorted({m for c in n.children for m in nodes[c].mode_ids})

    events = []
    for i, p, node, ks, new_ids in pending:
        parent_mask = labels[i] == p
        locus, gn = _meeting_locus(grid, parent_mask, labels[i + 1], ks)
        ev = SplitEvent(level_lo=float(ladder[i]), level_hi=float(ladder[i + 1]),
                        parent=remap[node], children=sorted(remap[r] for r in new_ids),
                        locus=locus, locus_grad_norm=gn)
        if critical_points is not None:
            cands = [(k, c) for k, c in enumerate(critical_points) if not c.is_mode]
            if cands:
                dist = [np.linalg.norm(c.location - locus) for _, c in cands]
                j = int(np.argmin(dist))
                ev.saddle_index = cands[j][0]
                ev.saddle_distance = float(dist[j])
        events.append(ev)
    events.sort(key=lambda e: (e.level_lo, e.parent))

    roots = [n.id for n in nodes if n.parent is None]
    return ClusterTree(nodes=nodes, ladder=ladder, roots=roots, events=events,
                       labels=labels, comp_node=comp_node, grid_shape=grid.resolution)


def ladder_index(tree, t):
    """Largest ladder index with level <= t (the bottom level if t lies below)."""
    return max(0, int(np.searchsorted(tree.ladder, t, side="right")) - 1)


def locate_component(tree, grid, x, t):
    """Node of ``tree`` containing ``x`` at level ``t``.

    The level used is the highest ladder level not above ``t``. Raises
    NotInUpperLevelSet when the cell of ``x`` is below ``t`` or outside the grid.
    """
    if t > tree.ladder[-1]:
        raise ValueError(f"level {t} lies above the ladder top {tree.ladder[-1]}")
    cell = grid.cell_of(x)
    if grid.values.ravel()[cell] < t:
        raise NotInUpperLevelSet(f"cell value {grid.values.ravel()[cell]:.6g} < {t:.6g}")
    i = ladder_index(tree, t)
    lab = tree.labels[i].ravel()[cell]
    if lab < 0:
        raise NotInUpperLevelSet(f"cell is below the ladder level {tree.ladder[i]:.6g}")
    return int(tree.comp_node[i][lab])


def component_count_profile(tree):
    """``[(level, number of components), ...]`` in ascending level order."""
    return [(float(t), int(len(cn))) for t, cn in zip(tree.ladder, tree.comp_node)]


def count_pattern(profile):
    """Run-length pattern of the component counts, e.g. ``[1, 2, 1]``."""
    out = []
    for _, c in profile:
        if not out or out[-1] != c:
            out.append(c)
    return out


def transition_levels(profile):
    """Ladder intervals ``(lo, hi, count_before, count_after)`` where the count changes."""
    out = []
    for (t0, c0), (t1, c1) in zip(profile[:-1], profile[1:]):
        if c0 != c1:
            out.append((t0, t1, c0, c1))
    return out
