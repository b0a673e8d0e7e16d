"""Level-set clusters at a threshold, extended to all points by gradient-flow basins."""
import warnings
from dataclasses import dataclass

import numpy as np

from .cluster_tree import locate_component, upper_level_components
from .errors import EmptyLevel, NotInUpperLevelSet
from .flow import NOISE, assign_basins


@dataclass
class HybridResult:
    """Partition of ``points`` at threshold ``t``.

    Attributes
    ----------
    groups : list of list of int
        Mode ids (indices into ``modes``) merged into each cluster.
    labels : ndarray of int
        Group index per point, or NOISE.
    provenance : list of int or None
        Tree node holding each group's modes at level ``t`` (None without a tree).
    noise_modes : list of int
        Modes whose value is below ``t`` (their basins are noise).
    """
    threshold: float
    groups: list
    labels: np.ndarray
    provenance: list
    noise_modes: list
    modes: list
    basins: object = None

    @property
    def n_groups(self):
        return len(self.groups)

    def to_dict(self):
        return {
            "threshold": self.threshold,
            "groups": [{"index": k, "mode_ids": g, "tree_node": p,
                        "modes": [self.modes[i].location.tolist() for i in g]}
                       for k, (g, p) in enumerate(zip(self.groups, self.provenance))],
            "noise_modes": self.noise_modes,
            "n_points": int(self.labels.size),
            "n_noise_points": int(np.sum(self.labels == NOISE)),
        }


def hybrid_partition(model, grid, t, points, params=None, critical_points=None,
                     tree=None, basins=None):
    """Merge flow basins of modes that share a component of the upper level set.

    Steps: label the components of ``{f >= t}`` on ``grid``; assign every
    point to the basin of the mode its ascent line reaches; basins of modes
    in the same component form one group; basins of modes outside every
    component (and points that reach no mode) are NOISE.

    ``basins`` may carry a precomputed :class:`~modalflow.flow.BasinAssignment`
    for ``points`` (useful when sweeping ``t``).
    """
    if basins is None:
        basins = assign_basins(model, points, params=params, critical_points=critical_points)
    modes = basins.modes
    labels = np.full(basins.labels.shape, NOISE, dtype=np.int64)
    try:
        comp, _ = upper_level_components(grid, t)
    except EmptyLevel:
        warnings.warn(f"upper level set at {t:.6g} is empty; every point is noise",
                      RuntimeWarning, stacklevel=2)
        return HybridResult(float(t), [], labels, [], list(range(len(modes))), modes, basins)
    comp = comp.ravel()

    by_comp, noise_modes = {}, []
    for k, m in enumerate(modes):
        try:
            c = int(comp[grid.cell_of(m.location)])
        except NotInUpperLevelSet:
            c = -1
        if c < 0 or m.value < t:
            noise_modes.append(k)
        else:
            by_comp.setdefault(c, []).append(k)
    groups = [sorted(v) for _, v in sorted(by_comp.items(), key=lambda kv: min(kv[1]))]
    provenance = []
    for g in groups:
        node = None
        if tree is not None and t <= tree.ladder[-1]:
            try:
                node = locate_component(tree, grid, modes[g[0]].location, t)
            except NotInUpperLevelSet:
                node = None
        provenance.append(node)

    mode_to_group = np.full(len(modes), NOISE, dtype=np.int64)
    for gi, g in enumerate(groups):
        mode_to_group[g] = gi
    hit = basins.labels != NOISE
    labels[hit] = mode_to_group[basins.labels[hit]]
    return HybridResult(float(t), groups, labels, provenance, noise_modes, modes, basins)


def hybrid_sweep(model, grid, levels, points, params=None, critical_points=None, tree=None):
    """:func:`hybrid_partition` at each level, sharing one basin assignment."""
    basins = assign_basins(model, points, params=params, critical_points=critical_points)
    return [hybrid_partition(model, grid, t, points, tree=tree, basins=basins) for t in levels]
