"""Pose graph: robot nodes, odometry edges, pole observation edges.

The pole line enters the problem as a rigid template (fixed local pose
per pole) placed by a single free variable, the landmark frame.  Only
that placement is optimized; inter-pole spacing and collinearity are
exact by construction.  Node 0 is gauge-fixed by default, so a problem
with no observations keeps the raw trajectory.

States are packed arrays: ``(N, 7)`` rigid transforms in full-3D mode,
``(N, 3)`` ``[x, y, yaw]`` in planar mode.  The same packing is used for
the landmark frame, the template, and every edge measurement, which
keeps residual evaluation a handful of vectorized group operations.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import geometry as geom
from .sync import FULL3D, PLANAR, AlignedSequence, DataError

ODOMETRY = "odometry"
OBSERVATION = "observation"


def _group(dof_mode):
    """Vectorized group ops for the mode: (dim, compose, inverse, relative, log, exp)."""
    if dof_mode == PLANAR:
        return (
            3,
            geom.pose2_compose,
            geom.pose2_inverse,
            geom.pose2_relative,
            geom.se2_log,
            geom.se2_exp,
        )
    return (
        7,
        geom.pose3_compose,
        geom.pose3_inverse,
        geom.pose3_relative,
        geom.se3_log,
        geom.se3_exp,
    )


def tangent_dim(dof_mode: str) -> int:
    return 3 if dof_mode == PLANAR else 6


@dataclass
class PoseGraph:
    """Sparse pose-graph problem over one odometry source.

    ``states`` and ``landmark`` are the free variables (modulo the gauge
    node and ``landmark_fixed``); everything else is fixed problem data.
    """

    source: str
    rate: float
    dof_mode: str
    times: np.ndarray  # (N,)
    is_frame: np.ndarray  # (N,) bool, original sensor frames
    states: np.ndarray  # (N, D)
    landmark: np.ndarray  # (D,) template placement in the world
    template: np.ndarray  # (P, D) fixed pole poses in the landmark frame
    odo_i: np.ndarray  # (E,) int
    odo_j: np.ndarray  # (E,) int
    odo_meas: np.ndarray  # (E, D)
    odo_w_trans: np.ndarray  # (E,)
    odo_w_rot: np.ndarray  # (E,)
    obs_node: np.ndarray  # (M,) int
    obs_pole: np.ndarray  # (M,) int
    obs_meas: np.ndarray  # (M, D)
    obs_w_trans: np.ndarray  # (M,)
    obs_w_rot: np.ndarray  # (M,)
    gauge_index: int = 0
    unconstrained: bool = False
    landmark_fixed: bool = False
    position_only: bool = False
    raw_states: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        n = self.states.shape[0]
        if not 0 <= self.gauge_index < n:
            raise DataError("gauge index out of range")
        if self.odo_meas.shape[0] and (
            self.odo_i.min() < 0
            or self.odo_j.min() < 0
            or max(self.odo_i.max(), self.odo_j.max()) >= n
        ):
            raise DataError("odometry edge references a missing node")
        if self.obs_node.shape[0]:
            if self.obs_node.min() < 0 or self.obs_node.max() >= n:
                raise DataError("observation edge references a missing node")
            if self.obs_pole.min() < 0 or self.obs_pole.max() >= self.template.shape[0]:
                raise DataError("observation edge references a missing pole id")
        if self.raw_states is None:
            self.raw_states = self.states.copy()

    @property
    def node_count(self) -> int:
        return int(self.states.shape[0])

    @property
    def pole_count(self) -> int:
        return int(self.template.shape[0])

    @property
    def odo_count(self) -> int:
        return int(self.odo_meas.shape[0])

    @property
    def obs_count(self) -> int:
        return int(self.obs_meas.shape[0])

    @property
    def block_dim(self) -> int:
        return tangent_dim(self.dof_mode)

    def with_solution(self, states: np.ndarray, landmark: np.ndarray) -> "PoseGraph":
        return replace(self, states=states, landmark=landmark, raw_states=self.raw_states)

    def pole_world_poses(self, landmark=None) -> np.ndarray:
        """World pose of every pole under the (given) template placement."""
        _, compose, *_ = _group(self.dof_mode)
        return compose(self.landmark if landmark is None else landmark, self.template)


def is_connected(graph: PoseGraph) -> bool:
    """Every robot node reachable from the gauge node.

    Observation edges route through the shared landmark frame, so two
    nodes observing any pole are connected even without a chain between
    them.
    """
    n = graph.node_count
    adj = [[] for _ in range(n + 1)]  # index n is the landmark frame
    for i, j in zip(graph.odo_i, graph.odo_j):
        adj[int(i)].append(int(j))
        adj[int(j)].append(int(i))
    for i in graph.obs_node:
        adj[int(i)].append(n)
        adj[n].append(int(i))
    seen = np.zeros(n + 1, dtype=bool)
    stack = [graph.gauge_index]
    seen[graph.gauge_index] = True
    while stack:
        k = stack.pop()
        for nxt in adj[k]:
            if not seen[nxt]:
                seen[nxt] = True
                stack.append(nxt)
    return bool(np.all(seen[:n]))


def build_graph(
    aligned: AlignedSequence,
    layout,
    mode: str,
    position_only: bool = False,
    landmark_fixed: bool = False,
) -> PoseGraph:
    """Assemble the optimization problem from an aligned sequence.

    ``layout`` provides the fixed pole template (``layout.template()``
    packed (P, 7)).  In planar mode every pose is projected to
    ``[x, y, yaw]`` first.  The landmark frame starts where the first
    observation says it is: the predicted and measured relative pose of
    that pole coincide exactly at the initial estimate.
    """
    if mode not in (PLANAR, FULL3D):
        raise DataError(f"unknown graph mode {mode!r}")
    if aligned.node_count < 2:
        raise DataError("aligned sequence too short to build a graph")

    template3 = layout.template()
    planar = mode == PLANAR
    if planar:
        states = geom.pose3_to_pose2_packed(aligned.poses)
        template = geom.pose3_to_pose2_packed(template3)
        odo_meas = geom.pose3_to_pose2_packed(aligned.meas)
    else:
        states = aligned.poses.copy()
        template = template3
        odo_meas = aligned.meas.copy()

    n = aligned.node_count
    odo_i = np.arange(n - 1, dtype=int)
    odo_j = odo_i + 1

    attachments = aligned.attachments
    obs_node = np.array([a[0] for a in attachments], dtype=int)
    obs_pole = np.array([a[1].pole_id for a in attachments], dtype=int)
    if attachments:
        rel3 = np.stack([a[1].rel for a in attachments])
        obs_meas = geom.pose3_to_pose2_packed(rel3) if planar else rel3
        obs_w_trans = np.array([a[1].weight_trans for a in attachments])
        obs_w_rot = np.array([a[1].weight_rot for a in attachments])
    else:
        dim = 3 if planar else 7
        obs_meas = np.zeros((0, dim))
        obs_w_trans = np.zeros(0)
        obs_w_rot = np.zeros(0)

    if np.any(obs_pole >= template.shape[0]):
        raise DataError("observed pole id missing from the template")

    _, compose, inverse, _, _, _ = _group(mode)
    if attachments:
        node, obs = attachments[0]
        first_rel = obs_meas[0]
        landmark = compose(compose(states[node], first_rel), inverse(template[obs.pole_id]))
    else:
        landmark = (geom.POSE2_IDENTITY if planar else geom.POSE3_IDENTITY).copy()

    graph = PoseGraph(
        source=aligned.source,
        rate=aligned.rate,
        dof_mode=mode,
        times=aligned.times.copy(),
        is_frame=aligned.is_frame.copy(),
        states=states,
        landmark=landmark,
        template=template,
        odo_i=odo_i,
        odo_j=odo_j,
        odo_meas=odo_meas,
        odo_w_trans=aligned.meas_weight_trans.copy(),
        odo_w_rot=aligned.meas_weight_rot.copy(),
        obs_node=obs_node,
        obs_pole=obs_pole,
        obs_meas=obs_meas,
        obs_w_trans=obs_w_trans,
        obs_w_rot=obs_w_rot,
        unconstrained=not attachments,
        landmark_fixed=landmark_fixed,
        position_only=position_only,
    )
    if not is_connected(graph):
        raise DataError("graph is disconnected: some nodes unreachable from the gauge")
    return graph


# ---------------------------------------------------------------------------
# residuals


def odometry_residuals(graph: PoseGraph, states=None) -> np.ndarray:
    """Tangent residual per odometry edge: log(meas^-1 * (s_i^-1 * s_j))."""
    s = graph.states if states is None else states
    _, compose, inverse, rel, logm, _ = _group(graph.dof_mode)
    return logm(compose(inverse(graph.odo_meas), rel(s[graph.odo_i], s[graph.odo_j])))


def observation_residuals(graph: PoseGraph, states=None, landmark=None) -> np.ndarray:
    """Tangent residual per observation edge against the placed template."""
    s = graph.states if states is None else states
    lf = graph.landmark if landmark is None else landmark
    _, compose, inverse, rel, logm, _ = _group(graph.dof_mode)
    target = compose(lf, graph.template[graph.obs_pole])
    return logm(compose(inverse(graph.obs_meas), rel(s[graph.obs_node], target)))


def _split_weights(graph, residuals, w_trans, w_rot, rotation_counts: bool):
    """Per-edge weighted squared norm, translation and rotation parts."""
    if graph.dof_mode == PLANAR:
        sq_t = np.sum(residuals[:, :2] ** 2, axis=-1)
        sq_r = residuals[:, 2] ** 2
    else:
        sq_t = np.sum(residuals[:, :3] ** 2, axis=-1)
        sq_r = np.sum(residuals[:, 3:] ** 2, axis=-1)
    if not rotation_counts:
        sq_r = np.zeros_like(sq_r)
    return w_trans * sq_t + w_rot * sq_r


def per_edge_costs(graph: PoseGraph, states=None, landmark=None):
    """Weighted squared residual per edge: (odometry array, observation array)."""
    odo = _split_weights(
        graph, odometry_residuals(graph, states),
        graph.odo_w_trans, graph.odo_w_rot, True,
    )
    if graph.obs_count:
        obs = _split_weights(
            graph, observation_residuals(graph, states, landmark),
            graph.obs_w_trans, graph.obs_w_rot, not graph.position_only,
        )
    else:
        obs = np.zeros(0)
    return odo, obs


def total_cost(graph: PoseGraph, states=None, landmark=None) -> float:
    """Weighted squared residual norm over all edges."""
    odo, obs = per_edge_costs(graph, states, landmark)
    return float(np.sum(odo)) + float(np.sum(obs))


def edge_residual(graph: PoseGraph, kind: str, index: int):
    """One edge's tangent residual and its cost contribution."""
    if kind == ODOMETRY:
        r = odometry_residuals(graph)[index]
        contrib = _split_weights(
            graph, r[None], graph.odo_w_trans[index : index + 1],
            graph.odo_w_rot[index : index + 1], True,
        )
    elif kind == OBSERVATION:
        r = observation_residuals(graph)[index]
        contrib = _split_weights(
            graph, r[None], graph.obs_w_trans[index : index + 1],
            graph.obs_w_rot[index : index + 1], not graph.position_only,
        )
    else:
        raise DataError(f"unknown edge kind {kind!r}")
    return r, float(contrib[0])


def retract(graph: PoseGraph, states, landmark, node_delta, landmark_delta):
    """Right-multiplicative update of all free variables."""
    _, compose, _, _, _, expm = _group(graph.dof_mode)
    new_states = compose(states, expm(node_delta))
    new_landmark = (
        landmark if landmark_delta is None else compose(landmark, expm(landmark_delta))
    )
    return new_states, new_landmark
