"""Sparse Levenberg–Marquardt over pose-graph variables.

Each iteration linearizes every edge in the tangent space at the current
states, assembles the damped normal equations over the free blocks (all
nodes except the gauge node, plus the landmark frame when observations
exist), solves sparsely, and retracts with the exponential map.  Damping
is multiplicative on the (clamped) diagonal: steps that fail to lower
the cost raise it tenfold; accepted steps relax it.

The node chain gives a block-tridiagonal Hessian with one extra
row/column coupling every observing node to the landmark frame, so a
general sparse factorization stays near linear time in the node count.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import geometry as geom
from . import graph as gmod
from .sync import PLANAR, DataError

ANALYTIC = "analytic"
NUMERIC = "numeric"

COST_THRESHOLD = "cost-threshold"
UPDATE_THRESHOLD = "update-threshold"
MAX_ITERATIONS = "max-iterations"

DAMPING_CEILING = 1.0e8
FD_STEP = 1.0e-6


class ConditioningError(RuntimeError):
    """Normal equations unsolvable even at maximum damping."""

    def __init__(self, iteration: int, message: str):
        super().__init__(f"iteration {iteration}: {message}")
        self.iteration = iteration


@dataclass(frozen=True)
class SolverSettings:
    max_iterations: int = 100
    cost_tolerance: float = 1.0e-9  # relative cost decrease
    update_tolerance: float = 1.0e-10  # step norm
    initial_damping: float = 1.0e-6
    damping_increase: float = 10.0
    damping_decrease: float = 0.1
    jacobian_mode: str = ANALYTIC
    huber_delta: float = 0.0  # 0 keeps plain least squares

    def __post_init__(self):
        if self.max_iterations < 1:
            raise DataError("max_iterations must be at least 1")
        if self.cost_tolerance <= 0.0 or self.update_tolerance <= 0.0:
            raise DataError("solver tolerances must be positive")
        if self.initial_damping <= 0.0:
            raise DataError("initial damping must be positive")
        if self.damping_increase <= 1.0 or not 0.0 < self.damping_decrease < 1.0:
            raise DataError("damping factors must move damping in both directions")
        if self.jacobian_mode not in (ANALYTIC, NUMERIC):
            raise DataError(f"unknown jacobian mode {self.jacobian_mode!r}")
        if self.huber_delta < 0.0:
            raise DataError("huber_delta must be non-negative")


@dataclass
class SolveStats:
    iterations: int
    initial_cost: float
    final_cost: float
    reason: str
    cost_trace: list = field(default_factory=list)


# ---------------------------------------------------------------------------
# residuals and jacobian blocks over gathered edge arrays


def _odo_residual(planar, meas, si, sj):
    if planar:
        return geom.se2_log(
            geom.pose2_compose(geom.pose2_inverse(meas), geom.pose2_relative(si, sj))
        )
    return geom.se3_log(
        geom.pose3_compose(geom.pose3_inverse(meas), geom.pose3_relative(si, sj))
    )


def _obs_residual(planar, meas, si, landmark, pole):
    if planar:
        target = geom.pose2_compose(landmark, pole)
        return geom.se2_log(
            geom.pose2_compose(geom.pose2_inverse(meas), geom.pose2_relative(si, target))
        )
    target = geom.pose3_compose(landmark, pole)
    return geom.se3_log(
        geom.pose3_compose(geom.pose3_inverse(meas), geom.pose3_relative(si, target))
    )


def _odo_blocks_analytic(planar, meas, si, sj):
    r = _odo_residual(planar, meas, si, sj)
    if planar:
        jr_inv = geom.se2_right_jacobian_inv(r)
        adj = geom.se2_adjoint(geom.pose2_relative(sj, si))
    else:
        jr_inv = geom.se3_right_jacobian_inv(r)
        adj = geom.se3_adjoint(geom.pose3_relative(sj, si))
    jj = jr_inv
    ji = -np.einsum("...ij,...jk->...ik", jr_inv, adj)
    return r, ji, jj


def _obs_blocks_analytic(planar, meas, si, landmark, pole):
    r = _obs_residual(planar, meas, si, landmark, pole)
    if planar:
        target = geom.pose2_compose(landmark, pole)
        jr_inv = geom.se2_right_jacobian_inv(r)
        adj_i = geom.se2_adjoint(geom.pose2_relative(target, si))
        adj_lm = geom.se2_adjoint(geom.pose2_inverse(pole))
    else:
        target = geom.pose3_compose(landmark, pole)
        jr_inv = geom.se3_right_jacobian_inv(r)
        adj_i = geom.se3_adjoint(geom.pose3_relative(target, si))
        adj_lm = geom.se3_adjoint(geom.pose3_inverse(pole))
    ji = -np.einsum("...ij,...jk->...ik", jr_inv, adj_i)
    jl = np.einsum("...ij,...jk->...ik", jr_inv, adj_lm)
    return r, ji, jl


def _perturb(planar, state, delta):
    if planar:
        return geom.pose2_compose(state, geom.se2_exp(delta))
    return geom.pose3_compose(state, geom.se3_exp(delta))


def _odo_blocks_numeric(planar, meas, si, sj, step=FD_STEP):
    r = _odo_residual(planar, meas, si, sj)
    d = 3 if planar else 6
    count = meas.shape[0]
    ji = np.zeros((count, d, d))
    jj = np.zeros((count, d, d))
    for k in range(d):
        e = np.zeros(d)
        e[k] = step
        ji[:, :, k] = (
            _odo_residual(planar, meas, _perturb(planar, si, e), sj)
            - _odo_residual(planar, meas, _perturb(planar, si, -e), sj)
        ) / (2.0 * step)
        jj[:, :, k] = (
            _odo_residual(planar, meas, si, _perturb(planar, sj, e))
            - _odo_residual(planar, meas, si, _perturb(planar, sj, -e))
        ) / (2.0 * step)
    return r, ji, jj


def _obs_blocks_numeric(planar, meas, si, landmark, pole, step=FD_STEP):
    r = _obs_residual(planar, meas, si, landmark, pole)
    d = 3 if planar else 6
    count = meas.shape[0]
    ji = np.zeros((count, d, d))
    jl = np.zeros((count, d, d))
    for k in range(d):
        e = np.zeros(d)
        e[k] = step
        ji[:, :, k] = (
            _obs_residual(planar, meas, _perturb(planar, si, e), landmark, pole)
            - _obs_residual(planar, meas, _perturb(planar, si, -e), landmark, pole)
        ) / (2.0 * step)
        jl[:, :, k] = (
            _obs_residual(planar, meas, si, _perturb(planar, landmark, e), pole)
            - _obs_residual(planar, meas, si, _perturb(planar, landmark, -e), pole)
        ) / (2.0 * step)
    return r, ji, jl


def _weight_vectors(graph):
    """Per-component information weights, (E, d) and (M, d)."""
    if graph.dof_mode == PLANAR:
        odo = np.stack(
            [graph.odo_w_trans, graph.odo_w_trans, graph.odo_w_rot], axis=-1
        )
        obs_rot = np.zeros_like(graph.obs_w_rot) if graph.position_only else graph.obs_w_rot
        obs = np.stack([graph.obs_w_trans, graph.obs_w_trans, obs_rot], axis=-1)
    else:
        odo = np.stack([graph.odo_w_trans] * 3 + [graph.odo_w_rot] * 3, axis=-1)
        obs_rot = np.zeros_like(graph.obs_w_rot) if graph.position_only else graph.obs_w_rot
        obs = np.stack([graph.obs_w_trans] * 3 + [obs_rot] * 3, axis=-1)
    return odo, obs


def _robust_costs(sq, delta):
    """Huber-composed edge costs and IRLS weight factors."""
    if delta <= 0.0:
        return sq, np.ones_like(sq)
    cut = delta * delta
    root = np.sqrt(np.maximum(sq, 1e-300))
    cost = np.where(sq <= cut, sq, 2.0 * delta * root - cut)
    factor = np.where(sq <= cut, 1.0, delta / root)
    return cost, factor


def _total_cost(graph, states, landmark, huber_delta):
    odo, obs = gmod.per_edge_costs(graph, states, landmark)
    c_odo, _ = _robust_costs(odo, huber_delta)
    c_obs, _ = _robust_costs(obs, huber_delta)
    return float(np.sum(c_odo)) + float(np.sum(c_obs))


# ---------------------------------------------------------------------------
# sparse assembly with cached index structure


class _Assembler:
    """Fixed sparsity bookkeeping; only the numeric values change per iteration.

    The node-node Hessian ``A`` is block-tridiagonal plus scattered
    observation diagonal blocks; the landmark frame contributes one
    coupled block column ``B`` (stored dense, it has only ``d`` columns)
    and a ``d x d`` corner ``C``.  Keeping the landmark out of the sparse
    matrix lets the solve eliminate it by Schur complement, which avoids
    the fill-in a blind factorization suffers when most nodes observe.
    """

    def __init__(self, graph):
        n = graph.node_count
        d = graph.block_dim
        self.d = d
        bid = np.arange(n, dtype=int)
        bid[graph.gauge_index] = -1
        bid[graph.gauge_index + 1 :] -= 1
        self.node_bid = bid
        self.landmark_free = graph.obs_count > 0 and not graph.landmark_fixed
        self.node_dim = (n - 1) * d

        obs_bid = bid[graph.obs_node] if graph.obs_count else np.zeros(0, dtype=int)
        # node-node products entering the sparse matrix
        self.a_parts = [
            ("oii", bid[graph.odo_i], bid[graph.odo_i]),
            ("oij", bid[graph.odo_i], bid[graph.odo_j]),
            ("oji", bid[graph.odo_j], bid[graph.odo_i]),
            ("ojj", bid[graph.odo_j], bid[graph.odo_j]),
            ("sii", obs_bid, obs_bid),
        ]
        self.g_parts = [
            ("oi", bid[graph.odo_i]),
            ("oj", bid[graph.odo_j]),
            ("si", obs_bid),
        ]

        offsets = np.arange(d)
        self.a_masks, rows, cols = {}, [], []
        for name, a, b in self.a_parts:
            mask = (a >= 0) & (b >= 0)
            self.a_masks[name] = mask
            ra = a[mask][:, None, None] * d + offsets[None, :, None]
            cb = b[mask][:, None, None] * d + offsets[None, None, :]
            block = np.broadcast_arrays(ra, cb)
            rows.append(block[0].ravel())
            cols.append(block[1].ravel())
        self.rows = np.concatenate(rows)
        self.cols = np.concatenate(cols)

        self.g_masks, self.g_indices = {}, {}
        for name, a in self.g_parts:
            mask = a >= 0
            self.g_masks[name] = mask
            self.g_indices[name] = (a[mask][:, None] * d + offsets[None, :]).ravel()

        self.obs_mask = obs_bid >= 0
        self.b_rows = (obs_bid[self.obs_mask][:, None] * d + offsets[None, :]).ravel()

    def assemble(self, products, gvecs):
        """Returns (A sparse, B dense, C dense, g_nodes, g_landmark)."""
        d = self.d
        vals = np.concatenate(
            [products[name][self.a_masks[name]].ravel() for name, _, _ in self.a_parts]
        )
        a_mat = sp.coo_matrix(
            (vals, (self.rows, self.cols)), shape=(self.node_dim, self.node_dim)
        ).tocsr()

        g_nodes = np.zeros(self.node_dim)
        for name, _ in self.g_parts:
            np.add.at(
                g_nodes, self.g_indices[name], gvecs[name][self.g_masks[name]].ravel()
            )

        if self.landmark_free:
            b_mat = np.zeros((self.node_dim, d))
            np.add.at(
                b_mat,
                self.b_rows,
                products["sil"][self.obs_mask].reshape(-1, d),
            )
            c_mat = products["sll"].sum(axis=0)
            g_lm = gvecs["sl"].sum(axis=0)
        else:
            b_mat = np.zeros((self.node_dim, 0))
            c_mat = np.zeros((0, 0))
            g_lm = np.zeros(0)
        return a_mat, b_mat, c_mat, g_nodes, g_lm

    def solve(self, a_mat, b_mat, c_mat, g_nodes, g_lm, damping):
        """One damped solve; returns (node delta flat, landmark delta) or None."""
        diag_a = a_mat.diagonal()
        diag_c = np.diag(c_mat) if self.landmark_free else np.zeros(0)
        top = max(
            float(diag_a.max()) if diag_a.size else 1.0,
            float(diag_c.max()) if diag_c.size else 0.0,
            1.0,
        )
        floor = 1e-12 * top
        a_damped = a_mat + sp.diags(damping * np.maximum(diag_a, floor))
        try:
            lu = spla.splu(a_damped.tocsc())
        except RuntimeError:
            return None
        if not self.landmark_free:
            delta_n = lu.solve(-g_nodes)
            if not np.all(np.isfinite(delta_n)):
                return None
            return delta_n, None
        c_damped = c_mat + np.diag(damping * np.maximum(diag_c, floor))
        x0 = lu.solve(g_nodes)
        y_mat = lu.solve(b_mat)
        schur = c_damped - b_mat.T @ y_mat
        try:
            delta_l = np.linalg.solve(schur, -g_lm + b_mat.T @ x0)
        except np.linalg.LinAlgError:
            return None
        delta_n = -x0 - y_mat @ delta_l
        if not (np.all(np.isfinite(delta_n)) and np.all(np.isfinite(delta_l))):
            return None
        return delta_n, delta_l

    def split_delta(self, delta_n, delta_l, node_count):
        d = self.d
        node_delta = np.zeros((node_count, d))
        free = self.node_bid >= 0
        node_delta[free] = delta_n.reshape(-1, d)[self.node_bid[free]]
        return node_delta, delta_l


def _linearize(graph, states, landmark, numeric: bool):
    planar = graph.dof_mode == PLANAR
    si = states[graph.odo_i]
    sj = states[graph.odo_j]
    if numeric:
        r_odo, ji_o, jj_o = _odo_blocks_numeric(planar, graph.odo_meas, si, sj)
    else:
        r_odo, ji_o, jj_o = _odo_blocks_analytic(planar, graph.odo_meas, si, sj)

    if graph.obs_count:
        so = states[graph.obs_node]
        pole = graph.template[graph.obs_pole]
        if numeric:
            r_obs, ji_s, jl_s = _obs_blocks_numeric(planar, graph.obs_meas, so, landmark, pole)
        else:
            r_obs, ji_s, jl_s = _obs_blocks_analytic(planar, graph.obs_meas, so, landmark, pole)
    else:
        d = graph.block_dim
        r_obs = np.zeros((0, d))
        ji_s = jl_s = np.zeros((0, d, d))
    return r_odo, ji_o, jj_o, r_obs, ji_s, jl_s


def _products(graph, lin, huber_delta):
    r_odo, ji_o, jj_o, r_obs, ji_s, jl_s = lin
    w_odo, w_obs = _weight_vectors(graph)
    if huber_delta > 0.0:
        sq_odo = np.einsum("ek,ek->e", w_odo, r_odo**2)
        sq_obs = np.einsum("ek,ek->e", w_obs, r_obs**2)
        _, f_odo = _robust_costs(sq_odo, huber_delta)
        _, f_obs = _robust_costs(sq_obs, huber_delta)
        w_odo = w_odo * f_odo[:, None]
        w_obs = w_obs * f_obs[:, None]

    def wjtj(ja, w, jb):
        return np.einsum("eki,ek,ekj->eij", ja, w, jb)

    def wjtr(ja, w, r):
        return np.einsum("eki,ek,ek->ei", ja, w, r)

    products = {
        "oii": wjtj(ji_o, w_odo, ji_o),
        "oij": wjtj(ji_o, w_odo, jj_o),
        "oji": wjtj(jj_o, w_odo, ji_o),
        "ojj": wjtj(jj_o, w_odo, jj_o),
        "sii": wjtj(ji_s, w_obs, ji_s),
        "sil": wjtj(ji_s, w_obs, jl_s),
        "sll": wjtj(jl_s, w_obs, jl_s),
    }
    gvecs = {
        "oi": wjtr(ji_o, w_odo, r_odo),
        "oj": wjtr(jj_o, w_odo, r_odo),
        "si": wjtr(ji_s, w_obs, r_obs),
        "sl": wjtr(jl_s, w_obs, r_obs),
    }
    return products, gvecs


def optimize(graph, settings: SolverSettings = None):
    """Run damped least squares; returns (solved graph copy, SolveStats).

    The gauge node's state is bit-identical in the result.  Raises
    ConditioningError when the normal equations stay unsolvable with
    damping escalated beyond the ceiling.
    """
    settings = settings or SolverSettings()
    if not gmod.is_connected(graph):
        raise DataError("cannot optimize a disconnected graph")

    numeric = settings.jacobian_mode == NUMERIC
    states = graph.states.copy()
    landmark = graph.landmark.copy()
    gauge_state = states[graph.gauge_index].copy()
    assembler = _Assembler(graph)

    cost = _total_cost(graph, states, landmark, settings.huber_delta)
    trace = [cost]
    damping = settings.initial_damping
    reason = MAX_ITERATIONS
    iterations = 0

    for iteration in range(1, settings.max_iterations + 1):
        iterations = iteration
        lin = _linearize(graph, states, landmark, numeric)
        products, gvecs = _products(graph, lin, settings.huber_delta)
        a_mat, b_mat, c_mat, g_nodes, g_lm = assembler.assemble(products, gvecs)

        while True:
            solution = assembler.solve(a_mat, b_mat, c_mat, g_nodes, g_lm, damping)
            if solution is not None:
                delta_n, delta_l = solution
                node_delta, lm_delta = assembler.split_delta(
                    delta_n, delta_l, graph.node_count
                )
                cand_states, cand_lm = gmod.retract(
                    graph, states, landmark, node_delta, lm_delta
                )
                cand_states[graph.gauge_index] = gauge_state
                cand_cost = _total_cost(graph, cand_states, cand_lm, settings.huber_delta)
                if cand_cost <= cost:
                    damping = max(damping * settings.damping_decrease, 1e-12)
                    break
            damping *= settings.damping_increase
            if damping > DAMPING_CEILING:
                raise ConditioningError(
                    iteration, "normal equations unsolvable at maximum damping"
                )

        step_norm = float(np.linalg.norm(delta_n))
        if delta_l is not None:
            step_norm = float(np.hypot(step_norm, np.linalg.norm(delta_l)))
        decrease = cost - cand_cost
        states, landmark = cand_states, cand_lm
        trace.append(cand_cost)
        relative = decrease / cost if cost > 0.0 else 0.0
        cost = cand_cost
        if relative <= settings.cost_tolerance:
            reason = COST_THRESHOLD
            break
        if step_norm < settings.update_tolerance:
            reason = UPDATE_THRESHOLD
            break

    stats = SolveStats(
        iterations=iterations,
        initial_cost=trace[0],
        final_cost=cost,
        reason=reason,
        cost_trace=trace,
    )
    return graph.with_solution(states, landmark), stats


def check_jacobians(graph, probe_count: int = 100, seed: int = 0, step: float = FD_STEP):
    """Max |analytic - central difference| over randomly probed edges.

    States are randomized before probing so the comparison exercises
    generic operating points rather than the near-identity regime.
    """
    rng = np.random.default_rng(seed)
    planar = graph.dof_mode == PLANAR
    d = graph.block_dim
    n = graph.node_count

    # rotational spread stays well below pi so the log map is smooth at probes
    spread = np.array([0.5] * (2 if planar else 3) + [0.25] * (1 if planar else 3))
    node_delta = rng.uniform(-1.0, 1.0, (n, d)) * spread
    lm_delta = rng.uniform(-1.0, 1.0, d) * spread
    states, landmark = gmod.retract(
        graph, graph.states, graph.landmark, node_delta, lm_delta
    )

    total = graph.odo_count + graph.obs_count
    picks = rng.choice(total, size=min(probe_count, total), replace=False)
    odo_idx = picks[picks < graph.odo_count]
    obs_idx = picks[picks >= graph.odo_count] - graph.odo_count

    worst = 0.0
    if odo_idx.size:
        meas = graph.odo_meas[odo_idx]
        si = states[graph.odo_i[odo_idx]]
        sj = states[graph.odo_j[odo_idx]]
        _, ji_a, jj_a = _odo_blocks_analytic(planar, meas, si, sj)
        _, ji_n, jj_n = _odo_blocks_numeric(planar, meas, si, sj, step)
        worst = max(worst, float(np.abs(ji_a - ji_n).max()), float(np.abs(jj_a - jj_n).max()))
    if obs_idx.size:
        meas = graph.obs_meas[obs_idx]
        si = states[graph.obs_node[obs_idx]]
        pole = graph.template[graph.obs_pole[obs_idx]]
        _, ji_a, jl_a = _obs_blocks_analytic(planar, meas, si, landmark, pole)
        _, ji_n, jl_n = _obs_blocks_numeric(planar, meas, si, landmark, pole, step)
        worst = max(worst, float(np.abs(ji_a - ji_n).max()), float(np.abs(jl_a - jl_n).max()))
    return worst
