"""Flow-coupled route-and-trajectory program over the intersection graph.

Every graph vertex owns the control net of one trajectory segment (planar
shape points plus timing points) constrained to its coverage disk, the
airspace box, a strict timing-rate margin, and per-control-point speed cones.
Edges carry the affine couplings (boundary conditions at source/sink,
endpoint-derivative matching between neighbors) and the convex segment costs:
quadratic geometric effort, elapsed time, a constant handover charge on
internal edges, and a quadratic smoothing regularizer.

Selecting one source-sink path with binary edge flows makes the whole thing a
mixed-integer conic program. We solve its convex relaxation instead: each
constraint is homogenized onto per-edge copies of the incident vertex
variables scaled by the edge flow (the perspective trick, which keeps
everything conic), quadratic costs become rotated-cone perspectives, and the
optimum is a certified lower bound. Randomized depth-first rounding guided by
the fractional flows extracts candidate paths, every candidate is re-solved
exactly over its own vertices, and the cheapest refinement wins. A brute-force
path enumerator doubles as the near-optimality oracle on small graphs.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from gcsflight import bezier, conic
from gcsflight.bezier import MIN_TIMING_RATE, BezierCurve, SegmentPair, derivative_matrix
from gcsflight.regions import SINK, SOURCE, FeasibleDisk, IntersectionGraph, reachable

log = logging.getLogger(__name__)

FLOW_SUPPORT_TOL = 1e-4
DEFAULT_TRIALS = 32
MAX_CANDIDATES = 16
_ENUMERATION_FALLBACK_CAP = 64

# moderated tolerances for the planner's meter-and-kilometer-scale programs;
# chasing the solver defaults at these magnitudes just over-polishes the
# final iterations (the independent residual check still gates quality)
_PLANNER_SETTINGS = {"tol_feas": 1e-7, "tol_gap_rel": 1e-7}


class GcsError(Exception):
    """Base class for route-planning failures."""


class UnreachableGraph(GcsError):
    pass


class RelaxationInfeasible(GcsError):
    pass


class SolverFailure(GcsError):
    pass


class NoCandidatePaths(GcsError):
    pass


class RefinementFailed(GcsError):
    pass


class PathCountExceeded(GcsError):
    pass


@dataclass
class _Block:
    """Triplet rows over template-local columns, plus constants and cone dims."""

    kind: str
    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray
    nrows: int
    const: np.ndarray
    dims: tuple[int, ...] = ()
    label: str = ""


def _as_block(kind, triplets, nrows, const, dims=(), label="") -> _Block:
    rows = np.asarray([t[0] for t in triplets], dtype=np.int64)
    cols = np.asarray([t[1] for t in triplets], dtype=np.int64)
    vals = np.asarray([t[2] for t in triplets], dtype=np.float64)
    return _Block(kind, rows, cols, vals, nrows, np.asarray(const, dtype=np.float64), tuple(dims), label)


class VertexLayout:
    """Index map of one vertex's variable block: shape points then timing points."""

    def __init__(self, degree: int):
        self.degree = degree
        self.size = 3 * (degree + 1)

    def rx(self, k: int) -> int:
        return 2 * k

    def ry(self, k: int) -> int:
        return 2 * k + 1

    def h(self, k: int) -> int:
        return 2 * (self.degree + 1) + k


@dataclass
class GcsVertex:
    """One disk's variable layout and its convex membership template."""

    id: int
    disk: FeasibleDisk
    layout: VertexLayout
    nonneg: _Block
    cones: _Block
    counts: dict

    @property
    def num_vars(self) -> int:
        return self.layout.size


@dataclass
class GcsEdge:
    """Coupling constraints and cost terms of one directed edge.

    ``coupling`` columns are local to the single relevant copy for source and
    sink edges, and to the stacked (tail, head) layout for internal edges.
    Cost terms always act on the tail copy; ``quad`` rows carry the square
    roots of their weights so the epigraph objective coefficient is one.
    """

    tail: object
    head: object
    kind: str  # source | internal | sink
    coupling: _Block
    quad: Optional[_Block]
    lin_idx: np.ndarray
    lin_val: np.ndarray
    constant: float


@dataclass
class GcsProblem:
    graph: IntersectionGraph
    disks: dict
    degree: int
    continuity_order: int
    v_max: float
    t_max: float
    weights: object
    vertices: dict
    edges: list[GcsEdge]
    edge_index: dict

    @property
    def layout(self) -> VertexLayout:
        return next(iter(self.vertices.values())).layout if self.vertices else VertexLayout(self.degree)


@dataclass
class RelaxationResult:
    """Fractional edge flows, variable copies, and the certified lower bound."""

    flows: dict
    lower_bound: float
    copies: dict
    max_flow_residual: float
    solution: conic.Solution


@dataclass
class CostBreakdown:
    geometric: float
    time: float
    handover: float
    smoothing: float

    @property
    def total(self) -> float:
        return self.geometric + self.time + self.handover + self.smoothing


@dataclass
class PathSolution:
    """A refined source-sink path with its segments and exact cost terms."""

    sequence: tuple  # (SOURCE, i1, ..., iK, SINK)
    segments: tuple[SegmentPair, ...]
    cost: float
    breakdown: CostBreakdown
    info: dict = field(default_factory=dict)

    @property
    def serving(self) -> tuple:
        return self.sequence[1:-1]

    @property
    def handover_count(self) -> int:
        return len(self.serving) - 1


@dataclass
class RouteOptions:
    seed: int = 0
    trials: int = DEFAULT_TRIALS
    flow_tol: float = FLOW_SUPPORT_TOL
    max_candidates: int = MAX_CANDIDATES
    time_limit: Optional[float] = None


@dataclass
class RouteResult:
    best: PathSolution
    lower_bound: float
    gap: float
    relaxation: RelaxationResult
    candidates: list[tuple]
    refined_costs: dict


# ---------------------------------------------------------------------------
# problem construction


def _vertex_template(vid, disk, layout, airspace, v_max, t_max, eps_h) -> GcsVertex:
    m = layout.degree
    cx, cy = disk.center
    rho = disk.radius_m

    # nonneg rows: airspace box, timing-rate lower bounds, time-range bounds
    trip, const = [], []
    row = 0
    for k in range(m + 1):
        trip += [(row, layout.rx(k), 1.0)]
        const.append(-airspace.x_min)
        trip += [(row + 1, layout.rx(k), -1.0)]
        const.append(airspace.x_max)
        trip += [(row + 2, layout.ry(k), 1.0)]
        const.append(-airspace.y_min)
        trip += [(row + 3, layout.ry(k), -1.0)]
        const.append(airspace.y_max)
        row += 4
    n_box = row
    for k in range(m):
        trip += [(row, layout.h(k + 1), float(m)), (row, layout.h(k), -float(m))]
        const.append(-eps_h)
        row += 1
    trip += [(row, layout.h(0), 1.0)]
    const.append(0.0)
    row += 1
    for k in range(m + 1):
        trip += [(row, layout.h(k), -1.0)]
        const.append(t_max)
        row += 1
    nonneg = _as_block("nonneg", trip, row, const, label=f"v{vid}.nonneg")

    # cones: per-point disk membership, then per-interval speed cones
    trip, const, dims = [], [], []
    row = 0
    for k in range(m + 1):
        const.append(rho)
        trip += [(row + 1, layout.rx(k), 1.0)]
        const.append(-cx)
        trip += [(row + 2, layout.ry(k), 1.0)]
        const.append(-cy)
        dims.append(3)
        row += 3
    for k in range(m):
        trip += [(row, layout.h(k + 1), v_max * m), (row, layout.h(k), -v_max * m)]
        const.append(0.0)
        trip += [(row + 1, layout.rx(k + 1), float(m)), (row + 1, layout.rx(k), -float(m))]
        const.append(0.0)
        trip += [(row + 2, layout.ry(k + 1), float(m)), (row + 2, layout.ry(k), -float(m))]
        const.append(0.0)
        dims.append(3)
        row += 3
    cones = _as_block("soc", trip, row, const, dims, label=f"v{vid}.cones")

    counts = {
        "disk_cones": m + 1,
        "speed_cones": m,
        "timing_lower_bounds": m,
        "box_rows": n_box,
        "time_range_rows": m + 2,
    }
    return GcsVertex(id=vid, disk=disk, layout=layout, nonneg=nonneg, cones=cones, counts=counts)


def _source_coupling(layout, q_s) -> _Block:
    m = layout.degree
    trip = [
        (0, layout.rx(0), 1.0),
        (1, layout.ry(0), 1.0),
        (2, layout.h(0), 1.0),
        (3, layout.rx(1), float(m)),
        (3, layout.rx(0), -float(m)),
        (4, layout.ry(1), float(m)),
        (4, layout.ry(0), -float(m)),
    ]
    const = [-q_s[0], -q_s[1], 0.0, 0.0, 0.0]
    return _as_block("zero", trip, 5, const, label="edge.start")


def _sink_coupling(layout, q_g) -> _Block:
    m = layout.degree
    trip = [
        (0, layout.rx(m), 1.0),
        (1, layout.ry(m), 1.0),
        (2, layout.rx(m), float(m)),
        (2, layout.rx(m - 1), -float(m)),
        (3, layout.ry(m), float(m)),
        (3, layout.ry(m - 1), -float(m)),
    ]
    const = [-q_g[0], -q_g[1], 0.0, 0.0]
    return _as_block("zero", trip, 4, const, label="edge.goal")


def _continuity_coupling(layout, eta) -> _Block:
    """Endpoint derivative matching up to order eta, tail columns then head."""
    m = layout.degree
    n = layout.size
    trip, const = [], []
    row = 0
    for p in range(eta + 1):
        dmat = derivative_matrix(m, p)
        tail_row = dmat[m - p, :]
        head_row = dmat[0, :]
        for coord in ("x", "y", "h"):
            for j in range(m + 1):
                if tail_row[j] != 0.0:
                    col = {"x": layout.rx(j), "y": layout.ry(j), "h": layout.h(j)}[coord]
                    trip.append((row, col, float(tail_row[j])))
                if head_row[j] != 0.0:
                    col = {"x": layout.rx(j), "y": layout.ry(j), "h": layout.h(j)}[coord]
                    trip.append((row, n + col, -float(head_row[j])))
            const.append(0.0)
            row += 1
    return _as_block("zero", trip, row, const, label="edge.continuity")


def _cost_template(layout, weights) -> tuple[Optional[_Block], np.ndarray, np.ndarray]:
    """Square-root-weighted quadratic rows plus the linear duration term."""
    m = layout.degree
    trip = []
    row = 0
    if weights.alpha > 0:
        w = math.sqrt(weights.alpha)
        d1 = derivative_matrix(m, 1)
        for k in range(m):
            for j in range(m + 1):
                if d1[k, j] != 0.0:
                    trip.append((row, layout.rx(j), w * d1[k, j]))
                    trip.append((row + 1, layout.ry(j), w * d1[k, j]))
            row += 2
    if weights.gamma_sm > 0 and m >= 2:
        w = math.sqrt(weights.gamma_sm)
        d2 = derivative_matrix(m, 2)
        for k in range(m - 1):
            for j in range(m + 1):
                if d2[k, j] != 0.0:
                    trip.append((row, layout.rx(j), w * d2[k, j]))
                    trip.append((row + 1, layout.ry(j), w * d2[k, j]))
                    trip.append((row + 2, layout.h(j), w * d2[k, j]))
            row += 3
    quad = None
    if row:
        quad = _as_block("quad", trip, row, np.zeros(row), label="edge.cost.quad")
    lin_idx = np.array([layout.h(m), layout.h(0)], dtype=np.int64)
    lin_val = np.array([weights.beta, -weights.beta], dtype=np.float64)
    return quad, lin_idx, lin_val


def default_time_cap(airspace, v_max: float) -> float:
    """Generous upper bound on the mission clock, keeping vertex sets compact."""
    return max(100.0, 20.0 * airspace.diagonal_m / v_max)


def build_gcs(
    graph: IntersectionGraph,
    disks: Sequence[FeasibleDisk],
    scenario,
    t_max: Optional[float] = None,
) -> GcsProblem:
    """Assemble vertex templates and edge couplings/costs for the route program."""
    if not reachable(graph):
        raise UnreachableGraph("no directed source-sink path in the intersection graph")
    m = scenario.degree
    eta = scenario.continuity_order
    layout = VertexLayout(m)
    by_id = {d.bs_id: d for d in disks}
    if t_max is None:
        t_max = default_time_cap(scenario.airspace, scenario.v_max_mps)

    vertices = {
        vid: _vertex_template(
            vid, by_id[vid], layout, scenario.airspace, scenario.v_max_mps, t_max, MIN_TIMING_RATE
        )
        for vid in graph.vertices
    }

    source_block = _source_coupling(layout, graph.source_xy)
    sink_block = _sink_coupling(layout, graph.goal_xy)
    internal_block = _continuity_coupling(layout, eta)
    quad, lin_idx, lin_val = _cost_template(layout, scenario.weights)

    edges = []
    for u, v in graph.edges:
        if u == SOURCE:
            edges.append(GcsEdge(u, v, "source", source_block, None, np.array([], dtype=np.int64), np.array([]), 0.0))
        elif v == SINK:
            edges.append(GcsEdge(u, v, "sink", sink_block, quad, lin_idx, lin_val, 0.0))
        else:
            edges.append(GcsEdge(u, v, "internal", internal_block, quad, lin_idx, lin_val, scenario.weights.lambda_ho))
    edge_index = {(e.tail, e.head): i for i, e in enumerate(edges)}

    return GcsProblem(
        graph=graph,
        disks=by_id,
        degree=m,
        continuity_order=eta,
        v_max=scenario.v_max_mps,
        t_max=t_max,
        weights=scenario.weights,
        vertices=vertices,
        edges=edges,
        edge_index=edge_index,
    )


# ---------------------------------------------------------------------------
# relaxation


def _emit(program, block: _Block, col_map, y_col: Optional[int], label: str) -> None:
    """Instantiate a template block: binding (y_col None) or flow-homogenized.

    ``col_map`` maps template-local columns to global ones. Homogenization
    moves each row constant onto the flow column, which is exactly the
    perspective scaling of the underlying set.
    """
    cols = col_map(block.cols)
    rows, vals = block.rows, block.vals
    const = block.const
    if y_col is not None:
        nz = np.nonzero(const)[0]
        if nz.size:
            rows = np.concatenate([rows, nz])
            cols = np.concatenate([cols, np.full(nz.size, y_col, dtype=np.int64)])
            vals = np.concatenate([vals, const[nz]])
        const = np.zeros(block.nrows)
    program.add_block_raw(block.kind, rows, cols, vals, block.nrows, const, block.dims, label)


def _copy_col_map(offset: int):
    return lambda cols: cols + offset


def _pair_col_map(n: int, tail_off: int, head_off: int):
    def mapper(cols):
        return np.where(cols < n, cols + tail_off, cols - n + head_off)

    return mapper


@dataclass
class RelaxationLayout:
    """Assembled relaxation program plus the variable base offsets."""

    program: conic.ConicProgram
    tail_base: list
    head_base: list
    epi_col: list
    src_out: list
    sink_in: list
    out_edges: dict
    in_edges: dict


def assemble_relaxation(problem: GcsProblem) -> RelaxationLayout:
    """Build the perspective relaxation as one conic program."""
    graph = problem.graph
    edges = problem.edges
    n = problem.layout.size
    E = len(edges)

    program = conic.ConicProgram()
    program.new_variables(E, "y")
    y_col = list(range(E))

    tail_base: list[Optional[int]] = [None] * E
    head_base: list[Optional[int]] = [None] * E
    for i, e in enumerate(edges):
        if e.tail != SOURCE:
            tail_base[i] = program.num_variables
            program.new_variables(n, f"z{i}.tail")
        if e.head != SINK:
            head_base[i] = program.num_variables
            program.new_variables(n, f"z{i}.head")
    epi_col: list[Optional[int]] = [None] * E
    for i, e in enumerate(edges):
        if e.quad is not None and e.kind != "source":
            epi_col[i] = program.num_variables
            program.new_variables(1, f"s{i}")

    # per-edge memberships, couplings, and perspective costs
    for i, e in enumerate(edges):
        label = f"e{i}:{e.tail}->{e.head}"
        if tail_base[i] is not None:
            vtx = problem.vertices[e.tail]
            _emit(program, vtx.nonneg, _copy_col_map(tail_base[i]), y_col[i], f"{label}.tail.nonneg")
            _emit(program, vtx.cones, _copy_col_map(tail_base[i]), y_col[i], f"{label}.tail.cones")
        if head_base[i] is not None:
            vtx = problem.vertices[e.head]
            _emit(program, vtx.nonneg, _copy_col_map(head_base[i]), y_col[i], f"{label}.head.nonneg")
            _emit(program, vtx.cones, _copy_col_map(head_base[i]), y_col[i], f"{label}.head.cones")

        if e.kind == "source":
            _emit(program, e.coupling, _copy_col_map(head_base[i]), y_col[i], f"{label}.start")
        elif e.kind == "sink":
            _emit(program, e.coupling, _copy_col_map(tail_base[i]), y_col[i], f"{label}.goal")
        else:
            _emit(
                program,
                e.coupling,
                _pair_col_map(n, tail_base[i], head_base[i]),
                y_col[i],
                f"{label}.continuity",
            )

        if e.kind != "source":
            base = tail_base[i]
            if epi_col[i] is not None:
                q = e.quad
                rows = np.concatenate([np.array([0, 1], dtype=np.int64), q.rows + 2])
                cols = np.concatenate(
                    [np.array([epi_col[i], y_col[i]], dtype=np.int64), q.cols + base]
                )
                vals = np.concatenate([np.array([1.0, 0.5]), q.vals])
                program.add_block_raw(
                    "rotated", rows, cols, vals, q.nrows + 2, np.zeros(q.nrows + 2),
                    (q.nrows + 2,), f"{label}.cost",
                )
                program.add_objective_term(program.ref(epi_col[i]), 1.0)
            for idx, val in zip(e.lin_idx, e.lin_val):
                if val != 0.0:
                    program.add_objective_term(program.ref(base + int(idx)), float(val))
            if e.constant:
                program.add_objective_term(program.ref(i), e.constant)

    # flow polytope: unit source/sink flow, conservation, bounds, capacity
    out_edges = {v: [] for v in graph.vertices}
    in_edges = {v: [] for v in graph.vertices}
    src_out, sink_in = [], []
    for i, e in enumerate(edges):
        if e.tail == SOURCE:
            src_out.append(i)
        else:
            out_edges[e.tail].append(i)
        if e.head == SINK:
            sink_in.append(i)
        else:
            in_edges[e.head].append(i)

    def add_flow_eq(idx_pos, idx_neg, rhs, label):
        terms = [(program.ref(i), 1.0) for i in idx_pos]
        terms += [(program.ref(i), -1.0) for i in idx_neg]
        program.add_equality(terms, rhs, label=label)

    add_flow_eq(src_out, [], 1.0, "flow.source")
    add_flow_eq(sink_in, [], 1.0, "flow.sink")
    for v in graph.vertices:
        add_flow_eq(out_edges[v], in_edges[v], 0.0, f"flow.conserve.{v}")
    for i in range(E):
        ref = program.ref(i)
        program.add_nonneg([(ref, 1.0)], 0.0, label=f"flow.lb.{i}")
        program.add_nonneg([(ref, -1.0)], 1.0, label=f"flow.ub.{i}")
    for v in graph.vertices:
        terms = [(program.ref(i), -1.0) for i in out_edges[v]]
        program.add_nonneg(terms, 1.0, label=f"flow.capacity.{v}")

    # copies of the same vertex agree in aggregate across its edge star;
    # in_edges/out_edges already carry the source and sink edges
    for v in graph.vertices:
        ins = [head_base[i] for i in in_edges[v]]
        outs = [tail_base[i] for i in out_edges[v]]
        n_rows = n
        rows = []
        cols = []
        vals = []
        for base in ins:
            rows.append(np.arange(n_rows))
            cols.append(np.arange(base, base + n_rows))
            vals.append(np.ones(n_rows))
        for base in outs:
            rows.append(np.arange(n_rows))
            cols.append(np.arange(base, base + n_rows))
            vals.append(-np.ones(n_rows))
        if rows:
            program.add_block_raw(
                "zero",
                np.concatenate(rows),
                np.concatenate(cols),
                np.concatenate(vals),
                n_rows,
                np.zeros(n_rows),
                (),
                f"consistency.{v}",
            )

    return RelaxationLayout(
        program=program,
        tail_base=tail_base,
        head_base=head_base,
        epi_col=epi_col,
        src_out=src_out,
        sink_in=sink_in,
        out_edges=out_edges,
        in_edges=in_edges,
    )


def solve_relaxation(
    problem: GcsProblem,
    backend=None,
    time_limit: Optional[float] = None,
) -> RelaxationResult:
    """Solve the perspective relaxation; the optimum is a certified lower bound."""
    rl = assemble_relaxation(problem)
    edges = problem.edges
    n = problem.layout.size

    if backend is None:
        backend = conic.ClarabelBackend(**_PLANNER_SETTINGS)
    sol = conic.solve(rl.program, backend=backend, time_limit=time_limit)
    if sol.status == "infeasible":
        raise RelaxationInfeasible("relaxed route program is infeasible")
    if sol.status == "numerical-failure" and sol.primal is not None:
        # perspective constraints lose constraint qualification as a flow
        # approaches zero, so dead edges' homogenized cones can carry slop on
        # the order of the solver's problem-scaled accuracy. The outputs used
        # downstream survive that: flows only need the equalities, and the
        # bound is the dual objective. Accept iff every equality holds.
        if sol.max_equality_residual <= conic.FEASIBILITY_TOL and sol.objective_dual is not None:
            log.info(
                "relaxation accepted with cone slop %.2e on vanishing flows",
                sol.max_cone_violation,
            )
        else:
            raise SolverFailure(f"relaxation solve ended with status {sol.status}")
    elif sol.status != "optimal":
        raise SolverFailure(f"relaxation solve ended with status {sol.status}")

    x = sol.primal
    flows = {(e.tail, e.head): float(x[i]) for i, e in enumerate(edges)}
    copies = {}
    for i, e in enumerate(edges):
        tb, hb = rl.tail_base[i], rl.head_base[i]
        copies[(e.tail, e.head)] = {
            "tail": None if tb is None else x[tb : tb + n].copy(),
            "head": None if hb is None else x[hb : hb + n].copy(),
        }

    resid = abs(sum(x[i] for i in rl.src_out) - 1.0)
    resid = max(resid, abs(sum(x[i] for i in rl.sink_in) - 1.0))
    for v in problem.graph.vertices:
        resid = max(
            resid,
            abs(sum(x[i] for i in rl.out_edges[v]) - sum(x[i] for i in rl.in_edges[v])),
        )

    # the dual value never exceeds the relaxation optimum, so it is the
    # certified bound; take the min defensively in case of loose convergence
    bound = float(sol.objective)
    if sol.objective_dual is not None:
        bound = min(bound, float(sol.objective_dual))

    return RelaxationResult(
        flows=flows,
        lower_bound=bound,
        copies=copies,
        max_flow_residual=float(resid),
        solution=sol,
    )


def integral_relaxation_point(problem: GcsProblem, rl: RelaxationLayout, solution: PathSolution) -> np.ndarray:
    """Embed a refined path into the relaxation's variable vector.

    Active edges get unit flow and copies equal to the incident segment
    control nets; everything else is zero. Used to certify that every path is
    relaxation-feasible, hence that the relaxation optimum is a lower bound.
    """
    program = rl.program
    x = np.zeros(program.num_variables)
    path = solution.sequence
    nets = {}
    layout = problem.layout
    n = layout.size
    for v, seg in zip(solution.serving, solution.segments):
        net = np.zeros(n)
        pts = seg.shape.control_points
        for k in range(problem.degree + 1):
            net[layout.rx(k)] = pts[k, 0]
            net[layout.ry(k)] = pts[k, 1]
            net[layout.h(k)] = seg.timing.control_points[k, 0]
        nets[v] = net
    for u, v in zip(path[:-1], path[1:]):
        i = problem.edge_index[(u, v)]
        x[i] = 1.0
        if rl.tail_base[i] is not None:
            x[rl.tail_base[i] : rl.tail_base[i] + n] = nets[u]
        if rl.head_base[i] is not None:
            x[rl.head_base[i] : rl.head_base[i] + n] = nets[v]
        if rl.epi_col[i] is not None:
            e = problem.edges[i]
            q = e.quad
            mat = np.zeros((q.nrows, n))
            mat[q.rows, q.cols] = q.vals
            x[rl.epi_col[i]] = float(np.sum((mat @ nets[u]) ** 2))
    return x


# ---------------------------------------------------------------------------
# rounding


def round_paths(
    graph: IntersectionGraph,
    flows: dict,
    trials: int,
    seed: int,
    flow_tol: float = FLOW_SUPPORT_TOL,
    max_candidates: int = MAX_CANDIDATES,
) -> list[tuple]:
    """Randomized depth-first path extraction guided by fractional flows.

    Each trial walks from the source, sampling the next edge with probability
    proportional to its flow among supported outgoing edges to unvisited
    vertices, and backtracks out of dead ends. Distinct completed paths are
    returned in discovery order; every trial draws an independent stream from
    (seed, trial index) so the result is reproducible.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    found: list[tuple] = []
    seen: set[tuple] = set()
    for trial in range(trials):
        rng = np.random.default_rng(np.random.SeedSequence((seed, trial)))
        path = _guided_walk(graph, flows, rng, flow_tol)
        if path is not None and path not in seen:
            seen.add(path)
            found.append(path)
            if len(found) >= max_candidates:
                break
    return found


def _guided_walk(graph, flows, rng, flow_tol) -> Optional[tuple]:
    path = [SOURCE]
    visited = {SOURCE}

    def dfs(v) -> bool:
        if v == SINK:
            return True
        options = [
            (w, flows.get((v, w), 0.0))
            for w in graph.out_neighbors(v)
            if w not in visited
        ]
        options = [(w, f) for w, f in options if f > flow_tol]
        order = []
        while options:
            weights = np.array([f for _, f in options])
            pick = int(rng.choice(len(options), p=weights / weights.sum()))
            order.append(options.pop(pick)[0])
        for w in order:
            visited.add(w)
            path.append(w)
            if dfs(w):
                return True
            visited.discard(w)
            path.pop()
        return False

    if dfs(SOURCE):
        return tuple(path)
    return None


def enumerate_simple_paths(graph: IntersectionGraph, cap: int) -> list[tuple]:
    """All simple source-sink paths, failing fast once ``cap`` is exceeded."""
    paths: list[tuple] = []
    stack = [SOURCE]
    visited = {SOURCE}

    def dfs(v):
        if v == SINK:
            paths.append(tuple(stack))
            if len(paths) > cap:
                raise PathCountExceeded(f"more than {cap} simple source-sink paths")
            return
        for w in sorted(graph.out_neighbors(v), key=str):
            if w in visited:
                continue
            visited.add(w)
            stack.append(w)
            dfs(w)
            stack.pop()
            visited.discard(w)

    dfs(SOURCE)
    return paths


# ---------------------------------------------------------------------------
# refinement


def refine(path: Sequence, problem: GcsProblem, time_limit: Optional[float] = None) -> PathSolution:
    """Solve the convex program restricted to one path, constraints binding.

    Raises ``RefinementFailed`` when the path-restricted program is
    infeasible (the candidate is rejected) and ``SolverFailure`` on numerical
    breakdown.
    """
    path = tuple(path)
    if len(path) < 3 or path[0] != SOURCE or path[-1] != SINK:
        raise ValueError(f"not a source-sink sequence: {path}")
    for u, v in zip(path[:-1], path[1:]):
        if (u, v) not in problem.edge_index:
            raise ValueError(f"({u}, {v}) is not a graph edge")
    internal = path[1:-1]
    n = problem.layout.size
    layout = problem.layout

    program = conic.ConicProgram()
    base = {}
    for v in internal:
        base[v] = program.num_variables
        program.new_variables(n, f"x{v}")

    for v in internal:
        vtx = problem.vertices[v]
        _emit(program, vtx.nonneg, _copy_col_map(base[v]), None, f"x{v}.nonneg")
        _emit(program, vtx.cones, _copy_col_map(base[v]), None, f"x{v}.cones")

    handovers = 0
    for u, v in zip(path[:-1], path[1:]):
        e = problem.edges[problem.edge_index[(u, v)]]
        label = f"{u}->{v}"
        if e.kind == "source":
            _emit(program, e.coupling, _copy_col_map(base[v]), None, f"{label}.start")
        elif e.kind == "sink":
            _emit(program, e.coupling, _copy_col_map(base[u]), None, f"{label}.goal")
        else:
            handovers += 1
            _emit(program, e.coupling, _pair_col_map(n, base[u], base[v]), None, f"{label}.continuity")
        if e.kind != "source":
            if e.quad is not None:
                exprs = []
                mat_rows: dict[int, list] = {}
                for rr, cc, vv in zip(e.quad.rows, e.quad.cols, e.quad.vals):
                    mat_rows.setdefault(int(rr), []).append(
                        (program.ref(base[u] + int(cc)), float(vv))
                    )
                for rr in range(e.quad.nrows):
                    exprs.append((mat_rows.get(rr, []), 0.0))
                program.add_quadratic_cost_epigraph(exprs, 1.0, label=f"{label}.cost")
            for idx, val in zip(e.lin_idx, e.lin_val):
                if val != 0.0:
                    program.add_objective_term(program.ref(base[u] + int(idx)), float(val))
            program.add_objective_constant(e.constant)

    backend = conic.ClarabelBackend(**_PLANNER_SETTINGS)
    sol = conic.solve(program, backend=backend, time_limit=time_limit)
    if sol.status == "infeasible":
        raise RefinementFailed(f"path {path} admits no feasible trajectory")
    if sol.status != "optimal":
        raise SolverFailure(f"refinement ended with status {sol.status}")

    segments = []
    x = sol.primal
    for v in internal:
        xv = x[base[v] : base[v] + n]
        shape = BezierCurve(np.column_stack([xv[0 : 2 * (problem.degree + 1) : 2], xv[1 : 2 * (problem.degree + 1) : 2]]))
        timing = BezierCurve(xv[2 * (problem.degree + 1) :][:, None])
        segments.append(SegmentPair(shape=shape, timing=timing))

    breakdown = _exact_cost(segments, problem.weights, handovers)
    return PathSolution(
        sequence=path,
        segments=tuple(segments),
        cost=breakdown.total,
        breakdown=breakdown,
        info={"solver": sol.info, "objective": sol.objective},
    )


def _exact_cost(segments, weights, handovers: int) -> CostBreakdown:
    """Recompute the edge-cost terms directly from the control nets."""
    geometric = 0.0
    smoothing = 0.0
    duration = 0.0
    for seg in segments:
        m = seg.degree
        r1 = derivative_matrix(m, 1) @ seg.shape.control_points
        geometric += float(np.sum(r1**2))
        if m >= 2:
            r2 = derivative_matrix(m, 2) @ seg.shape.control_points
            h2 = derivative_matrix(m, 2) @ seg.timing.control_points
            smoothing += float(np.sum(r2**2) + np.sum(h2**2))
        duration += seg.duration
    return CostBreakdown(
        geometric=weights.alpha * geometric,
        time=weights.beta * duration,
        handover=weights.lambda_ho * handovers,
        smoothing=weights.gamma_sm * smoothing,
    )


def _pick_best(solutions: list[PathSolution]) -> PathSolution:
    """Lowest cost wins; near-ties break to the lexicographically smallest path."""
    best_cost = min(s.cost for s in solutions)
    tol = 1e-9 * max(1.0, abs(best_cost))
    tied = [s for s in solutions if s.cost <= best_cost + tol]
    return min(tied, key=lambda s: tuple(str(v) for v in s.sequence))


def plan_route(problem: GcsProblem, options: Optional[RouteOptions] = None) -> RouteResult:
    """Relax, round, refine; returns the best path with its optimality gap."""
    options = options or RouteOptions()
    relax = solve_relaxation(problem, time_limit=options.time_limit)
    candidates = round_paths(
        problem.graph,
        relax.flows,
        options.trials,
        options.seed,
        flow_tol=options.flow_tol,
        max_candidates=options.max_candidates,
    )
    if not candidates:
        log.warning("flow-guided rounding produced no paths; trying exhaustive enumeration")
        try:
            candidates = enumerate_simple_paths(problem.graph, _ENUMERATION_FALLBACK_CAP)
        except PathCountExceeded:
            candidates = []
        if not candidates:
            raise NoCandidatePaths("rounding produced no source-sink path")

    refined: list[PathSolution] = []
    costs = {}
    failures = []
    solver_broke = False
    for cand in candidates:
        try:
            sol = refine(cand, problem, time_limit=options.time_limit)
        except RefinementFailed as exc:
            failures.append(str(exc))
            continue
        except SolverFailure as exc:
            log.warning("refinement of %s failed numerically: %s", cand, exc)
            failures.append(str(exc))
            solver_broke = True
            continue
        refined.append(sol)
        costs[cand] = sol.cost
    if not refined:
        if solver_broke:
            raise SolverFailure(
                f"all {len(candidates)} candidate refinements failed: {failures[:3]}"
            )
        raise RefinementFailed(
            f"all {len(candidates)} candidate paths were rejected: {failures[:3]}"
        )

    best = _pick_best(refined)
    lb = relax.lower_bound
    gap = (best.cost - lb) / max(lb, 1e-9)
    return RouteResult(
        best=best,
        lower_bound=lb,
        gap=gap,
        relaxation=relax,
        candidates=candidates,
        refined_costs=costs,
    )


def enumerate_oracle(problem: GcsProblem, max_paths: int) -> RouteResult:
    """Exhaustive best-over-all-simple-paths baseline for small graphs.

    Shares ``refine`` with the planner, so comparisons isolate the route
    choice. Raises ``PathCountExceeded`` when the graph is too large.
    """
    paths = enumerate_simple_paths(problem.graph, max_paths)
    refined = []
    costs = {}
    for cand in paths:
        try:
            sol = refine(cand, problem)
        except RefinementFailed:
            continue
        refined.append(sol)
        costs[cand] = sol.cost
    if not refined:
        raise RefinementFailed("no simple path admits a feasible trajectory")
    best = _pick_best(refined)
    return RouteResult(
        best=best,
        lower_bound=math.nan,
        gap=math.nan,
        relaxation=None,
        candidates=paths,
        refined_costs=costs,
    )
