"""Backend-neutral second-order cone programs with a linear objective.

A program owns a variable vector and a list of constraint blocks, each an
affine expression ``A x + c`` required to lie in one of four cones: the zero
cone (equalities), the nonnegative orthant, second-order cones, or rotated
second-order cones. Quadratic costs are always lowered to rotated-cone
epigraphs, so any linear-objective conic backend can serve.

Solving goes through a small adapter; the default is the embedded Clarabel
interior-point solver. ``check_solution`` recomputes all residuals from the
program data alone, independent of whatever backend produced the point.

Construction is single-owner and not thread-safe; solving distinct programs
concurrently is fine (the Clarabel adapter is reentrant: each solve builds
its own solver object).
"""

from __future__ import annotations

import io
import itertools
import math
import os
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import sparse

FEASIBILITY_TOL = 1e-6
OBJECTIVE_RTOL = 1e-6

TIME_LIMIT_ENV = "GCSFLIGHT_SOLVER_TIME_LIMIT"

_program_tokens = itertools.count()

ZERO = "zero"
NONNEG = "nonneg"
SOC = "soc"
ROTATED = "rotated"


@dataclass(frozen=True)
class VariableRef:
    """Opaque handle into one program's variable vector."""

    index: int
    token: int
    name: str = ""


@dataclass
class _Block:
    """Affine rows ``A x + const`` constrained to a cone.

    Triplets are local to the block (rows 0..nrows-1, columns global).
    ``dims`` partitions the rows into cones for the soc/rotated kinds.
    """

    kind: str
    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray
    nrows: int
    const: np.ndarray
    dims: tuple[int, ...] = ()
    label: str = ""


@dataclass
class ResidualReport:
    """Constraint residuals of a candidate point, recomputed from scratch."""

    max_equality_residual: float
    max_nonneg_violation: float
    max_soc_violation: float
    max_rotated_violation: float
    flagged: list[tuple[str, float]]

    @property
    def max_cone_violation(self) -> float:
        return max(self.max_nonneg_violation, self.max_soc_violation, self.max_rotated_violation)

    def ok(self, tol: float = FEASIBILITY_TOL) -> bool:
        return self.max_equality_residual <= tol and self.max_cone_violation <= tol


@dataclass
class Solution:
    """Result of one solve. ``primal`` is None unless a point was produced.

    ``objective_dual`` is the backend's dual objective at termination; by
    weak duality it never exceeds the true optimum, which makes it the safe
    choice wherever the value is used as a certified bound.
    """

    status: str  # optimal | infeasible | unbounded | numerical-failure
    primal: Optional[np.ndarray]
    objective: Optional[float]
    objective_dual: Optional[float] = None
    max_equality_residual: float = math.nan
    max_cone_violation: float = math.nan
    info: dict = field(default_factory=dict)


class ConicProgram:
    """Mutable builder for one cone program; see the module docstring."""

    def __init__(self):
        self._token = next(_program_tokens)
        self._n = 0
        self._obj_idx: list[int] = []
        self._obj_val: list[float] = []
        self.objective_constant = 0.0
        self._blocks: list[_Block] = []
        self._names: list[str] = []

    # -- variables ---------------------------------------------------------

    @property
    def num_variables(self) -> int:
        return self._n

    @property
    def num_rows(self) -> int:
        return sum(b.nrows for b in self._blocks)

    def new_variables(self, count: int, name: str = "") -> list[VariableRef]:
        base = self._n
        self._n += count
        if name:
            self._names.extend(f"{name}[{i}]" if count > 1 else name for i in range(count))
        else:
            self._names.extend("" for _ in range(count))
        return [VariableRef(base + i, self._token, self._names[base + i]) for i in range(count)]

    def new_variable(self, name: str = "") -> VariableRef:
        return self.new_variables(1, name)[0]

    def ref(self, index: int) -> VariableRef:
        """Re-issue a handle for an existing variable index."""
        if not 0 <= index < self._n:
            raise ValueError(f"variable index {index} out of range")
        return VariableRef(index, self._token, self._names[index])

    def _check_ref(self, ref: VariableRef) -> int:
        if ref.token != self._token:
            raise ValueError(f"variable {ref} belongs to a different program")
        if not 0 <= ref.index < self._n:
            raise ValueError(f"variable index {ref.index} out of range")
        return ref.index

    # -- objective ---------------------------------------------------------

    def add_objective_term(self, ref: VariableRef, coeff: float) -> None:
        self._obj_idx.append(self._check_ref(ref))
        self._obj_val.append(float(coeff))

    def add_objective_constant(self, value: float) -> None:
        self.objective_constant += float(value)

    def objective_vector(self) -> np.ndarray:
        c = np.zeros(self._n)
        np.add.at(c, self._obj_idx, self._obj_val)
        return c

    def objective_value(self, x: np.ndarray) -> float:
        return float(self.objective_vector() @ x) + self.objective_constant

    # -- constraint construction -------------------------------------------

    def _expr_triplets(self, exprs: Sequence) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """exprs: sequence of (terms, const) with terms = [(VariableRef, coeff), ...]."""
        rows, cols, vals, consts = [], [], [], []
        for r, (terms, const) in enumerate(exprs):
            consts.append(float(const))
            for ref, coeff in terms:
                rows.append(r)
                cols.append(self._check_ref(ref))
                vals.append(float(coeff))
        return (
            np.asarray(rows, dtype=np.int64),
            np.asarray(cols, dtype=np.int64),
            np.asarray(vals, dtype=np.float64),
            np.asarray(consts, dtype=np.float64),
        )

    def _add_expr_block(self, kind: str, exprs: Sequence, dims: tuple[int, ...], label: str) -> None:
        rows, cols, vals, consts = self._expr_triplets(exprs)
        self._blocks.append(
            _Block(kind, rows, cols, vals, len(exprs), consts, dims, label)
        )

    def add_equality(self, terms, rhs: float = 0.0, label: str = "") -> None:
        """sum(coeff * var) == rhs."""
        self._add_expr_block(ZERO, [(terms, -float(rhs))], (), label)

    def add_nonneg(self, terms, const: float = 0.0, label: str = "") -> None:
        """sum(coeff * var) + const >= 0."""
        self._add_expr_block(NONNEG, [(terms, const)], (), label)

    def add_soc(self, head, tail, label: str = "") -> None:
        """head >= ||tail||_2; head and each tail entry are (terms, const) pairs."""
        exprs = [head, *tail]
        self._add_expr_block(SOC, exprs, (len(exprs),), label)

    def add_rotated(self, u0, u1, w, label: str = "") -> None:
        """2 * u0 * u1 >= ||w||_2^2 with u0, u1 >= 0."""
        exprs = [u0, u1, *w]
        self._add_expr_block(ROTATED, exprs, (len(exprs),), label)

    def add_quadratic_cost_epigraph(self, rows, weight: float, label: str = "quad") -> VariableRef:
        """Add ``weight * ||A x + c||^2`` to the objective via an epigraph variable.

        ``rows`` is a sequence of (terms, const) pairs describing A x + c.
        Returns the epigraph variable s with s >= ||A x + c||^2 enforced as
        the rotated cone 2 * s * (1/2) >= ||A x + c||^2.
        """
        if weight < 0:
            raise ValueError("weight must be >= 0")
        s = self.new_variable(f"{label}.epi")
        self.add_rotated(([(s, 1.0)], 0.0), ([], 0.5), rows, label=label)
        if weight != 0.0:
            self.add_objective_term(s, weight)
        return s

    def add_block_raw(
        self,
        kind: str,
        rows: np.ndarray,
        cols: np.ndarray,
        vals: np.ndarray,
        nrows: int,
        const: np.ndarray,
        dims: tuple[int, ...] = (),
        label: str = "",
    ) -> None:
        """Bulk interface for pre-assembled triplet blocks (columns are global indices)."""
        if kind not in (ZERO, NONNEG, SOC, ROTATED):
            raise ValueError(f"unknown block kind {kind!r}")
        if kind in (SOC, ROTATED) and sum(dims) != nrows:
            raise ValueError("cone dims must partition the block rows")
        if len(cols) and (np.min(cols) < 0 or np.max(cols) >= self._n):
            raise ValueError("column index out of range")
        self._blocks.append(
            _Block(
                kind,
                np.asarray(rows, dtype=np.int64),
                np.asarray(cols, dtype=np.int64),
                np.asarray(vals, dtype=np.float64),
                int(nrows),
                np.asarray(const, dtype=np.float64),
                tuple(dims),
                label,
            )
        )

    # -- lowering ------------------------------------------------------------

    def _block_matrix(self, block: _Block) -> sparse.csr_matrix:
        return sparse.csr_matrix(
            (block.vals, (block.rows, block.cols)), shape=(block.nrows, self._n)
        )

    @staticmethod
    def _rotation_matrix(dims: tuple[int, ...]) -> sparse.csr_matrix:
        """Block-diagonal map taking rotated-cone rows (u0, u1, w) to soc rows."""
        mats = []
        for q in dims:
            t = sparse.lil_matrix((q, q))
            t[0, 0] = 1.0
            t[0, 1] = 1.0
            t[1, 0] = 1.0
            t[1, 1] = -1.0
            for i in range(2, q):
                t[i, i] = math.sqrt(2.0)
            mats.append(t.tocsr())
        return sparse.block_diag(mats, format="csr")

    def standard_form(self):
        """Lower to ``min c'x  s.t.  A x + s = b, s in K`` with K ordered

        zero cone, nonnegative cone, then second-order cones (rotated cones
        are rotated into plain soc form here).
        """
        groups = {ZERO: [], NONNEG: [], SOC: []}
        for block in self._blocks:
            mat = self._block_matrix(block)
            const = block.const
            if block.kind == ROTATED:
                rot = self._rotation_matrix(block.dims)
                mat = rot @ mat
                const = rot @ const
                groups[SOC].append((mat, const, block.dims))
            elif block.kind == SOC:
                groups[SOC].append((mat, const, block.dims))
            else:
                groups[block.kind].append((mat, const, ()))

        mats, consts, cone_spec = [], [], []
        for kind in (ZERO, NONNEG, SOC):
            total = sum(m.shape[0] for m, _, _ in groups[kind])
            if total == 0:
                continue
            for m, c, dims in groups[kind]:
                mats.append(m)
                consts.append(c)
                if kind == SOC:
                    cone_spec.extend(("soc", q) for q in dims)
            if kind in (ZERO, NONNEG):
                cone_spec.append((kind, total))
        # keep cone_spec in lowering order: zero, nonneg, then socs
        cone_spec.sort(key=lambda kq: {"zero": 0, "nonneg": 1, "soc": 2}[kq[0]])

        if mats:
            big = sparse.vstack(mats, format="csc")
            const_vec = np.concatenate(consts)
        else:
            big = sparse.csc_matrix((0, self._n))
            const_vec = np.zeros(0)
        # expr in K with expr = M x + const  <=>  (-M) x preceding s = const
        return self.objective_vector(), big, const_vec, cone_spec

    # -- inspection ----------------------------------------------------------

    def check_solution(self, x: np.ndarray) -> ResidualReport:
        """Recompute all residuals of ``x`` directly from the stored blocks.

        Residuals are scaled: each row's violation is divided by the row's
        magnitude (sum of absolute term values) once that exceeds one, and
        cone violations are measured in the cone's natural (linear) geometry
        divided by the cone magnitude. Small-scale constraints therefore see
        absolute tolerances while objective-scale epigraph cones and long
        aggregation rows are judged relatively.
        """
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self._n,):
            raise ValueError(f"point has wrong dimension {x.shape}, expected ({self._n},)")
        max_eq = 0.0
        max_nn = 0.0
        max_soc = 0.0
        max_rot = 0.0
        flagged: list[tuple[str, float]] = []

        for bi, block in enumerate(self._blocks):
            mat = self._block_matrix(block)
            expr = mat @ x + block.const
            scale = np.maximum(1.0, abs(mat) @ np.abs(x) + np.abs(block.const))
            label = block.label or f"block{bi}"
            if block.kind == ZERO:
                viol = float(np.max(np.abs(expr) / scale)) if expr.size else 0.0
                max_eq = max(max_eq, viol)
            elif block.kind == NONNEG:
                viol = float(np.max(-expr / scale)) if expr.size else 0.0
                viol = max(viol, 0.0)
                max_nn = max(max_nn, viol)
            else:
                viol = 0.0
                offset = 0
                for q in block.dims:
                    u = expr[offset : offset + q]
                    if block.kind == SOC:
                        head = float(u[0])
                        tail = float(np.linalg.norm(u[1:]))
                    else:
                        # measure in the equivalent soc geometry so the
                        # violation is on the scale of the cone variables,
                        # not their squares
                        head = float(u[0] + u[1])
                        tail = math.hypot(float(u[0] - u[1]), math.sqrt(2.0) * float(np.linalg.norm(u[2:])))
                    # relative once the cone outgrows unit scale
                    viol = max(viol, (tail - head) / max(1.0, abs(head), tail))
                    offset += q
                viol = max(viol, 0.0)
                if block.kind == SOC:
                    max_soc = max(max_soc, viol)
                else:
                    max_rot = max(max_rot, viol)
            if viol > FEASIBILITY_TOL:
                flagged.append((label, viol))
        return ResidualReport(max_eq, max_nn, max_soc, max_rot, flagged)

    def dump(self) -> str:
        """Plain-text interchange listing for solver cross-checks."""
        out = io.StringIO()
        out.write(f"variables {self._n}\n")
        c = self.objective_vector()
        terms = " + ".join(
            f"{c[i]:.12g}*x{i}" for i in np.nonzero(c)[0]
        )
        out.write(f"minimize {terms or '0'}")
        if self.objective_constant:
            out.write(f" + {self.objective_constant:.12g}")
        out.write("\n")
        for bi, block in enumerate(self._blocks):
            mat = self._block_matrix(block).tocsr()
            out.write(f"block {bi} kind={block.kind} label={block.label or '-'}\n")
            for r in range(block.nrows):
                lo, hi = mat.indptr[r], mat.indptr[r + 1]
                parts = [
                    f"{mat.data[k]:.12g}*x{mat.indices[k]}" for k in range(lo, hi)
                ]
                if block.const[r] or not parts:
                    parts.append(f"{block.const[r]:.12g}")
                out.write(f"  row {r}: {' + '.join(parts)}\n")
            if block.dims:
                out.write(f"  dims {list(block.dims)}\n")
        return out.getvalue()


class ClarabelBackend:
    """Adapter around the embedded Clarabel interior-point solver.

    Reentrant: every call builds an independent solver instance, so distinct
    programs may be solved concurrently.
    """

    name = "clarabel"
    reentrant = True

    def __init__(self, **settings_overrides):
        self.settings_overrides = settings_overrides

    def solve(self, c, A, b, cone_spec, time_limit: Optional[float]):
        import clarabel

        n = c.shape[0]
        cones = []
        for kind, q in cone_spec:
            if kind == ZERO:
                cones.append(clarabel.ZeroConeT(q))
            elif kind == NONNEG:
                cones.append(clarabel.NonnegativeConeT(q))
            else:
                cones.append(clarabel.SecondOrderConeT(q))
        settings = clarabel.DefaultSettings()
        settings.verbose = False
        if time_limit is not None:
            settings.time_limit = float(time_limit)
        for key, value in self.settings_overrides.items():
            setattr(settings, key, value)
        P = sparse.csc_matrix((n, n))
        solver = clarabel.DefaultSolver(P, c, A, b, cones, settings)
        raw = solver.solve()
        status = str(raw.status)
        mapping = {
            "Solved": "optimal",
            "AlmostSolved": "optimal",
            "PrimalInfeasible": "infeasible",
            "AlmostPrimalInfeasible": "infeasible",
            "DualInfeasible": "unbounded",
            "AlmostDualInfeasible": "unbounded",
        }
        mapped = mapping.get(status, "numerical-failure")
        x = np.asarray(raw.x) if mapped == "optimal" else None
        info = {
            "backend": self.name,
            "backend_status": status,
            "iterations": raw.iterations,
            "solve_time_s": raw.solve_time,
            "objective_dual": float(raw.obj_val_dual),
        }
        if mapped == "numerical-failure" and status in (
            "NumericalError",
            "InsufficientProgress",
            "MaxIterations",
            "MaxTime",
        ):
            # last iterate, possibly still certifiable by the caller
            info["x_candidate"] = np.asarray(raw.x)
        return mapped, x, float(raw.obj_val), info


_DEFAULT_BACKEND = None


def default_backend() -> ClarabelBackend:
    global _DEFAULT_BACKEND
    if _DEFAULT_BACKEND is None:
        _DEFAULT_BACKEND = ClarabelBackend()
    return _DEFAULT_BACKEND


def solve(
    program: ConicProgram,
    backend=None,
    time_limit: Optional[float] = None,
) -> Solution:
    """Solve a program and return a verified ``Solution``.

    Optimal points are re-checked against the program's own residuals; a
    point that violates the feasibility tolerance is downgraded to
    ``numerical-failure`` rather than trusted. The solver time limit can be
    set through the ``GCSFLIGHT_SOLVER_TIME_LIMIT`` environment variable
    (seconds) when not passed explicitly.
    """
    backend = backend or default_backend()
    if time_limit is None:
        env = os.environ.get(TIME_LIMIT_ENV)
        time_limit = float(env) if env else None
    c, A, const_vec, cone_spec = program.standard_form()
    # expr = M x + const in K  ->  backend form  (-M) x + s = const, s in K
    status, x, backend_obj, info = backend.solve(c, (-A).tocsc(), const_vec, cone_spec, time_limit)
    if status == "numerical-failure" and info.get("x_candidate") is not None:
        # over-polished or stalled runs can still end on a certifiable point:
        # accept it only when it passes the independent residual check and the
        # primal-dual objectives agree to the objective tolerance (weak duality)
        cand = info.pop("x_candidate")
        report = program.check_solution(cand)
        dual = info.get("objective_dual")
        cand_obj = program.objective_value(cand)
        if (
            report.ok()
            and dual is not None
            and abs(cand_obj - (dual + program.objective_constant))
            <= OBJECTIVE_RTOL * max(1.0, abs(cand_obj))
        ):
            status, x = "optimal", cand
            backend_obj = cand_obj - program.objective_constant
            info["salvaged"] = True
    info.pop("x_candidate", None)
    if status != "optimal":
        return Solution(status=status, primal=None, objective=None, info=info)
    objective = program.objective_value(x)
    objective_dual = info.get("objective_dual")
    if objective_dual is not None:
        objective_dual += program.objective_constant
    backend_full = backend_obj + program.objective_constant
    scale = max(1.0, abs(objective))
    if abs(objective - backend_full) > OBJECTIVE_RTOL * scale:
        info["objective_mismatch"] = abs(objective - backend_full)
        return Solution(
            status="numerical-failure",
            primal=x,
            objective=objective,
            objective_dual=objective_dual,
            info=info,
        )
    report = program.check_solution(x)
    if not report.ok():
        info["residual_report"] = report
        return Solution(
            status="numerical-failure",
            primal=x,
            objective=objective,
            objective_dual=objective_dual,
            max_equality_residual=report.max_equality_residual,
            max_cone_violation=report.max_cone_violation,
            info=info,
        )
    return Solution(
        status="optimal",
        primal=x,
        objective=objective,
        objective_dual=objective_dual,
        max_equality_residual=report.max_equality_residual,
        max_cone_violation=report.max_cone_violation,
        info=info,
    )
