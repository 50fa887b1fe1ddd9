"""Conic backend: maximizes a surrogate bundle over the feasible lift set.

The feasible set is {Phi hermitian PSD, diag(Phi) <= 1}, the semidefinite
relaxation of the set of rank-one lifts of unit-ball RIS vectors.  Each
bundle piece becomes a second-order cone epigraph or hypograph written
out explicitly, which keeps the compiled problem parameter-affine; one
parameterized template per bundle shape is cached and refilled, so
repeated solves skip canonicalization almost entirely.

Trace forms are expressed as elementwise products with the real and
imaginary parts of Phi.  For a complex matrix A and hermitian Phi:

    Re tr(A Phi) = sum(A^T.re * Phi.re) + sum(-A^T.im * Phi.im)
    Im tr(A Phi) = sum(A^T.im * Phi.re) + sum(A^T.re * Phi.im)

An explicit real embedding of hermitian matrices is also provided for
diagnostics and round-trip checks; the solver itself works on the native
hermitian variable.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import cvxpy as cp
import numpy as np

from riswsr.surrogate import SurrogateBundle

__all__ = [
    "ConicSolveError",
    "SolveResult",
    "SdrSolver",
    "embed_hermitian",
    "extract_hermitian",
]


class ConicSolveError(RuntimeError):
    """No configured solver returned a usable solution."""


def embed_hermitian(a: np.ndarray) -> np.ndarray:
    """Real symmetric embedding [[X, -Y], [Y, X]] of a hermitian matrix.

    The embedding doubles every eigenvalue's multiplicity and preserves
    positive semidefiniteness, so PSD checks can be run on real matrices.
    """
    a = np.asarray(a, dtype=complex)
    x, y = a.real, a.imag
    return np.block([[x, -y], [y, x]])


def extract_hermitian(b: np.ndarray) -> np.ndarray:
    """Inverse of `embed_hermitian`, averaging the redundant blocks."""
    b = np.asarray(b, dtype=float)
    n = b.shape[0] // 2
    x = 0.5 * (b[:n, :n] + b[n:, n:])
    y = 0.5 * (b[n:, :n] - b[:n, n:])
    return x + 1j * y


@dataclass
class SolveResult:
    Phi: np.ndarray
    objective: float         # bundle value at Phi, constant included
    solver_objective: float  # raw conic objective (no constant)
    status: str
    solver_name: str
    solve_time: float        # backend-reported seconds, wall time if absent
    wall_time: float
    consistency_gap: float   # |bundle.evaluate(Phi) - objective| (relative)


def _trace_params(mat: np.ndarray):
    """Parameter values for Re tr(mat Phi) in the elementwise convention."""
    t = mat.T
    return np.ascontiguousarray(t.real), np.ascontiguousarray(-t.imag)


def _trace_row_real(mat: np.ndarray):
    """vec-row coefficients of Re tr(mat Phi) against [vec Phi.re, vec Phi.im]."""
    t = mat.T
    return t.real.ravel(order="F"), (-t.imag).ravel(order="F")


def _trace_row_imag(mat: np.ndarray):
    """vec-row coefficients of Im tr(mat Phi)."""
    t = mat.T
    return t.imag.ravel(order="F"), t.real.ravel(order="F")


class _Template:
    """Compiled problem for one bundle shape, with refillable parameters."""

    def __init__(self, structure):
        L, n_sqrt, quad_shapes, n_qol = structure
        self.structure = structure
        self.Phi = cp.Variable((L, L), hermitian=True, name="Phi")
        phi_re, phi_im = cp.real(self.Phi), cp.imag(self.Phi)
        vec_re = cp.vec(phi_re, order="F")
        vec_im = cp.vec(phi_im, order="F")
        cons = [self.Phi >> 0, cp.diag(phi_re) <= 1.0]

        self.lin_re = cp.Parameter((L, L))
        self.lin_im = cp.Parameter((L, L))
        objective = cp.sum(cp.multiply(self.lin_re, phi_re)) + cp.sum(
            cp.multiply(self.lin_im, phi_im)
        )

        self.sqrt_args = []
        self.sqrt_coeffs = []
        for _ in range(n_sqrt):
            arg_re = cp.Parameter((L, L))
            arg_im = cp.Parameter((L, L))
            coeff = cp.Parameter(nonneg=True)
            arg = cp.sum(cp.multiply(arg_re, phi_re)) + cp.sum(cp.multiply(arg_im, phi_im))
            s = cp.Variable(nonneg=True)
            cons.append(
                cp.SOC(
                    arg + 1.0,
                    cp.hstack(
                        [
                            cp.reshape(2.0 * s, (1,), order="F"),
                            cp.reshape(arg - 1.0, (1,), order="F"),
                        ]
                    ),
                )
            )
            objective += coeff * s
            self.sqrt_args.append((arg_re, arg_im))
            self.sqrt_coeffs.append(coeff)

        self.quad_rows = []
        self.quad_frobs = []
        self.quad_coeffs = []
        for n_real, n_cplx, frob_rows in quad_shapes:
            n_scalar = n_real + 2 * n_cplx
            rows_re = cp.Parameter((n_scalar, L * L))
            rows_im = cp.Parameter((n_scalar, L * L))
            scalar = rows_re @ vec_re + rows_im @ vec_im
            pieces = [scalar]
            frob = None
            if frob_rows:
                fr = cp.Parameter((frob_rows, L))
                fi = cp.Parameter((frob_rows, L))
                rp_re = fr @ phi_re - fi @ phi_im
                rp_im = fr @ phi_im + fi @ phi_re
                pieces.extend([cp.vec(rp_re, order="F"), cp.vec(rp_im, order="F")])
                frob = (fr, fi)
            z = cp.hstack(pieces)
            t = cp.Variable(nonneg=True)
            cons.append(
                cp.SOC(t + 1.0, cp.hstack([2.0 * z, cp.reshape(t - 1.0, (1,), order="F")]))
            )
            coeff = cp.Parameter(nonneg=True)
            objective -= coeff * t
            self.quad_rows.append((rows_re, rows_im))
            self.quad_frobs.append(frob)
            self.quad_coeffs.append(coeff)

        self.qol_parts = []
        self.qol_coeffs = []
        for _ in range(n_qol):
            num_re = cp.Parameter((L, L))
            num_im = cp.Parameter((L, L))
            den_re = cp.Parameter((L, L))
            den_im = cp.Parameter((L, L))
            num_const = cp.Parameter()
            den_const = cp.Parameter()
            floor = cp.Parameter()
            coeff = cp.Parameter(nonneg=True)
            num = cp.sum(cp.multiply(num_re, phi_re)) + cp.sum(cp.multiply(num_im, phi_im))
            den = den_const + cp.sum(cp.multiply(den_re, phi_re)) + cp.sum(
                cp.multiply(den_im, phi_im)
            )
            t = cp.Variable(nonneg=True)
            cons.append(den >= floor)
            cons.append(
                cp.SOC(
                    t + den,
                    cp.hstack(
                        [
                            cp.reshape(2.0 * num_const, (1,), order="F"),
                            cp.reshape(2.0 * num, (1,), order="F"),
                            cp.reshape(t - den, (1,), order="F"),
                        ]
                    ),
                )
            )
            objective -= coeff * t
            self.qol_parts.append((num_re, num_im, den_re, den_im, num_const, den_const, floor))
            self.qol_coeffs.append(coeff)

        self.problem = cp.Problem(cp.Maximize(objective), cons)

    def fill(self, bundle: SurrogateBundle):
        lr, li = _trace_params(bundle.linear)
        self.lin_re.value = lr
        self.lin_im.value = li
        for term, (arg_re, arg_im), coeff in zip(
            bundle.sqrt_terms, self.sqrt_args, self.sqrt_coeffs
        ):
            vr, vi = _trace_params(term.matrix)
            arg_re.value = vr
            arg_im.value = vi
            coeff.value = term.coeff
        for term, (rows_re, rows_im), frob, coeff in zip(
            bundle.quad_terms, self.quad_rows, self.quad_frobs, self.quad_coeffs
        ):
            rr, ri = [], []
            for mat in term.real_trace_mats:
                a, b = _trace_row_real(mat)
                rr.append(a)
                ri.append(b)
            for mat in term.cplx_trace_mats:
                a, b = _trace_row_real(mat)
                rr.append(a)
                ri.append(b)
                a, b = _trace_row_imag(mat)
                rr.append(a)
                ri.append(b)
            rows_re.value = np.ascontiguousarray(np.vstack(rr))
            rows_im.value = np.ascontiguousarray(np.vstack(ri))
            if frob is not None:
                fr, fi = frob
                fr.value = np.ascontiguousarray(term.frob_factor.real)
                fi.value = np.ascontiguousarray(term.frob_factor.imag)
            coeff.value = term.coeff
        for term, parts, coeff in zip(bundle.qol_terms, self.qol_parts, self.qol_coeffs):
            num_re, num_im, den_re, den_im, num_const, den_const, floor = parts
            vr, vi = _trace_params(term.num_matrix)
            num_re.value = vr
            num_im.value = vi
            vr, vi = _trace_params(term.den_matrix)
            den_re.value = vr
            den_im.value = vi
            num_const.value = term.num_const
            den_const.value = term.den_const
            floor.value = term.den_floor
            coeff.value = term.coeff


class SdrSolver:
    """Solves surrogate bundles over the relaxed lift set with template reuse."""

    def __init__(self, solver: str = "CLARABEL", fallback: str = "SCS", verbose: bool = False):
        self.solver = solver
        self.fallback = fallback
        self.verbose = verbose
        self._templates = {}

    def _template(self, structure) -> _Template:
        tpl = self._templates.get(structure)
        if tpl is None:
            tpl = _Template(structure)
            self._templates[structure] = tpl
        return tpl

    def _run(self, problem: cp.Problem, solver: str) -> str:
        kwargs = {}
        if solver == "SCS":
            kwargs = {"eps": 1e-7, "max_iters": 50_000}
        problem.solve(solver=solver, verbose=self.verbose, **kwargs)
        return problem.status

    def solve(self, bundle: SurrogateBundle) -> SolveResult:
        tpl = self._template(bundle.structure())
        tpl.fill(bundle)
        t0 = time.perf_counter()
        used = self.solver
        try:
            status = self._run(tpl.problem, self.solver)
        except cp.error.SolverError:
            status = "solver_error"
        if status not in ("optimal", "optimal_inaccurate"):
            used = self.fallback
            try:
                status = self._run(tpl.problem, self.fallback)
            except cp.error.SolverError as exc:
                raise ConicSolveError(f"all solvers failed: {exc}") from exc
            if status not in ("optimal", "optimal_inaccurate"):
                raise ConicSolveError(f"fallback solver ended with status {status}")
        wall = time.perf_counter() - t0

        stats = tpl.problem.solver_stats
        solve_time = getattr(stats, "solve_time", None) or wall
        raw = np.asarray(tpl.Phi.value)
        Phi = self._project_feasible(raw)
        solver_obj = float(tpl.problem.value)
        total = solver_obj + bundle.constant
        check = bundle.evaluate(Phi)
        gap = abs(check - total) / max(1.0, abs(total))
        return SolveResult(
            Phi=Phi,
            objective=total,
            solver_objective=solver_obj,
            status=status,
            solver_name=used,
            solve_time=float(solve_time),
            wall_time=wall,
            consistency_gap=gap,
        )

    @staticmethod
    def _project_feasible(raw: np.ndarray) -> np.ndarray:
        """Clean tiny solver noise: hermitize, clip negative spectrum, cap diagonal."""
        sym = 0.5 * (raw + raw.conj().T)
        evals, evecs = np.linalg.eigh(sym)
        evals = np.clip(evals, 0.0, None)
        out = (evecs * evals) @ evecs.conj().T
        peak = float(np.max(out.real.diagonal(), initial=0.0))
        if peak > 1.0:
            out = out / peak
        return 0.5 * (out + out.conj().T)
