"""Semi-implicit vorticity/stream-function inpainting (NSE and NSV).

One step advances the vorticity on the masked pixels with

    (1 - a^2 L) w_new - nu dt Dg w_new = (1 - a^2 L) w + dt * adv(w, u)

where ``L`` is the 5-point Laplacian, ``Dg`` the conservative diffusion
with ``g`` frozen at the previous vorticity and ``adv`` the explicit
upwind term.  The intensity then follows from ``Laplacian(I) = w_new``
with the known pixels as Dirichlet data, and ``u = perp_grad(I)``.
Setting ``a = 0`` gives the Navier-Stokes scheme through the same code.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from typing import Iterator, Optional

import numpy as np
import scipy.sparse as sp

from .assembly import BoxStencil, FactorizedSPD, LinearSolveError, faces_from_arrays, solve_spd
from .diffusivity import DiffusivitySpec, g_eval, gradient_magnitude_array
from .grid import (ScalarField, UpwindMode, VectorField, aniso_divergence_array, face_averages,
                   gradient_arrays, laplacian_array, upwind_advect_array)
from .imageio import GrayImage, InitMode, MaskRegion, embed_region, extract_initial_state, to_bytes
from .metrics import RunReport, Status, flops_estimate, psnr, rmse

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverParams:
    nu: float = 2.0
    alpha: float = 0.0
    dt: float = 0.001
    tol: float = 1e-4
    max_iter: int = 10000
    diffusivity: DiffusivitySpec = field(default_factory=DiffusivitySpec)
    upwind_mode: UpwindMode = UpwindMode.PAPER_EXACT
    init_mode: InitMode = InitMode.MEAN_OF_BAND
    linear_tol: float = 1e-8
    linear_max_iter: int = 2000
    linear_solver: str = "cg"
    poisson_solver: str = "direct"
    poisson_every: int = 1
    #: relative residual above which a run is declared diverged
    blowup_residual: float = 1e6
    #: gray level magnitude above which a run is declared diverged
    blowup_gray: float = 1e6

    def __post_init__(self):
        object.__setattr__(self, "upwind_mode", UpwindMode(self.upwind_mode))
        object.__setattr__(self, "init_mode", InitMode(self.init_mode))
        if not self.nu > 0:
            raise ValueError("viscosity must be positive")
        if not self.alpha >= 0:
            raise ValueError("alpha must be non-negative")
        if not self.dt > 0:
            raise ValueError("time step must be positive")
        if not (self.tol > 0 and self.linear_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.max_iter < 1 or self.linear_max_iter < 1 or self.poisson_every < 1:
            raise ValueError("iteration counts must be positive")
        for name in (self.linear_solver, self.poisson_solver):
            if name not in ("direct", "cg", "dense"):
                raise ValueError(f"unknown linear solver {name!r}")

    def as_dict(self) -> dict:
        return {
            "nu": self.nu, "alpha": self.alpha, "dt": self.dt, "tol": self.tol,
            "max_iter": self.max_iter, "g": self.diffusivity.kind.value, "k": self.diffusivity.k,
            "upwind": self.upwind_mode.value, "init": self.init_mode.value,
            "linear_solver": self.linear_solver, "poisson_solver": self.poisson_solver,
            "linear_tol": self.linear_tol,
            "poisson_every": self.poisson_every,
        }


@dataclass
class SolveState:
    I: ScalarField
    omega: ScalarField
    u: VectorField
    iteration: int = 0
    residual: float = float("nan")


# ---------------------------------------------------------------------------
# Poisson coupling
# ---------------------------------------------------------------------------

class PoissonSolver:
    """Solves ``Laplacian(I) = w`` on the mask with known pixels as data."""

    def __init__(self, region: MaskRegion, method: str = "direct", tol: float = 1e-8, maxiter: int = 2000,
                 stencil: Optional[BoxStencil] = None):
        self.region = region
        self.method = method
        self.tol = tol
        self.maxiter = maxiter
        stencil = stencil or BoxStencil(region.interior)
        # -Laplacian restricted to the mask is SPD
        self.matrix, self.known_block = stencil.assemble(0.0, 1.0)
        self._lu = FactorizedSPD(self.matrix) if method == "direct" else None

    def solve(self, omega: np.ndarray, i0: Optional[np.ndarray] = None, guess: Optional[np.ndarray] = None) -> np.ndarray:
        reg = self.region
        i0 = reg.i0 if i0 is None else i0
        b = -omega[reg.interior] - self.known_block @ i0[reg.known]
        if self._lu is not None:
            x = self._lu.solve(b)
        else:
            x0 = None if guess is None else guess[reg.interior]
            x = solve_spd(self.matrix, b, x0, self.method, self.tol, self.maxiter)
        out = np.where(reg.interior, 0.0, i0)
        out[reg.interior] = x
        return out


def solve_poisson(omega: ScalarField, region: MaskRegion, i0=None, *, method: str = "direct",
                  tol: float = 1e-8, maxiter: int = 2000) -> ScalarField:
    """Intensity on the region box with ``Laplacian(I) = omega`` on the mask."""
    i0_arr = None if i0 is None else np.asarray(getattr(i0, "values", i0), dtype=float)
    out = PoissonSolver(region, method, tol, maxiter).solve(omega.values, i0_arr)
    return ScalarField(omega.grid, out)


# ---------------------------------------------------------------------------
# step operator
# ---------------------------------------------------------------------------

@dataclass
class StepOperator:
    """``(1 - a^2 L) - nu dt Dg`` restricted to the mask.

    ``matrix`` acts on the unknowns, ``known_block`` on the known box
    nodes (those terms belong on the right-hand side).
    """

    matrix: sp.csr_matrix
    known_block: sp.csr_matrix
    interior: np.ndarray
    alpha: float
    nu_dt: float
    g: np.ndarray

    def matvec(self, x: np.ndarray) -> np.ndarray:
        """Matrix-free application to unknowns (known nodes set to zero)."""
        w = np.zeros(self.interior.shape)
        w[self.interior] = x
        out = w - self.alpha**2 * laplacian_array(w) - self.nu_dt * aniso_divergence_array(w, self.g)
        return out[self.interior]


def build_step_operator(params: SolverParams, g_field, region: MaskRegion,
                        stencil: Optional[BoxStencil] = None) -> StepOperator:
    g = np.asarray(getattr(g_field, "values", g_field), dtype=float)
    if np.any(g <= 0):
        raise ValueError("diffusivity must be positive on every face")
    stencil = stencil or BoxStencil(region.interior)
    nu_dt = params.nu * params.dt
    # both implicit terms are face-weighted Laplacians; with alpha = 0 the
    # weights reduce exactly to nu dt g
    weights = params.alpha**2 + nu_dt * faces_from_arrays(*face_averages(g))
    m_uu, m_uk = stencil.assemble(1.0, weights)
    return StepOperator(m_uu, m_uk, region.interior, params.alpha, nu_dt, g)


def step_rhs(omega: np.ndarray, u1: np.ndarray, u2: np.ndarray, params: SolverParams,
             op: StepOperator) -> np.ndarray:
    interior = op.interior
    adv = upwind_advect_array(omega, u1, u2, mode=params.upwind_mode)
    explicit = omega - params.alpha**2 * laplacian_array(omega) + params.dt * adv
    return explicit[interior] - op.known_block @ omega[~interior]


class _Workspace:
    """Per-region objects reused across time steps."""

    def __init__(self, region: MaskRegion, params: SolverParams):
        self.stencil = BoxStencil(region.interior)
        self.poisson = PoissonSolver(region, params.poisson_solver, params.linear_tol, params.linear_max_iter,
                                     stencil=self.stencil)


def initial_state(host: GrayImage, region: MaskRegion, params: SolverParams) -> SolveState:
    I, omega = extract_initial_state(host, region, params.init_mode)
    fx, fy = gradient_arrays(I.values)
    return SolveState(I, omega, VectorField(I.grid, -fy, fx), 0, float("nan"))


def _residual(new: np.ndarray, old: np.ndarray) -> float:
    return float(np.linalg.norm(new - old) / max(np.linalg.norm(old), 1.0))


def step(state: SolveState, params: SolverParams, region: MaskRegion,
         workspace: Optional[_Workspace] = None) -> SolveState:
    """Advance one time step; see the module docstring for the scheme."""
    ws = workspace or _Workspace(region, params)
    interior = region.interior
    w = state.omega.values
    g = g_eval(params.diffusivity, gradient_magnitude_array(w))
    op = build_step_operator(params, g, region, ws.stencil)
    rhs = step_rhs(w, state.u.u1, state.u.u2, params, op)
    x = solve_spd(op.matrix, rhs, w[interior], params.linear_solver, params.linear_tol, params.linear_max_iter)
    w_new = w.copy()
    w_new[interior] = x

    it = state.iteration + 1
    if it % params.poisson_every == 0:
        I_new = ws.poisson.solve(w_new, guess=state.I.values)
        fx, fy = gradient_arrays(I_new)
        u = VectorField(state.u.grid, -fy, fx)
    else:
        I_new, u = state.I.values, state.u
    res = _residual(w_new[interior], w[interior])
    grid = state.omega.grid
    return SolveState(ScalarField(grid, I_new), ScalarField(grid, w_new), u, it, res)


def _blown_up(state: SolveState, params: SolverParams, interior: np.ndarray) -> bool:
    if not (state.omega.is_finite() and state.I.is_finite() and np.isfinite(state.residual)):
        return True
    if state.residual > params.blowup_residual:
        return True
    return bool(np.max(np.abs(state.I.values[interior])) > params.blowup_gray)


def iterate(host: GrayImage, region: MaskRegion, params: SolverParams) -> Iterator[SolveState]:
    """Yield the initial state and then every subsequent iterate (unbounded)."""
    state = initial_state(host, region, params)
    ws = _Workspace(region, params)
    yield state
    while True:
        state = step(state, params, region, ws)
        yield state


def run_to_steady(host: GrayImage, region: MaskRegion, params: SolverParams,
                  reference: Optional[GrayImage] = None, psnr_scope: str = "image"):
    """Iterate until the residual drops below ``tol``, blows up, or hits ``max_iter``.

    Returns the host with the mask filled in and a :class:`RunReport`.
    Divergence is a status, not an exception.
    """
    t0 = time.perf_counter()
    history = []
    status = Status.MAX_ITER
    states = iterate(host, region, params)
    state = next(states)
    last_good = state
    while state.iteration < params.max_iter:
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                state = next(states)
        except LinearSolveError as exc:
            log.info("linear solve failed at iteration %d: %s", state.iteration + 1, exc)
            status = Status.DIVERGED
            break
        history.append(state.residual)
        if _blown_up(state, params, region.interior):
            status = Status.DIVERGED
            break
        last_good = state
        if state.residual < params.tol:
            status = Status.CONVERGED
            break
    iterations = len(history)
    final = last_good if status is Status.DIVERGED else state
    out = embed_region(host, region, final.I)
    extent = region.interior_extent
    report = RunReport(
        status=status,
        iterations=iterations,
        residual_history=history,
        flops_per_pixel=flops_estimate(extent, max(iterations, 1)),
        wall_time_s=time.perf_counter() - t0,
        region_extent=extent,
        image_shape=host.pixels.shape,
        params=params.as_dict(),
    )
    if reference is not None:
        report.rmse, report.psnr_db = _quality(reference, out, region, psnr_scope)
    return out, report


def _quality(reference: GrayImage, out: GrayImage, region: MaskRegion, scope: str):
    """RMSE/PSNR of the 8-bit image that would be written to disk."""
    out = GrayImage(to_bytes(out.pixels).astype(float))
    if scope == "region":
        ref_box = reference.pixels[region.slices][region.interior]
        out_box = out.pixels[region.slices][region.interior]
        return rmse(ref_box, out_box), psnr(ref_box, out_box)
    if scope != "image":
        raise ValueError(f"unknown PSNR scope {scope!r}")
    return rmse(reference, out), psnr(reference, out)


def nse_params(**kwargs) -> SolverParams:
    """Parameters for the plain Navier-Stokes scheme (``alpha = 0``)."""
    return SolverParams(**{**kwargs, "alpha": 0.0})


def with_alpha(params: SolverParams, alpha: float) -> SolverParams:
    return replace(params, alpha=alpha)
