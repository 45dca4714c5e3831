"""Slow/fast decomposition, conductivity, currents, and the Fourier law.

The two conserved directions omega^-1 and omega^-2 span the slow subspace E.
This module provides the weighted-orthogonal projections onto E and its
complement, the diffusion matrix obtained from deflated inverse applications
of the linearized collision operator, conserved-field observables and their
currents, the per-mode Fourier-law residual, and the state-dependent
diffusivity obtained by inverting the collision Jacobian at a shifted
background.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from .collision import FourierCollision
from .linearized import OperatorMatrix, SpectralSummary, spectrum_L

TWO_PI = 2.0 * np.pi


# ----------------------------------------------------------------------
# slow subspace


@dataclass(frozen=True)
class SlowState:
    """Coefficients (t1, t2) of a slow field t1*omega^-1 + t2*omega^-2.

    The coefficients may be scalars or arrays (per space point or per
    spatial mode); ``as_field`` broadcasts them against the node axis.
    """

    t1: object
    t2: object

    def as_field(self, disp):
        t1 = np.asarray(self.t1)[..., None]
        t2 = np.asarray(self.t2)[..., None]
        return t1 * disp.winv + t2 * disp.winv2

    def norms(self):
        return float(np.max(np.abs(self.t1))), float(np.max(np.abs(self.t2)))


class SlowBasis:
    """The slow pair {omega^-1, omega^-2}, its Gram matrix, and projections.

    ``gram[a, b] = inner_H(omega^-(a+1), omega^-(b+1))``; ``u`` holds the
    Gram-Schmidt orthonormal pair as columns, and ``coeff_map`` the 2x2
    matrix S with u[:, j] = e1*S[0, j] + e2*S[1, j].
    """

    def __init__(self, disp):
        self.disp = disp
        self.inner = disp.weighted_inner()
        self.e = np.stack([disp.winv, disp.winv2], axis=1)
        g11 = float(self.inner.inner(self.e[:, 0], self.e[:, 0]))
        g12 = float(self.inner.inner(self.e[:, 0], self.e[:, 1]))
        g22 = float(self.inner.inner(self.e[:, 1], self.e[:, 1]))
        self.gram = np.array([[g11, g12], [g12, g22]])
        if np.linalg.eigvalsh(self.gram).min() <= 0.0:
            raise ValueError("slow-basis Gram matrix is not positive definite")
        # Cholesky of G = R^T R gives S = R^{-1} with S^T G S = I.
        self.coeff_map = np.linalg.inv(np.linalg.cholesky(self.gram).T)
        self.u = self.e @ self.coeff_map

    def project_P(self, f):
        """Weighted-orthogonal projection onto the slow pair (batched)."""
        coef = np.stack([self.inner.inner(self.u[:, j], f) for j in (0, 1)], axis=-1)
        return coef @ self.u.T

    def project_Q(self, f):
        """Projection onto the complement of the slow pair."""
        return np.asarray(f) - self.project_P(f)

    def state_from_field(self, w):
        """Coefficients of the slow part of ``w`` (solves the 2x2 Gram system)."""
        b1 = self.inner.inner(self.e[:, 0], w)
        b2 = self.inner.inner(self.e[:, 1], w)
        det = self.gram[0, 0] * self.gram[1, 1] - self.gram[0, 1] ** 2
        t1 = (self.gram[1, 1] * b1 - self.gram[0, 1] * b2) / det
        t2 = (self.gram[0, 0] * b2 - self.gram[0, 1] * b1) / det
        return SlowState(t1, t2)


# ----------------------------------------------------------------------
# observables and currents


def enforce_parity(grid, f, parity):
    """Project onto the subspace with the given per-axis reflection parity.

    ``parity`` holds +1 (even) or -1 (odd) per axis.  The result satisfies
    f(R_j k) = parity[j] * f(k) exactly in floating point, which lets
    downstream quadratures cancel odd integrands exactly.
    """
    f = np.asarray(f)
    for axis, s in enumerate(parity):
        perm = grid.axis_reflection(axis)
        f = 0.5 * (f + s * f[..., perm])
    return f


def observables(disp, w):
    """Conserved-field coordinates: T_a = inner_H(omega^-a, w), a = 1, 2."""
    ip = disp.weighted_inner()
    return ip.inner(disp.winv, w), ip.inner(disp.winv2, w)


def currents(disp, w):
    """Currents of the conserved fields.

    j_a[..., i] = -(2 pi)^-1 inner_H(omega^-a, d_i omega * w).  For fields in
    mode representation the same pairing applies (the gradient becomes the
    i*p factor supplied by the caller's transport term).  The quadrature for
    component i is averaged over the reflection in axis i: the integrand
    carries the antisymmetric factor d_i omega, so contributions that vanish
    by parity cancel pairwise instead of through the global sum (exactly, up
    to the self-paired -pi hyperplane where sin(-pi) leaves ~1e-16).
    """
    grid = disp.grid
    w = np.asarray(w)
    out = []
    for a in (1, 2):
        ea = disp.winv if a == 1 else disp.winv2
        comps = []
        for i in range(grid.d):
            s = ea * disp.grad[:, i] * w * disp.w_sq
            perm = grid.axis_reflection(i)
            comps.append(grid.integrate(0.5 * (s + s[..., perm])))
        out.append(np.stack(comps, axis=-1))
    return -out[0] / TWO_PI, -out[1] / TWO_PI


# ----------------------------------------------------------------------
# deflated inverse of the linearized operator


class DeflatedInverse:
    """Inverse of the linearized operator on the complement of its low pair.

    Works in the omega-similarity coordinates where the operator is
    symmetric: the two lowest eigenvectors (the conserved directions) are
    projected out of the right-hand side, the rest is inverted by the
    eigendecomposition, and the result is mapped back to node fields.
    """

    def __init__(self, L, disp, summary=None, drop=2):
        if isinstance(L, OperatorMatrix):
            self.matrix = L.matrix
        else:
            self.matrix = np.asarray(L)
        self.disp = disp
        if summary is None:
            summary = spectrum_L(OperatorMatrix(self.matrix, "H-self-adjoint"), disp)
        self.summary = summary
        self.drop = drop
        self._V_low = summary.eigenvectors_sym[:, :drop]
        self._V_rest = summary.eigenvectors_sym[:, drop:]
        self._lam_rest = summary.eigenvalues[drop:]

    def low_mode_overlap(self, g):
        """Relative overlap of ``g`` with the dropped low modes."""
        gs = np.asarray(g) * self.disp.w
        num = np.linalg.norm(gs @ self._V_low, axis=-1)
        den = np.linalg.norm(gs, axis=-1)
        return num / np.where(den == 0.0, 1.0, den)

    def apply(self, g, parity=None):
        """Solve L x = g on the deflated complement (batched over leading axes).

        When the right-hand side has definite per-axis reflection parity,
        pass it as ``parity``: the operator commutes with the reflections, so
        the solution shares the parity, and enforcing it removes the parity
        leakage that roundoff amplifies through the near-null directions.
        """
        gs = np.asarray(g) * self.disp.w
        coef = (gs @ self._V_rest) / self._lam_rest
        x = (coef @ self._V_rest.T) / self.disp.w
        if parity is not None:
            x = enforce_parity(self.disp.grid, x, parity)
        return x

    def residual(self, x, g):
        """Weighted relative residual of the solve."""
        ip = self.disp.weighted_inner()
        return ip.norm(self.matrix @ x - np.asarray(g)) / ip.norm(g)


# ----------------------------------------------------------------------
# conductivity


@dataclass(frozen=True)
class ConductivityMatrix:
    """The diffusion matrix of the slow pair, in two bases.

    ``kappa_op`` is the matrix of the diffusion operator on the slow
    subspace in the orthonormal basis; ``kappa_ab`` the same object paired
    against {omega^-1, omega^-2}.  ``mu`` are the eigenvalues of
    ``kappa_op``; ``response_fields`` caches the deflated solves (one
    column per slow direction) for reuse by the Fourier-law check.
    """

    kappa_op: np.ndarray
    kappa_ab: np.ndarray
    mu: np.ndarray
    axis: int
    solve_residual: float
    cross_direction_sup: float
    basis: SlowBasis = field(repr=False)
    response_fields: np.ndarray = field(repr=False)

    def convert_ab_to_op(self):
        """Gram round-trip: rebuild kappa_op from kappa_ab."""
        S = self.basis.coeff_map
        return S.T @ self.kappa_ab @ S


def compute_kappa(L, disp, summary=None, axis=0, rhs_tol=1e-8):
    """Diffusion matrix by deflated solves against the gradient-weighted pair.

    For each slow direction e, forms g = d_axis omega * e (odd, hence in the
    complement), solves the linearized operator on the deflated complement,
    and pairs back: kappa_ab[a, b] = (2 pi)^-2 inner_H(g_a, x_b).  Raises if
    the right-hand side leaks into the dropped modes or the solve residual
    exceeds ``rhs_tol``.
    """
    basis = SlowBasis(disp)
    solver = DeflatedInverse(L, disp, summary)
    dwa = disp.grad[:, axis]
    g = dwa[:, None] * basis.e
    overlap = solver.low_mode_overlap(g.T)
    if overlap.max() > rhs_tol:
        raise RuntimeError(
            f"gradient-weighted slow direction overlaps the conserved modes "
            f"by {overlap.max():.2e} (tolerance {rhs_tol:.0e})"
        )
    parity = tuple(-1 if j == axis else +1 for j in range(disp.grid.d))
    X = np.stack([solver.apply(g[:, b], parity=parity) for b in (0, 1)], axis=1)
    resid = max(solver.residual(X[:, b], g[:, b]) for b in (0, 1))
    if resid > rhs_tol:
        raise RuntimeError(
            f"deflated solve residual {resid:.2e} exceeds {rhs_tol:.0e}"
        )
    ip = basis.inner
    kappa_ab = np.array(
        [[ip.inner(g[:, a], X[:, b]).real for b in (0, 1)] for a in (0, 1)]
    ) / TWO_PI**2
    S = basis.coeff_map
    kappa_op = S.T @ kappa_ab @ S
    kappa_op = 0.5 * (kappa_op + kappa_op.T)
    mu = np.linalg.eigvalsh(kappa_op)
    cross = 0.0
    for j in range(disp.grid.d):
        if j == axis:
            continue
        dwj = disp.grad[:, j]
        for a in (0, 1):
            for b in (0, 1):
                cross = max(
                    cross, abs(float(ip.inner(dwj * basis.e[:, a], X[:, b]).real))
                )
    cross /= TWO_PI**2
    return ConductivityMatrix(
        kappa_op=kappa_op,
        kappa_ab=kappa_ab,
        mu=mu,
        axis=axis,
        solve_residual=float(resid),
        cross_direction_sup=float(cross),
        basis=basis,
        response_fields=X,
    )


# ----------------------------------------------------------------------
# slaved fast state and the Fourier law


def slaved_state(solver, state, p):
    """Fast component enslaved to a slow mode: -(i/2pi) L^-1 (p . grad omega) T.

    Solved axis by axis so each piece of the right-hand side has definite
    reflection parity (odd in the gradient axis, even in the rest), which the
    solver then enforces exactly.
    """
    disp = solver.disp
    d = disp.grid.d
    p = np.atleast_1d(np.asarray(p, dtype=float))
    Tfield = state.as_field(disp)
    x = np.zeros(np.shape(Tfield), dtype=complex)
    for i in range(d):
        if p[i] == 0.0:
            continue
        parity = tuple(-1 if j == i else +1 for j in range(d))
        x = x + p[i] * solver.apply(disp.grad[:, i] * Tfield, parity=parity)
    return -1j / TWO_PI * x


@dataclass(frozen=True)
class FourierLawReport:
    residual: float
    bound: float
    currents: np.ndarray
    predicted: np.ndarray

    @property
    def passed(self):
        return self.residual <= self.bound


def fourier_law_check(kappa, state, p, v, solver=None, tol_scale=1e-6,
                      isotropy_tol=1e-8):
    """Residual of the currents of ``v`` against the conductivity prediction.

    ``v`` must be the slaved fast state for the slow coefficients in
    ``state`` at spatial mode ``p``; the prediction is
    j_a = sum_b kappa_ab[a, b] * (i p_i) * t_b, checked componentwise against
    the bound ``tol_scale * |p| * ||T||``.

    When ``solver`` is given, the prediction for component i is evaluated
    with the response solves of gradient axis i.  The per-axis matrices agree
    with ``kappa.kappa_ab`` up to the isotropy defect (checked against
    ``isotropy_tol``); re-pairing per axis keeps the comparison at the
    roundoff floor instead of amplifying that defect through the bound.
    """
    disp = kappa.basis.disp
    d = disp.grid.d
    p = np.atleast_1d(np.asarray(p, dtype=float))
    j1, j2 = currents(disp, v)
    j = np.stack([j1, j2], axis=0)
    tvec = np.array([state.t1, state.t2])
    ip = kappa.basis.inner
    e = kappa.basis.e
    kappa_scale = float(np.max(np.abs(kappa.kappa_ab)))
    predicted = np.zeros(j.shape, dtype=complex)
    for i in range(d):
        if p[i] == 0.0:
            continue
        if solver is None or i == kappa.axis:
            K_i = kappa.kappa_ab
        else:
            parity = tuple(-1 if jax == i else +1 for jax in range(d))
            g = disp.grad[:, i][:, None] * e
            X = np.stack(
                [solver.apply(g[:, b], parity=parity) for b in (0, 1)], axis=1
            )
            K_i = np.array(
                [[ip.inner(g[:, a], X[:, b]).real for b in (0, 1)]
                 for a in (0, 1)]
            ) / TWO_PI**2
            defect = float(np.max(np.abs(K_i - kappa.kappa_ab))) / kappa_scale
            if defect > isotropy_tol:
                raise RuntimeError(
                    f"axis-{i} conductivity deviates from the reported matrix "
                    f"by {defect:.2e} relative (tolerance {isotropy_tol:.0e})"
                )
        predicted[:, i] = 1j * p[i] * (K_i @ tvec)
    residual = float(np.max(np.abs(j - predicted)))
    tnorm = kappa.basis.inner.norm(state.as_field(disp))
    bound = tol_scale * float(np.linalg.norm(p)) * tnorm
    return FourierLawReport(residual, bound, j, predicted)


# ----------------------------------------------------------------------
# collision response at a shifted background


class CollisionResponse:
    """Solves (L - m(T, .)) x = rhs on the deflated complement.

    ``m(T, v)`` is the background-shift part of the collision Jacobian at
    W = omega^-1 + T, isolated by central finite differencing of the
    collision operator at the shifted and unshifted backgrounds (the two
    difference quotients cancel exactly at T = 0, so the zero-shift solve
    reduces to the assembled linearized matrix; the four-point rule makes
    each quotient the exact Jacobian action, see ``_jacobian_fd``).  Single
    solves use preconditioned GMRES; batches use the preconditioned
    fixed-point iteration, which contracts at rate O(||T||).
    """

    def __init__(self, collision_op, L, disp, summary=None, fast=True,
                 fd_step=1e-3, rtol=1e-10, maxiter=200):
        self.disp = disp
        if isinstance(L, OperatorMatrix):
            self.matrix = L.matrix
        else:
            self.matrix = np.asarray(L)
        self.solver = DeflatedInverse(self.matrix, disp, summary)
        if fast and not isinstance(collision_op, FourierCollision):
            self.evaluator = FourierCollision(
                collision_op.grid, collision_op.disp, collision_op.delta
            )
        else:
            self.evaluator = collision_op
        self.fd_step = float(fd_step)
        self.rtol = float(rtol)
        self.maxiter = int(maxiter)
        self._W0 = disp.winv

    def _apply_any(self, W):
        if np.ndim(W) > 1 and hasattr(self.evaluator, "apply_batch"):
            return self.evaluator.apply_batch(W)
        if np.ndim(W) > 1:
            return np.stack([self.evaluator.apply(Wi) for Wi in W])
        return self.evaluator.apply(W)

    def _jacobian_fd(self, W, v):
        """Directional derivative of the collision operator at background W.

        Four-evaluation central rule at +-eps, +-2eps.  The collision rate is
        an exact quartic polynomial in the state, for which this rule has no
        truncation error, so the result is the exact Jacobian action up to
        roundoff — in particular the GMRES matvec built on it is linear to
        machine precision.
        """
        scale = np.max(np.abs(v), axis=-1, keepdims=True)
        scale = np.where(scale == 0.0, 1.0, scale)
        eps = self.fd_step / scale
        c1 = self._apply_any(W + eps * v) - self._apply_any(W - eps * v)
        c2 = self._apply_any(W + 2.0 * eps * v) - self._apply_any(W - 2.0 * eps * v)
        return (8.0 * c1 - c2) / (12.0 * eps)

    def shift_term(self, Tfield, v):
        """m(T, v): the background-shift part of the collision Jacobian."""
        W = self._W0 + Tfield
        if np.min(W) <= 0.0:
            raise ValueError("shifted background is not positive")
        base = np.broadcast_to(self._W0, np.shape(W)) if np.ndim(W) > 1 else self._W0
        return self._jacobian_fd(W, v) - self._jacobian_fd(base, v)

    def _project_out_low(self, f):
        fs = np.asarray(f) * self.disp.w
        fs = fs - (fs @ self.solver._V_low) @ self.solver._V_low.T
        return fs / self.disp.w

    def solve(self, Tfield, rhs):
        """GMRES solve of (L - m(T, .)) x = rhs; returns (x, diagnostics)."""
        N = self.disp.grid.size
        rhs = self._project_out_low(np.asarray(rhs, dtype=float))
        calls = {"n": 0}

        def matvec(v):
            calls["n"] += 1
            av = self.matrix @ v - self.shift_term(Tfield, v)
            return self._project_out_low(av)

        A = LinearOperator((N, N), matvec=matvec, dtype=float)
        M = LinearOperator((N, N), matvec=self.solver.apply, dtype=float)
        bnorm = np.linalg.norm(rhs)
        x, info = gmres(A, rhs, M=M, rtol=self.rtol, atol=self.rtol * bnorm,
                        restart=60, maxiter=self.maxiter)
        if info != 0:
            raise RuntimeError(
                f"collision-response GMRES did not converge (info={info})"
            )
        ip = self.disp.weighted_inner()
        resid = ip.norm(matvec(x) - rhs) / max(ip.norm(rhs), 1e-300)
        return x, {"matvec_calls": calls["n"], "residual": float(resid)}

    def solve_batch(self, Tfields, rhs, tol=1e-10, max_sweeps=60):
        """Fixed-point solve of (L - m(T, .)) x = rhs for a batch of cells.

        Iterates x <- x + L^-1 (rhs - (L - m) x) on the deflated complement;
        the preconditioned defect is O(||T||) so a few sweeps suffice.
        Raises when the iteration stalls (contraction lost).
        """
        rhs = self._project_out_low(np.asarray(rhs, dtype=float))
        x = self.solver.apply(rhs)
        scale = float(np.max(np.sqrt(np.abs(
            self.disp.grid.integrate(np.abs(rhs) ** 2 * self.disp.w_sq)))))
        prev = np.inf
        for _ in range(max_sweeps):
            defect = rhs - (x @ self.matrix.T - self.shift_term(Tfields, x))
            defect = self._project_out_low(defect)
            err = float(np.max(np.sqrt(np.abs(
                self.disp.grid.integrate(np.abs(defect) ** 2 * self.disp.w_sq)))))
            if err <= tol * max(scale, 1e-300):
                return x
            if err >= 0.5 * prev:
                raise RuntimeError(
                    f"batched collision-response iteration stalled at "
                    f"defect {err:.2e} (scale {scale:.2e})"
                )
            prev = err
            x = x + self.solver.apply(defect)
        raise RuntimeError("batched collision-response iteration did not converge")


# ----------------------------------------------------------------------
# state-dependent diffusivity


@dataclass(frozen=True)
class NonlinearDiffusivity:
    """Diffusion matrix at a shifted background, in both slow bases."""

    matrix_op: np.ndarray
    matrix_ab: np.ndarray
    solve_residual: float
    matvec_calls: int
    background_min: float


def nonlinear_diffusivity(response, state, rhs_tol=1e-8):
    """Diffusion matrix at background omega^-1 + (slow field of ``state``).

    Solves (L - m(T, .)) x_b = d_1 omega * e_b on the deflated complement —
    both right-hand sides at once through the batched fixed-point iteration,
    falling back to preconditioned GMRES if the contraction stalls — and
    pairs back as in the zero-shift conductivity; at zero shift this
    reproduces it exactly.
    """
    disp = response.disp
    basis = SlowBasis(disp)
    Tfield = state.as_field(disp)
    Wmin = float(np.min(disp.winv + Tfield))
    if Wmin <= 0.0:
        raise ValueError("background omega^-1 + T is not positive")
    dwa = disp.grad[:, 0]
    g = (dwa[:, None] * basis.e).T
    calls = 0
    try:
        X = response.solve_batch(np.broadcast_to(Tfield, g.shape), g)
    except RuntimeError:
        X = np.empty_like(g)
        for b in (0, 1):
            X[b], diag = response.solve(Tfield, g[b])
            calls += diag["matvec_calls"]
    ip = basis.inner
    av = X @ response.matrix.T - response.shift_term(
        np.broadcast_to(Tfield, g.shape), X
    )
    av = response._project_out_low(av)
    resid = max(
        float(ip.norm(av[b] - g[b])) / float(ip.norm(g[b])) for b in (0, 1)
    )
    if resid > rhs_tol:
        raise RuntimeError(
            f"shifted-background solve residual {resid:.2e} exceeds {rhs_tol:.0e}"
        )
    K_ab = np.empty((2, 2))
    for a in (0, 1):
        for b in (0, 1):
            K_ab[a, b] = float(ip.inner(g[a], X[b]).real)
    K_ab /= TWO_PI**2
    S = basis.coeff_map
    K_op = S.T @ K_ab @ S
    return NonlinearDiffusivity(
        matrix_op=K_op,
        matrix_ab=K_ab,
        solve_residual=float(resid),
        matvec_calls=calls,
        background_min=Wmin,
    )


class DiffusivityModel:
    """First-order response surface for the state-dependent diffusivity.

    Calibrated by full shifted-background solves at +-h along each slow
    coefficient; evaluation is then a matrix-valued affine map, suitable
    for inner loops of the heat-equation reference solver.  The quadratic
    calibration residual is recorded for error budgeting.
    """

    def __init__(self, response, h=5e-3):
        self.h = float(h)
        self.K0 = nonlinear_diffusivity(response, SlowState(0.0, 0.0)).matrix_op
        self.dK = []
        self.curvature = 0.0
        for b in range(2):
            tp = SlowState(*(h if j == b else 0.0 for j in range(2)))
            tm = SlowState(*(-h if j == b else 0.0 for j in range(2)))
            Kp = nonlinear_diffusivity(response, tp).matrix_op
            Km = nonlinear_diffusivity(response, tm).matrix_op
            self.dK.append((Kp - Km) / (2 * h))
            self.curvature = max(
                self.curvature,
                float(np.max(np.abs(Kp + Km - 2 * self.K0))) / h**2,
            )

    def evaluate(self, t1, t2):
        """K(T) to first order in the slow coefficients (batched)."""
        t1 = np.asarray(t1)[..., None, None]
        t2 = np.asarray(t2)[..., None, None]
        return self.K0 + t1 * self.dK[0] + t2 * self.dK[1]
