"""Geometric-program assembly and a log-domain barrier solver.

A posynomial is stored as a coefficient vector and an exponent matrix.
Constraints are kept pre-normalized to ``posynomial(x) <= 1``.  Under
``y = log x`` every posynomial becomes log-sum-exp (convex, smooth), and a
plain Newton log-barrier path solves the program to high accuracy; the
problems built here have a few dozen variables at most.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import TX_PATH_SCALE, Scenario
from .waterfill import TrafficMatrix

__all__ = [
    "GPError",
    "GPInfeasibleError",
    "GPConvergenceError",
    "Posynomial",
    "GPProblem",
    "SolveResult",
    "build_gp",
    "solve_gp",
]

LN2 = math.log(2.0)


class GPError(ValueError):
    """Malformed geometric program."""


class GPInfeasibleError(RuntimeError):
    """No strictly feasible point exists; carries the most-violated label."""

    def __init__(self, label: str, violation: float):
        super().__init__(f"infeasible: constraint '{label}' violated by {violation:.3e}")
        self.label = label
        self.violation = violation


class GPConvergenceError(RuntimeError):
    """Newton iterations exhausted before reaching the target accuracy."""


@dataclass(frozen=True)
class Posynomial:
    """Sum of monomials ``sum_k coeffs[k] * prod_j x_j ** exponents[k, j]``."""

    coeffs: np.ndarray
    exponents: np.ndarray
    label: str = ""

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        e = np.asarray(self.exponents, dtype=float)
        if c.ndim != 1 or e.ndim != 2 or e.shape[0] != c.shape[0]:
            raise GPError(f"inconsistent term table in '{self.label}'")
        if c.shape[0] == 0:
            raise GPError(f"empty posynomial '{self.label}'")
        if not np.all(np.isfinite(c)) or not np.all(c > 0):
            raise GPError(f"coefficients must be finite and positive in '{self.label}'")
        if not np.all(np.isfinite(e)):
            raise GPError(f"exponents must be finite in '{self.label}'")
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "exponents", e)

    def value(self, x: np.ndarray) -> float:
        return float(self.coeffs @ np.prod(x[None, :] ** self.exponents, axis=1))

    def log_value(self, y: np.ndarray) -> float:
        z = self.exponents @ y + np.log(self.coeffs)
        zmax = z.max()
        return float(zmax + math.log(np.exp(z - zmax).sum()))


@dataclass(frozen=True)
class GPProblem:
    """``minimize objective(x) s.t. constraints[i](x) <= 1`` over x > 0."""

    names: tuple[str, ...]
    objective: Posynomial
    constraints: tuple[Posynomial, ...]
    initial_point: np.ndarray
    fixed: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    @property
    def num_vars(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        return self.names.index(name)


@dataclass(frozen=True)
class SolveResult:
    """Solver output in the original (positive) variable space."""

    x: np.ndarray
    names: tuple[str, ...]
    objective: float
    converged: bool
    iterations: int
    constraint_residual: float
    optimality_residual: float
    message: str = ""

    def __getitem__(self, name: str) -> float:
        return float(self.x[self.names.index(name)])


class _LogSumExp:
    """Value / gradient / Hessian of log(sum exp(E y + b))."""

    def __init__(self, posy: Posynomial):
        self.E = posy.exponents
        self.b = np.log(posy.coeffs)
        self.label = posy.label

    def value(self, y: np.ndarray) -> float:
        z = self.E @ y + self.b
        zmax = z.max()
        return float(zmax + math.log(np.exp(z - zmax).sum()))

    def full(self, y: np.ndarray):
        z = self.E @ y + self.b
        zmax = z.max()
        w = np.exp(z - zmax)
        sw = w.sum()
        val = float(zmax + math.log(sw))
        w /= sw
        grad = self.E.T @ w
        hess = self.E.T @ (self.E * w[:, None]) - np.outer(grad, grad)
        return val, grad, hess


def _solve_kkt(hess: np.ndarray, grad: np.ndarray) -> np.ndarray:
    jitter = 0.0
    scale = max(float(np.abs(np.diag(hess)).max()), 1.0)
    for _ in range(8):
        try:
            h = hess if jitter == 0.0 else hess + jitter * np.eye(hess.shape[0])
            return np.linalg.solve(h, -grad)
        except np.linalg.LinAlgError:
            jitter = max(jitter * 100.0, 1e-14 * scale)
    return np.linalg.lstsq(hess, -grad, rcond=None)[0]


def _newton_centering(objective_lin, cons, y, t, max_iter=100):
    """Minimize ``t * f0(y) - sum log(-f_i(y))`` from a strictly feasible y.

    ``objective_lin`` is either a linear-cost vector in log space (monomial
    objective) or a :class:`_LogSumExp`.  Returns (y, newton_steps).
    """
    linear = isinstance(objective_lin, np.ndarray)

    def f0(yy):
        return float(objective_lin @ yy) if linear else objective_lin.value(yy)

    # Measure the merit function relative to the entry point: t * f0 can
    # reach 1e11 while per-step decreases near the optimum are O(1), so an
    # unshifted value would drown the line search in rounding noise.
    f0_ref = f0(y)

    def psi(yy):
        total = t * (f0(yy) - f0_ref)
        for c in cons:
            v = c.value(yy)
            if v >= 0.0:
                return math.inf
            total -= math.log(-v)
        return total

    steps = 0
    for _ in range(max_iter):
        if linear:
            grad = t * objective_lin.copy()
            hess = np.zeros((y.size, y.size))
        else:
            _, g0, h0 = objective_lin.full(y)
            grad = t * g0
            hess = t * h0
        for c in cons:
            v, g, h = c.full(y)
            if v >= 0.0:
                raise GPConvergenceError("left the barrier domain")
            grad += g / (-v)
            hess += h / (-v) + np.outer(g, g) / (v * v)
        step = _solve_kkt(hess, grad)
        decrement = float(-grad @ step)
        if decrement < 0.0:
            step = -grad
            decrement = float(grad @ grad)
        # The Newton decrement is measured in the local norm and does not
        # scale with t; a fixed threshold bounds the final dual residual.
        if decrement / 2.0 <= 5e-13:
            break
        base = psi(y)
        alpha = 1.0
        accepted = None
        for _ in range(60):
            cand = y + alpha * step
            val = psi(cand)
            if val <= base - 0.25 * alpha * decrement:
                accepted = (cand, val)
                break
            alpha *= 0.5
        if accepted is None:
            break
        y, new_val = accepted
        steps += 1
        # Ill-conditioned Hessians can report a decrement the line search
        # cannot realize; stop once progress sinks into rounding noise.
        if base - new_val <= 1e-12 * (1.0 + abs(base)):
            break
    return y, steps


def _phase_one(cons, y0):
    """Find a strictly feasible y, or raise with the most-violated label."""
    n = y0.size
    worst = max(c.value(y0) for c in cons)
    if worst < -1e-9:
        return y0

    class _Shifted:
        # f_i(y) - s < 0 over the augmented variable (y, s)
        def __init__(self, inner):
            self.inner = inner

        def value(self, ys):
            return self.inner.value(ys[:n]) - ys[n]

        def full(self, ys):
            v, g, h = self.inner.full(ys[:n])
            grad = np.concatenate([g, [-1.0]])
            hess = np.zeros((n + 1, n + 1))
            hess[:n, :n] = h
            return v - ys[n], grad, hess

    shifted = [_Shifted(c) for c in cons]
    cost = np.zeros(n + 1)
    cost[n] = 1.0
    ys = np.concatenate([y0, [worst + 1.0]])
    t = 1.0
    for _ in range(60):
        ys, _ = _newton_centering(cost, shifted, ys, t)
        worst_now = max(c.value(ys[:n]) for c in cons)
        if worst_now < -1e-7:
            return ys[:n]
        if len(shifted) / t < 1e-10:
            break
        t *= 20.0
    values = [(c.label or f"constraint[{i}]", c.value(ys[:n]))
              for i, c in enumerate(cons)]
    label, violation = max(values, key=lambda kv: kv[1])
    raise GPInfeasibleError(label, math.exp(max(violation, 0.0)) - 1.0)


def solve_gp(problem: GPProblem, gap_tol: float = 2e-8,
             max_outer: int = 60) -> SolveResult:
    """Solve a geometric program via the log-variable barrier path.

    Returns a strictly feasible point whose log-domain objective is within
    ``gap_tol`` of optimal.  Raises :class:`GPInfeasibleError` when phase I
    proves there is no interior point and :class:`GPConvergenceError` when
    the iteration caps are hit first.
    """
    x0 = np.asarray(problem.initial_point, dtype=float)
    if x0.shape != (problem.num_vars,) or np.any(x0 <= 0):
        raise GPError("initial point must be strictly positive")
    cons = [_LogSumExp(c) for c in problem.constraints]
    obj = _LogSumExp(problem.objective)
    y = np.log(x0)
    if cons:
        y = _phase_one(cons, y)

    # Single-monomial objectives are affine in log space; feed the cost
    # vector directly, otherwise center on the LSE objective.
    linear_cost = obj.E[0].copy() if obj.E.shape[0] == 1 else None
    total_steps = 0
    t = 1.0
    converged = False
    for _ in range(max_outer):
        target = linear_cost if linear_cost is not None else obj
        y, steps = _newton_centering(target, cons, y, t)
        total_steps += steps
        if not cons or len(cons) / t < gap_tol:
            converged = True
            break
        if steps >= 100:
            # Centering hit the rounding floor; accept the current gap if
            # it is already tight enough to be usable.
            converged = len(cons) / t <= 1e-5
            break
        t *= 20.0

    # Objective-flat variables can drift far down the barrier's open end
    # (e.g. transmission times under a first-order series); keep the
    # returned point strictly positive in floating point.
    x = np.exp(np.clip(y, -700.0, 700.0))
    worst = max((math.exp(c.value(y)) - 1.0 for c in cons), default=0.0)
    # Dual residual of the barrier KKT system, normalized by t.
    grad = obj.full(y)[1]
    for c in cons:
        v, g, _ = c.full(y)
        grad += g / (-t * v)
    optimality = float(np.abs(grad).max())
    result = SolveResult(
        x=x, names=problem.names, objective=problem.objective.value(x),
        converged=converged, iterations=total_steps,
        constraint_residual=max(worst, 0.0), optimality_residual=optimality,
        message="" if converged else "barrier path did not reach target gap")
    if not converged:
        raise GPConvergenceError(result.message)
    return result


class _Builder:
    """Accumulates monomial terms, folding out variables held fixed."""

    def __init__(self, names: list[str], fixed: dict):
        self.names = [n for n in names if n not in fixed]
        self.fixed = dict(fixed)
        self.col = {n: j for j, n in enumerate(self.names)}

    def term(self, coeff: float, **exps) -> tuple[float, np.ndarray] | None:
        row = np.zeros(len(self.names))
        for name, e in exps.items():
            if e == 0:
                continue
            if name in self.fixed:
                coeff *= self.fixed[name] ** e
            else:
                row[self.col[name]] = e
        if coeff == 0.0:
            return None
        if coeff < 0 or not math.isfinite(coeff):
            raise GPError(f"non-posynomial coefficient {coeff}")
        return coeff, row

    def posynomial(self, terms, label: str) -> Posynomial:
        kept = [t for t in terms if t is not None]
        if not kept:
            raise GPError(f"no terms survived in '{label}'")
        coeffs = np.array([c for c, _ in kept])
        expo = np.vstack([r for _, r in kept])
        return Posynomial(coeffs=coeffs, exponents=expo, label=label)


def build_gp(scenario: Scenario, traffic: TrafficMatrix, stm_line_bits,
             k_star: int, t_max: int, *, fixed_alpha: float | None = None,
             fixed_n0: float | None = None) -> GPProblem:
    """Assemble the truncated energy-minimization program for one ``k_star``.

    The exponentials of the three transmission-power families are replaced
    by their first ``t_max`` series terms (each a monomial); the laser and
    launch expressions are posynomial already and enter untruncated.  The
    objective is an epigraph variable bounding the scaled energy-per-bit
    sum.  ``fixed_alpha`` / ``fixed_n0`` pin those variables instead of
    optimizing them (the semi-fixed baseline schemes).
    """
    if t_max < 1:
        raise GPError(f"t_max must be >= 1, got {t_max}")
    s = scenario.num_satellites
    if not 0 <= k_star < s:
        raise GPError(f"k_star must lie in [0, {s - 1}], got {k_star}")
    line_bits = np.asarray(stm_line_bits, dtype=float)
    if line_bits.shape != (s,):
        raise GPError("stm_line_bits must have one entry per segment")

    lam = traffic.row_sums() / scenario.orbit_period_s
    mu = traffic.col_sums() / scenario.orbit_period_s
    windows = scenario.time_windows_s
    period = scenario.orbit_period_s
    speed = scenario.propagation_speed_km_s
    spb = scenario.seconds_per_bit
    delta = scenario.schedule_overhead_s
    sigma_scale = TX_PATH_SCALE * scenario.noise_psd_w_per_hz
    tau = [max(windows[v] - windows[v + 1], 0.0) for v in range(s - 1)]
    tau.append(windows[-1])
    active = [v for v in range(k_star, s) if line_bits[v] > 0.0]
    for v in active:
        if tau[v] <= 0.0:
            raise GPInfeasibleError(f"schedule_fit[{v}]", math.inf)
        if delta >= tau[v]:
            raise GPInfeasibleError(f"schedule_fit[{v}]", delta / tau[v] - 1.0)

    fixed = {}
    if fixed_alpha is not None:
        if not 0.0 < fixed_alpha < 1.0:
            raise GPError(f"fixed_alpha must lie in (0, 1), got {fixed_alpha}")
        fixed["alpha"] = float(fixed_alpha)
    if fixed_n0 is None and scenario.max_serving_periods == 1:
        fixed_n0 = 1.0  # the box [1, 1] has no interior; pin the variable
    if fixed_n0 is not None:
        if not 1.0 <= fixed_n0 <= scenario.max_serving_periods:
            raise GPError(f"fixed_n0 must lie in [1, n_max], got {fixed_n0}")
        fixed["n0"] = float(fixed_n0)

    names = ["alpha", "n0"]
    names += [f"t_ground[{i}]" for i in range(s)]
    names += [f"t_uplink[{i}]" for i in range(s)]
    names += [f"t_downlink[{i}]" for i in range(s)]
    names += [f"extra[{v}]" for v in active]
    names += ["F"]
    b = _Builder(names, fixed)

    epigraph = []
    # Transmission-power series: B d^2 T (ln2 n0 T_orbit r / (B T))^t / (n0 G t!)
    hop_specs = (
        ("t_ground", scenario.bandwidth_ground_hz,
         lambda i: scenario.balloon_heights_km[i], lam),
        ("t_uplink", scenario.bandwidth_uplink_hz,
         lambda i: scenario.altitude_km - scenario.balloon_heights_km[i], lam),
        ("t_downlink", scenario.bandwidth_downlink_hz,
         lambda i: scenario.altitude_km - scenario.balloon_heights_km[i], mu),
    )
    for var, bandwidth, dist, rates in hop_specs:
        for i in range(s):
            if rates[i] <= 0.0:
                continue
            base = LN2 * period * float(rates[i]) / bandwidth
            for t in range(1, t_max + 1):
                coeff = (bandwidth * dist(i) ** 2 * base ** t
                         / (scenario.antenna_gain * math.factorial(t)))
                epigraph.append(b.term(coeff, **{var + f"[{i}]": 1 - t},
                                       n0=t - 1, F=-1))
    # Computing term.
    epigraph.append(b.term(
        scenario.computing_power_w_per_cps * scenario.computing_load_cycles_per_bit
        * s / sigma_scale, n0=-1, F=-1))
    # Laser terms per active segment, with extra = schedules - S substituted.
    window_k = windows[k_star]
    k_static = (s * scenario.laser_static_power_w_per_bps * traffic.total_bits
                / (sigma_scale * window_k))
    k_dynamic = scenario.isl_capacity_bps * scenario.laser_dynamic_power_w_per_bps \
        * s / sigma_scale
    k_launch = (scenario.laser_launch_power_w * s * scenario.alignment_delay_s
                / (sigma_scale * window_k))
    for v in active:
        ebits = spb * float(line_bits[v])
        ev = f"extra[{v}]"
        epigraph += [
            b.term(k_static * ebits, n0=1, alpha=-2, F=-1),
            b.term(k_static * s * ebits, n0=1, **{ev: -1}, alpha=-2, F=-1),
            b.term(k_static * delta, **{ev: 1}, alpha=-2, F=-1),
            b.term(k_static * s * delta, alpha=-2, F=-1),
            b.term(k_dynamic * ebits, F=-1),
            b.term(k_dynamic * s * ebits, **{ev: -1}, F=-1),
            b.term(k_dynamic * delta, **{ev: 1}, n0=-1, F=-1),
            b.term(k_dynamic * s * delta, n0=-1, F=-1),
            b.term(k_launch * ebits, **{ev: 1}, alpha=-1, F=-1),
            b.term(k_launch * delta, **{ev: 2}, n0=-1, alpha=-1, F=-1),
            b.term(k_launch * 2 * s * ebits, alpha=-1, F=-1),
            b.term(k_launch * 2 * s * delta, **{ev: 1}, n0=-1, alpha=-1, F=-1),
            b.term(k_launch * s * s * ebits, **{ev: -1}, alpha=-1, F=-1),
            b.term(k_launch * s * s * delta, n0=-1, alpha=-1, F=-1),
        ]

    constraints = [b.posynomial(epigraph, "energy_epigraph")]

    compute_rate = (scenario.computing_load_cycles_per_bit * period
                    * float(lam.sum()) / scenario.computing_pool_cps)
    for i in range(s):
        budget = period - windows[i] - scenario.balloon_heights_km[i] / speed
        if budget - compute_rate * max(1.0, fixed.get("n0", 1.0)) <= 0.0:
            raise GPInfeasibleError(f"pre_window[{i}]",
                                    compute_rate / max(budget, 1e-300) - 1.0)
        constraints.append(b.posynomial(
            [b.term(1.0 / budget, **{f"t_ground[{i}]": 1}),
             b.term(compute_rate / budget, n0=1)],
            f"pre_window[{i}]"))
    for i in range(s):
        round_trip = 2.0 * (scenario.altitude_km - scenario.balloon_heights_km[i]) / speed
        budget = windows[i] - round_trip
        if budget <= 0.0:
            raise GPInfeasibleError(f"in_window[{i}]", -budget)
        share = windows[i] if i >= k_star else window_k
        constraints.append(b.posynomial(
            [b.term(1.0 / budget, **{f"t_uplink[{i}]": 1}),
             b.term(1.0 / budget, **{f"t_downlink[{i}]": 1}),
             b.term(share / budget, alpha=1)],
            f"in_window[{i}]"))
    if active:
        m_terms = []
        for v in active:
            ebits = spb * float(line_bits[v])
            ev = f"extra[{v}]"
            scale = 1.0 / (window_k * scenario.max_lasers)
            m_terms += [
                b.term(scale * ebits, n0=1, alpha=-1),
                b.term(scale * s * ebits, n0=1, **{ev: -1}, alpha=-1),
                b.term(scale * delta, **{ev: 1}, alpha=-1),
                b.term(scale * s * delta, alpha=-1),
            ]
        constraints.append(b.posynomial(m_terms, "avg_lasers"))
        for v in active:
            ebits = spb * float(line_bits[v])
            constraints.append(b.posynomial(
                [b.term(ebits / tau[v], n0=1, **{f"extra[{v}]": -1}, alpha=-1),
                 b.term(delta / tau[v], alpha=-1)],
                f"schedule_fit[{v}]"))
    if "n0" not in fixed:
        constraints.append(b.posynomial(
            [b.term(1.0 / scenario.max_serving_periods, n0=1)], "n0_upper"))
        constraints.append(b.posynomial([b.term(1.0, n0=-1)], "n0_lower"))
    if "alpha" not in fixed:
        constraints.append(b.posynomial([b.term(1.0, alpha=1)], "alpha_upper"))

    objective = b.posynomial([b.term(1.0, F=1)], "objective")
    x0 = _initial_point(scenario, traffic, line_bits, k_star, tau, active,
                        b, constraints)
    return GPProblem(names=tuple(b.names), objective=objective,
                     constraints=tuple(constraints), initial_point=x0,
                     fixed=dict(fixed),
                     meta={"k_star": k_star, "t_max": t_max,
                           "active_segments": tuple(active),
                           "tau_s": tuple(tau)})


def _initial_point(scenario, traffic, line_bits, k_star, tau, active, b, constraints):
    """Interior starting point: half of every individual slack budget."""
    s = scenario.num_satellites
    windows = scenario.time_windows_s
    period = scenario.orbit_period_s
    speed = scenario.propagation_speed_km_s
    window_k = windows[k_star]

    lam_total = traffic.total_bits / period
    compute_rate = (scenario.computing_load_cycles_per_bit * period
                    * lam_total / scenario.computing_pool_cps)
    n0 = b.fixed.get("n0")
    if n0 is None:
        # Strictly interior n0: halfway to the tightest pre-window cap.
        n0_cap = float(scenario.max_serving_periods)
        if compute_rate > 0:
            for i in range(s):
                budget = period - windows[i] - scenario.balloon_heights_km[i] / speed
                n0_cap = min(n0_cap, budget / compute_rate)
        n0 = min(max(1.0 + 0.5 * (n0_cap - 1.0), 1.0 + 1e-9),
                 scenario.max_serving_periods * (1.0 - 1e-9))

    alpha = b.fixed.get("alpha")
    if alpha is None:
        alpha_ub = 1.0
        for frac in (0.05, 0.01, 0.001):
            bounds = []
            for i in range(s):
                round_trip = 2.0 * (scenario.altitude_km
                                    - scenario.balloon_heights_km[i]) / speed
                share = windows[i] if i >= k_star else window_k
                bounds.append((windows[i] - round_trip
                               - 2.0 * frac * windows[i]) / share)
            alpha_ub = min(bounds)
            if alpha_ub > 0:
                break
        alpha = min(max(0.5 * alpha_ub, 1e-6), 0.999)

    compute_delay = compute_rate * n0
    x = {}
    x["alpha"] = alpha
    x["n0"] = n0
    for i in range(s):
        budget = period - windows[i] - scenario.balloon_heights_km[i] / speed \
            - compute_delay
        x[f"t_ground[{i}]"] = max(0.5 * budget, 1e-6)
        round_trip = 2.0 * (scenario.altitude_km
                            - scenario.balloon_heights_km[i]) / speed
        share = windows[i] if i >= k_star else window_k
        slack = windows[i] - round_trip - alpha * share
        x[f"t_uplink[{i}]"] = max(0.25 * slack, 1e-6)
        x[f"t_downlink[{i}]"] = max(0.25 * slack, 1e-6)
    for v in active:
        tx_bits = n0 * scenario.seconds_per_bit * float(line_bits[v])
        room = alpha * tau[v] - scenario.schedule_overhead_s
        target = 0.5 * alpha * tau[v] - scenario.schedule_overhead_s
        if target <= 0:
            target = 0.5 * room
        x[f"extra[{v}]"] = tx_bits / target if target > 0 else 1.0
    x["F"] = 1.0
    vec = np.array([x[name] for name in b.names if name != "F"] + [1.0])
    # Size the epigraph variable off the already-built first constraint.
    f_col = b.col["F"]
    epi = constraints[0]
    partial = epi.coeffs @ np.prod(
        np.delete(vec, f_col)[None, :] ** np.delete(epi.exponents, f_col, axis=1),
        axis=1)
    vec[f_col] = 2.0 * float(partial)
    return vec
