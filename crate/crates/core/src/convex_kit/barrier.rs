use super::linalg::cholesky_solve;

/// A smooth convex function of a few variables, evaluated on the local slice
/// selected by the owning [`Term`].
pub trait SmoothTerm {
    fn value(&self, x: &[f64]) -> f64;
    /// Writes the gradient and row-major Hessian into zeroed buffers.
    fn derivatives(&self, x: &[f64], grad: &mut [f64], hess: &mut [f64]);
}

/// Closure-backed term: the closure receives zeroed gradient and Hessian
/// buffers, fills them and returns the value.
pub struct FnTerm<F>(pub F);

impl<F> SmoothTerm for FnTerm<F>
where
    F: Fn(&[f64], &mut [f64], &mut [f64]) -> f64,
{
    fn value(&self, x: &[f64]) -> f64 {
        let n = x.len();
        let mut g = vec![0.0; n];
        let mut h = vec![0.0; n * n];
        (self.0)(x, &mut g, &mut h)
    }

    fn derivatives(&self, x: &[f64], grad: &mut [f64], hess: &mut [f64]) {
        (self.0)(x, grad, hess);
    }
}

/// Affine term `c + a . x`.
pub struct LinearTerm {
    pub coeffs: Vec<f64>,
    pub constant: f64,
}

impl SmoothTerm for LinearTerm {
    fn value(&self, x: &[f64]) -> f64 {
        self.constant + self.coeffs.iter().zip(x).map(|(a, v)| a * v).sum::<f64>()
    }

    fn derivatives(&self, _x: &[f64], grad: &mut [f64], _hess: &mut [f64]) {
        grad.copy_from_slice(&self.coeffs);
    }
}

/// Wraps a value-only function and supplies central-difference derivatives.
/// Intended for tests.
pub struct FiniteDiff<F>(pub F);

impl<F> SmoothTerm for FiniteDiff<F>
where
    F: Fn(&[f64]) -> f64,
{
    fn value(&self, x: &[f64]) -> f64 {
        (self.0)(x)
    }

    fn derivatives(&self, x: &[f64], grad: &mut [f64], hess: &mut [f64]) {
        let n = x.len();
        let f = &self.0;
        let step = |v: f64, rel: f64| rel * v.abs().max(1.0);
        let mut y = x.to_vec();
        let f0 = f(x);
        for i in 0..n {
            let hg = step(x[i], 1e-6);
            y[i] = x[i] + hg;
            let fp = f(&y);
            y[i] = x[i] - hg;
            let fm = f(&y);
            grad[i] = (fp - fm) / (2.0 * hg);
            let hi = step(x[i], 1e-4);
            y[i] = x[i] + hi;
            let fp = f(&y);
            y[i] = x[i] - hi;
            let fm = f(&y);
            y[i] = x[i];
            hess[i * n + i] = (fp - 2.0 * f0 + fm) / (hi * hi);
            for j in 0..i {
                let hj = step(x[j], 1e-4);
                let mut corner = |si: f64, sj: f64| {
                    y[i] = x[i] + si * hi;
                    y[j] = x[j] + sj * hj;
                    let v = f(&y);
                    y[i] = x[i];
                    y[j] = x[j];
                    v
                };
                let v = (corner(1.0, 1.0) - corner(1.0, -1.0) - corner(-1.0, 1.0)
                    + corner(-1.0, -1.0))
                    / (4.0 * hi * hj);
                hess[i * n + j] = v;
                hess[j * n + i] = v;
            }
        }
    }
}

/// A term bound to a subset of the program variables.
pub struct Term<'a> {
    vars: Vec<usize>,
    f: Box<dyn SmoothTerm + 'a>,
}

impl<'a> Term<'a> {
    pub fn new(vars: Vec<usize>, f: impl SmoothTerm + 'a) -> Self {
        Term {
            vars,
            f: Box::new(f),
        }
    }

    pub fn func<F>(vars: Vec<usize>, f: F) -> Self
    where
        F: Fn(&[f64], &mut [f64], &mut [f64]) -> f64 + 'a,
    {
        Term::new(vars, FnTerm(f))
    }

    /// `constant + sum coeff_i * x[var_i]`.
    pub fn linear(coeffs: &[(usize, f64)], constant: f64) -> Self {
        Term::new(
            coeffs.iter().map(|c| c.0).collect(),
            LinearTerm {
                coeffs: coeffs.iter().map(|c| c.1).collect(),
                constant,
            },
        )
    }

    pub fn constant(c: f64) -> Self {
        Term::linear(&[], c)
    }

    fn gather(&self, x: &[f64], buf: &mut Vec<f64>) {
        buf.clear();
        buf.extend(self.vars.iter().map(|&i| x[i]));
    }
}

/// `minimize sum(objective)` subject to `sum(constraint_i) <= 0` and box
/// bounds. Variables with equal bounds are held fixed.
pub struct SmoothConvexProgram<'a> {
    dim: usize,
    lo: Vec<f64>,
    hi: Vec<f64>,
    objective: Vec<Term<'a>>,
    constraints: Vec<Vec<Term<'a>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    MaxIter,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutcome {
    pub point: Vec<f64>,
    pub value: f64,
    pub status: SolveStatus,
    pub iterations: usize,
    pub kkt: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct BarrierOptions {
    pub tol: f64,
    pub t0: f64,
    pub mu: f64,
    pub backtrack: f64,
    pub armijo: f64,
    pub max_newton: usize,
    pub max_centering: usize,
}

impl Default for BarrierOptions {
    fn default() -> Self {
        BarrierOptions {
            tol: 1e-8,
            t0: 1.0,
            mu: 10.0,
            backtrack: 0.5,
            armijo: 0.01,
            max_newton: 2000,
            max_centering: 100,
        }
    }
}

impl<'a> SmoothConvexProgram<'a> {
    pub fn new(dim: usize) -> Self {
        SmoothConvexProgram {
            dim,
            lo: vec![f64::NEG_INFINITY; dim],
            hi: vec![f64::INFINITY; dim],
            objective: Vec::new(),
            constraints: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn set_bounds(&mut self, var: usize, lo: f64, hi: f64) {
        self.lo[var] = lo;
        self.hi[var] = hi;
    }

    pub fn bounds(&self, var: usize) -> (f64, f64) {
        (self.lo[var], self.hi[var])
    }

    pub fn add_objective(&mut self, term: Term<'a>) {
        self.objective.push(term);
    }

    /// Adds `sum(terms) <= 0`.
    pub fn add_constraint(&mut self, terms: Vec<Term<'a>>) {
        self.constraints.push(terms);
    }

    /// Adds `sum coeff_i * x[var_i] <= rhs`.
    pub fn add_linear_constraint(&mut self, coeffs: &[(usize, f64)], rhs: f64) {
        self.constraints.push(vec![Term::linear(coeffs, -rhs)]);
    }

    pub fn n_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        let mut buf = Vec::new();
        sum_value(&self.objective, x, &mut buf)
    }

    pub fn constraint_values(&self, x: &[f64]) -> Vec<f64> {
        let mut buf = Vec::new();
        self.constraints
            .iter()
            .map(|c| sum_value(c, x, &mut buf))
            .collect()
    }

    /// Largest violation of the constraints and box bounds at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut v = self
            .constraint_values(x)
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max);
        for i in 0..self.dim {
            v = v.max(self.lo[i] - x[i]).max(x[i] - self.hi[i]);
        }
        v
    }
}

fn sum_value(terms: &[Term<'_>], x: &[f64], buf: &mut Vec<f64>) -> f64 {
    let mut s = 0.0;
    for t in terms {
        t.gather(x, buf);
        s += t.f.value(buf);
    }
    s
}

/// Adds the derivatives of `sum(terms)` scaled by `w` into a dense gradient
/// and Hessian of stride `n`.
fn accumulate(
    terms: &[Term<'_>],
    x: &[f64],
    w: f64,
    n: usize,
    grad: &mut [f64],
    hess: Option<&mut [f64]>,
    scratch: &mut Scratch,
) {
    let mut hess = hess;
    for t in terms {
        let m = t.vars.len();
        t.gather(x, &mut scratch.local);
        scratch.g.clear();
        scratch.g.resize(m, 0.0);
        scratch.h.clear();
        scratch.h.resize(m * m, 0.0);
        t.f.derivatives(&scratch.local, &mut scratch.g, &mut scratch.h);
        for (a, &i) in t.vars.iter().enumerate() {
            grad[i] += w * scratch.g[a];
            if let Some(h) = hess.as_deref_mut() {
                for (b, &j) in t.vars.iter().enumerate() {
                    h[i * n + j] += w * scratch.h[a * m + b];
                }
            }
        }
    }
}

#[derive(Default)]
struct Scratch {
    local: Vec<f64>,
    g: Vec<f64>,
    h: Vec<f64>,
    cg: Vec<f64>,
    touched: Vec<usize>,
    mark: Vec<bool>,
}

/// Barrier view of a program. In phase-I mode an extra slack `s` (last
/// coordinate) is minimized subject to `g_i(x) - s <= 0`.
struct Barrier<'p, 'a> {
    prog: &'p SmoothConvexProgram<'a>,
    phase1: bool,
    dim: usize,
    lo: Vec<f64>,
    hi: Vec<f64>,
    free: Vec<usize>,
    m: usize,
}

impl<'p, 'a> Barrier<'p, 'a> {
    fn new(prog: &'p SmoothConvexProgram<'a>, phase1: Option<(f64, f64)>) -> Self {
        let mut lo = prog.lo.clone();
        let mut hi = prog.hi.clone();
        if let Some((s_lo, s_hi)) = phase1 {
            lo.push(s_lo);
            hi.push(s_hi);
        }
        let dim = lo.len();
        let free: Vec<usize> = (0..dim).filter(|&i| lo[i] < hi[i]).collect();
        let m = prog.constraints.len()
            + free
                .iter()
                .map(|&i| lo[i].is_finite() as usize + hi[i].is_finite() as usize)
                .sum::<usize>();
        Barrier {
            prog,
            phase1: phase1.is_some(),
            dim,
            lo,
            hi,
            free,
            m,
        }
    }

    fn slack(&self, x: &[f64]) -> f64 {
        if self.phase1 {
            x[self.dim - 1]
        } else {
            0.0
        }
    }

    fn objective(&self, x: &[f64]) -> f64 {
        if self.phase1 {
            x[self.dim - 1]
        } else {
            self.prog.objective_value(x)
        }
    }

    /// `t f(x) - sum log(-g_i(x))`, or `None` outside the domain.
    fn phi(&self, x: &[f64], t: f64, buf: &mut Vec<f64>) -> Option<f64> {
        let mut v = t * self.objective(x);
        if !v.is_finite() {
            return None;
        }
        for &i in &self.free {
            if self.lo[i].is_finite() {
                let d = x[i] - self.lo[i];
                if !(d > 0.0) {
                    return None;
                }
                v -= d.ln();
            }
            if self.hi[i].is_finite() {
                let d = self.hi[i] - x[i];
                if !(d > 0.0) {
                    return None;
                }
                v -= d.ln();
            }
        }
        let s = self.slack(x);
        for c in &self.prog.constraints {
            let g = sum_value(c, x, buf) - s;
            if !(g < 0.0) {
                return None;
            }
            v -= (-g).ln();
        }
        Some(v)
    }

    fn grad_hess(&self, x: &[f64], t: f64, grad: &mut [f64], hess: &mut [f64], sc: &mut Scratch) {
        let n = self.dim;
        grad.iter_mut().for_each(|v| *v = 0.0);
        hess.iter_mut().for_each(|v| *v = 0.0);
        if self.phase1 {
            grad[n - 1] += t;
        } else {
            accumulate(&self.prog.objective, x, t, n, grad, Some(hess), sc);
        }
        for &i in &self.free {
            if self.lo[i].is_finite() {
                let d = x[i] - self.lo[i];
                grad[i] -= 1.0 / d;
                hess[i * n + i] += 1.0 / (d * d);
            }
            if self.hi[i].is_finite() {
                let d = self.hi[i] - x[i];
                grad[i] += 1.0 / d;
                hess[i * n + i] += 1.0 / (d * d);
            }
        }
        let s = self.slack(x);
        sc.mark.clear();
        sc.mark.resize(n, false);
        let mut cg = std::mem::take(&mut sc.cg);
        cg.clear();
        cg.resize(n, 0.0);
        for c in &self.prog.constraints {
            let mut local = std::mem::take(&mut sc.local);
            let g = sum_value(c, x, &mut local) - s;
            sc.local = local;
            let w = -1.0 / g;
            sc.touched.clear();
            for term in c {
                for &i in &term.vars {
                    if !sc.mark[i] {
                        sc.mark[i] = true;
                        sc.touched.push(i);
                    }
                }
            }
            if self.phase1 {
                sc.touched.push(n - 1);
            }
            accumulate(c, x, w, n, &mut cg, Some(hess), sc);
            if self.phase1 {
                cg[n - 1] -= w;
            }
            for &i in &sc.touched {
                grad[i] += cg[i];
            }
            for &i in &sc.touched {
                for &j in &sc.touched {
                    hess[i * n + j] += cg[i] * cg[j];
                }
            }
            for &i in &sc.touched {
                cg[i] = 0.0;
                if i < sc.mark.len() {
                    sc.mark[i] = false;
                }
            }
        }
        sc.cg = cg;
    }

    fn max_constraint(&self, x: &[f64]) -> f64 {
        self.prog
            .constraint_values(x)
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Relative precision to which the barrier value can be compared.
const PHI_RESOLUTION: f64 = 1e-13;
const MAX_BACKTRACKS: usize = 40;

/// Largest accepted `decrement^2 / t` relative to the gap tolerance; above
/// it the last centering step is considered stalled.
const CENTERING_SLACK: f64 = 1e3;

struct RunResult {
    x: Vec<f64>,
    iterations: usize,
    gap: f64,
    decrement: f64,
    t: f64,
    completed: bool,
}

/// Sequential unconstrained minimization of the barrier function. When
/// `stop` is given, returns as soon as it accepts the current point.
fn run(
    bar: &Barrier<'_, '_>,
    mut x: Vec<f64>,
    opts: &BarrierOptions,
    stop: Option<&dyn Fn(&[f64]) -> bool>,
) -> RunResult {
    let n = bar.dim;
    let nf = bar.free.len();
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n * n];
    let mut rg = vec![0.0; nf];
    let mut rh = vec![0.0; nf * nf];
    let mut trial = x.clone();
    let mut sc = Scratch::default();
    let mut buf = Vec::new();
    let mut t = opts.t0;
    let mut iterations = 0;
    let mut decrement = f64::INFINITY;
    let m = bar.m.max(1) as f64;
    let inner_tol = (opts.tol * 1e-2).max(1e-14);
    loop {
        let mut phi = match bar.phi(&x, t, &mut buf) {
            Some(v) => v,
            None => break,
        };
        for _ in 0..opts.max_centering {
            if iterations >= opts.max_newton {
                break;
            }
            if let Some(stop) = stop {
                if stop(&x) {
                    return RunResult {
                        x,
                        iterations,
                        gap: m / t,
                        decrement,
                        t,
                        completed: true,
                    };
                }
            }
            iterations += 1;
            bar.grad_hess(&x, t, &mut grad, &mut hess, &mut sc);
            for (a, &i) in bar.free.iter().enumerate() {
                rg[a] = -grad[i];
                for (b, &j) in bar.free.iter().enumerate() {
                    rh[a * nf + b] = hess[i * n + j];
                }
            }
            let dx = match cholesky_solve(&rh, &rg, nf) {
                Some(d) => d,
                None => break,
            };
            let lambda2: f64 = dx.iter().zip(&rg).map(|(d, g)| d * g).sum();
            decrement = lambda2.max(0.0).sqrt();
            // below this the decrement is lost in the rounding of phi
            let resolvable = 2.0 * inner_tol.max(PHI_RESOLUTION * phi.abs());
            if !(lambda2 > resolvable) {
                break;
            }
            let slope = -lambda2;
            let mut step = 1.0;
            let mut accepted = false;
            for _ in 0..MAX_BACKTRACKS {
                trial.copy_from_slice(&x);
                for (a, &i) in bar.free.iter().enumerate() {
                    trial[i] += step * dx[a];
                }
                if let Some(p) = bar.phi(&trial, t, &mut buf) {
                    if p <= phi + opts.armijo * step * slope {
                        accepted = true;
                        phi = p;
                        break;
                    }
                }
                step *= opts.backtrack;
            }
            if !accepted {
                break;
            }
            std::mem::swap(&mut x, &mut trial);
        }
        if let Some(stop) = stop {
            if stop(&x) {
                return RunResult {
                    x,
                    iterations,
                    gap: m / t,
                    decrement,
                    t,
                    completed: true,
                };
            }
        }
        if m / t <= opts.tol || iterations >= opts.max_newton {
            break;
        }
        t *= opts.mu;
    }
    let gap = m / t;
    RunResult {
        x,
        iterations,
        gap,
        decrement,
        t,
        completed: gap <= opts.tol
            && iterations < opts.max_newton
            && !(decrement * decrement / t > CENTERING_SLACK * opts.tol),
    }
}

fn interior_start(prog: &SmoothConvexProgram<'_>, x0: &[f64]) -> Vec<f64> {
    let mut x = x0.to_vec();
    for i in 0..prog.dim {
        let (lo, hi) = (prog.lo[i], prog.hi[i]);
        if lo == hi {
            x[i] = lo;
            continue;
        }
        let margin = if lo.is_finite() && hi.is_finite() {
            1e-3 * (hi - lo)
        } else {
            let base = if lo.is_finite() { lo } else { hi };
            1e-3 * base.abs().max(1.0)
        };
        if lo.is_finite() && !(x[i] > lo) {
            x[i] = lo + margin;
        }
        if hi.is_finite() && !(x[i] < hi) {
            x[i] = hi - margin;
        }
        if !x[i].is_finite() {
            x[i] = if lo.is_finite() {
                lo + margin
            } else if hi.is_finite() {
                hi - margin
            } else {
                0.0
            };
        }
    }
    x
}

/// Half-width of the phase-I box on unbounded coordinates, relative to the
/// start point's magnitude.
const PHASE1_REACH: f64 = 1e3;

/// Finds a point strictly satisfying every constraint, starting from `x0`.
pub fn find_strictly_feasible(
    prog: &SmoothConvexProgram<'_>,
    x0: &[f64],
    opts: &BarrierOptions,
) -> Option<Vec<f64>> {
    let x = interior_start(prog, x0);
    let g_max = prog
        .constraint_values(&x)
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max);
    if g_max < 0.0 {
        return Some(x);
    }
    if !g_max.is_finite() {
        return None;
    }
    let scale = g_max.abs().max(1.0);
    let s0 = g_max + scale;
    // unbounded coordinates get a wide box around the start so the phase-I
    // barrier stays bounded below
    let mut bar = Barrier::new(prog, Some((-scale, s0 + scale)));
    for i in 0..prog.dim {
        let reach = PHASE1_REACH * x[i].abs().max(1.0);
        if !bar.lo[i].is_finite() {
            bar.lo[i] = x[i] - reach;
            bar.m += 1;
        }
        if !bar.hi[i].is_finite() {
            bar.hi[i] = x[i] + reach;
            bar.m += 1;
        }
    }
    let mut start = x;
    start.push(s0);
    let target = |z: &[f64]| {
        let x = &z[..z.len() - 1];
        prog.constraint_values(x).into_iter().all(|g| g < 0.0)
    };
    let popts = BarrierOptions {
        tol: opts.tol.max(1e-10),
        ..*opts
    };
    let res = run(&bar, start, &popts, Some(&target));
    let mut z = res.x;
    z.pop();
    prog.constraint_values(&z)
        .into_iter()
        .all(|g| g < 0.0)
        .then_some(z)
}

/// Interior-point solve of `prog` from `x0`. An infeasible start triggers a
/// phase-I search; if that fails the status is [`SolveStatus::Infeasible`].
pub fn barrier_solve(
    prog: &SmoothConvexProgram<'_>,
    x0: &[f64],
    opts: &BarrierOptions,
) -> SolveOutcome {
    assert_eq!(x0.len(), prog.dim, "start point has wrong dimension");
    let start = match find_strictly_feasible(prog, x0, opts) {
        Some(x) => x,
        None => {
            let point = interior_start(prog, x0);
            return SolveOutcome {
                value: prog.objective_value(&point),
                point,
                status: SolveStatus::Infeasible,
                iterations: 0,
                kkt: f64::INFINITY,
            };
        }
    };
    let bar = Barrier::new(prog, None);
    let res = run(&bar, start, opts, None);
    let value = prog.objective_value(&res.x);
    let feasible = bar.max_constraint(&res.x) <= 0.0 || prog.constraints.is_empty();
    let kkt = if res.decrement.is_finite() {
        res.gap.max(res.decrement * res.decrement / res.t)
    } else {
        res.gap
    };
    SolveOutcome {
        point: res.x,
        value,
        status: if !feasible {
            SolveStatus::Infeasible
        } else if res.completed {
            SolveStatus::Optimal
        } else {
            SolveStatus::MaxIter
        },
        iterations: res.iterations,
        kkt,
    }
}
