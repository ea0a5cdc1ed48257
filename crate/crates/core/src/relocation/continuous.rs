use super::{check_inputs, soc_path, value_tol, Algorithm, Diagnostics, RelocationResult};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::storage::{relocation_cost, MobileStorageUnit, TransportModel};

/// Continuous piecewise-linear function given by its breakpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct Pwl<S> {
    pub xs: Vec<S>,
    pub ys: Vec<S>,
}

impl<S: Scalar> Pwl<S> {
    pub fn constant(lo: S, hi: S, v: S) -> Self {
        if hi > lo {
            Self {
                xs: vec![lo, hi],
                ys: vec![v, v],
            }
        } else {
            Self {
                xs: vec![lo],
                ys: vec![v],
            }
        }
    }

    /// Evaluates with the argument clamped to the domain.
    pub fn eval(&self, x: S) -> S {
        let n = self.xs.len();
        if n == 1 || x <= self.xs[0] {
            return self.ys[0];
        }
        if x >= self.xs[n - 1] {
            return self.ys[n - 1];
        }
        let k = self.xs.partition_point(|&v| v <= x);
        let (x0, x1) = (self.xs[k - 1], self.xs[k]);
        let (y0, y1) = (self.ys[k - 1], self.ys[k]);
        if x1 <= x0 {
            return y0.max(y1);
        }
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }

    /// Maximum over `[a, b]` and the smallest argument attaining it.
    pub fn max_on(&self, a: S, b: S) -> (S, S) {
        let mut best = (a, self.eval(a));
        let lo = self.xs.partition_point(|&v| v <= a);
        let hi = self.xs.partition_point(|&v| v < b);
        for k in lo..hi {
            if self.ys[k] > best.1 {
                best = (self.xs[k], self.ys[k]);
            }
        }
        let vb = self.eval(b);
        if vb > best.1 {
            best = (b, vb);
        }
        best
    }

    fn from_points(points: Vec<S>, f: impl Fn(S) -> S, xtol: S) -> Self {
        let xs = dedup(points, xtol);
        let ys: Vec<S> = xs.iter().map(|&x| f(x)).collect();
        simplify(xs, ys)
    }
}

fn dedup<S: Scalar>(mut pts: Vec<S>, xtol: S) -> Vec<S> {
    pts.sort_by(|a, b| a.partial_cmp(b).expect("finite breakpoints"));
    let mut out: Vec<S> = Vec::with_capacity(pts.len());
    for p in pts {
        match out.last() {
            Some(&l) if p - l <= xtol => {}
            _ => out.push(p),
        }
    }
    out
}

fn simplify<S: Scalar>(xs: Vec<S>, ys: Vec<S>) -> Pwl<S> {
    if xs.len() <= 2 {
        return Pwl { xs, ys };
    }
    let mut ox = vec![xs[0]];
    let mut oy = vec![ys[0]];
    for k in 1..xs.len() - 1 {
        let (x0, y0) = (*ox.last().unwrap(), *oy.last().unwrap());
        let (x1, y1) = (xs[k + 1], ys[k + 1]);
        let interp = y0 + (y1 - y0) * (xs[k] - x0) / (x1 - x0);
        if (ys[k] - interp).abs() > S::of(1e-13) * (S::one() + ys[k].abs()) {
            ox.push(xs[k]);
            oy.push(ys[k]);
        }
    }
    ox.push(*xs.last().unwrap());
    oy.push(*ys.last().unwrap());
    Pwl { xs: ox, ys: oy }
}

/// Points in `(p, q)` where two of the lines cross. Each line is given by
/// its values at `p` and `q`.
fn crossings<S: Scalar>(p: S, q: S, lines: &[(S, S)], out: &mut Vec<S>) {
    for (k, &(ap, aq)) in lines.iter().enumerate() {
        for &(bp, bq) in &lines[k + 1..] {
            let (dp, dq) = (ap - bp, aq - bq);
            if (dp > S::zero() && dq < S::zero()) || (dp < S::zero() && dq > S::zero()) {
                out.push(p + (q - p) * dp / (dp - dq));
            }
        }
    }
}

/// `M(s) = max { f(x) : x ∈ [s − c, s + c] ∩ [0, s̄] }`.
fn window_max<S: Scalar>(f: &Pwl<S>, c: S, cap: S, xtol: S) -> Pwl<S> {
    let lo = |s: S| (s - c).max(S::zero());
    let hi = |s: S| (s + c).min(cap);
    let mut pts = vec![S::zero(), cap, c, cap - c];
    for &x in &f.xs {
        pts.push(x - c);
        pts.push(x + c);
    }
    pts.retain(|&x| x >= S::zero() && x <= cap);
    let pts = dedup(pts, xtol);
    let mut extra = Vec::new();
    for w in pts.windows(2) {
        let (p, q) = (w[0], w[1]);
        let mid = (p + q) / S::of(2.0);
        let (a, b) = (lo(mid), hi(mid));
        let inner = f
            .xs
            .iter()
            .zip(&f.ys)
            .filter(|(x, _)| **x > a && **x < b)
            .map(|(_, y)| *y)
            .fold(S::neg_infinity(), S::max);
        let mut lines = vec![(f.eval(lo(p)), f.eval(lo(q))), (f.eval(hi(p)), f.eval(hi(q)))];
        if inner.is_finite() {
            lines.push((inner, inner));
        }
        crossings(p, q, &lines, &mut extra);
    }
    let mut all = pts;
    all.extend(extra);
    Pwl::from_points(all, |s| f.max_on(lo(s), hi(s)).1, xtol)
}

fn envelope<S: Scalar>(parts: &[Pwl<S>], xtol: S) -> Pwl<S> {
    if parts.len() == 1 {
        return parts[0].clone();
    }
    let pts = dedup(parts.iter().flat_map(|g| g.xs.iter().copied()).collect(), xtol);
    let mut extra = Vec::new();
    for w in pts.windows(2) {
        let lines: Vec<(S, S)> = parts.iter().map(|g| (g.eval(w[0]), g.eval(w[1]))).collect();
        crossings(w[0], w[1], &lines, &mut extra);
    }
    let mut all = pts;
    all.extend(extra);
    Pwl::from_points(
        all,
        |s| parts.iter().map(|g| g.eval(s)).fold(S::neg_infinity(), S::max),
        xtol,
    )
}

/// Exact optimum over trajectories and continuous SoC schedules by backward
/// induction on piecewise-linear value functions `V_t(i, s)`. Independent of
/// any SoC grid. Ties go to the smaller next SoC, then the smaller bus.
pub fn continuous_dp_relocation<S: Scalar>(
    unit: &MobileStorageUnit<S>,
    prices: &[Vec<S>],
    transport: &TransportModel<S>,
) -> Result<RelocationResult<S>> {
    let (periods, _) = check_inputs(prices, unit, transport)?;
    let cap = unit.capacity;
    if !(cap > S::zero()) {
        return Err(Error::Invalid(format!("unit {} has no capacity", unit.name)));
    }
    let xtol = S::of(1e-12) * (S::one() + cap);
    let buses = &unit.admissible;
    let na = buses.len();
    let power = unit.power();
    let limit = |a: usize, b: usize| (power * transport.operating_time(buses[a], buses[b])).max(S::zero());
    let zero = Pwl::constant(S::zero(), cap, S::zero());

    // values[t][a] is the value from the start of period t at bus a
    let mut values: Vec<Vec<Pwl<S>>> = vec![Vec::new(); periods + 1];
    values[periods] = vec![zero; na];
    for t in (0..periods).rev() {
        let mut layer = Vec::with_capacity(na);
        for a in 0..na {
            let price = prices[t][buses[a]];
            let targets: Vec<usize> = if t + 1 == periods {
                vec![a]
            } else {
                (0..na).filter(|&b| transport.can_move(buses[a], buses[b])).collect()
            };
            let parts: Vec<Pwl<S>> = targets
                .iter()
                .map(|&b| {
                    let next = &values[t + 1][b];
                    let f = Pwl {
                        xs: next.xs.clone(),
                        ys: next.xs.iter().zip(&next.ys).map(|(x, y)| *y - price * *x).collect(),
                    };
                    let m = window_max(&f, limit(a, b), cap, xtol);
                    let kd = if t + 1 == periods {
                        S::zero()
                    } else {
                        transport.move_cost(buses[a], buses[b])
                    };
                    Pwl {
                        ys: m.xs.iter().zip(&m.ys).map(|(x, y)| *y + price * *x - kd).collect(),
                        xs: m.xs,
                    }
                })
                .collect();
            layer.push(envelope(&parts, xtol));
        }
        values[t] = layer;
    }

    let a0 = buses.binary_search(&unit.initial_bus).expect("initial bus admissible");
    let s0 = unit.initial_soc.max(S::zero()).min(cap);
    let objective = values[0][a0].eval(s0);
    let (mut a, mut s) = (a0, s0);
    let mut trajectory = Vec::with_capacity(periods);
    let mut u = Vec::with_capacity(periods);
    for t in 0..periods {
        trajectory.push(buses[a]);
        let price = prices[t][buses[a]];
        let targets: Vec<usize> = if t + 1 == periods {
            vec![a]
        } else {
            (0..na).filter(|&b| transport.can_move(buses[a], buses[b])).collect()
        };
        let mut cands: Vec<(S, usize, S)> = Vec::new();
        for b in targets {
            let c = limit(a, b);
            let (lo, hi) = ((s - c).max(S::zero()), (s + c).min(cap));
            let next = &values[t + 1][b];
            let kd = if t + 1 == periods {
                S::zero()
            } else {
                transport.move_cost(buses[a], buses[b])
            };
            let mut xs = vec![lo, hi];
            xs.extend(next.xs.iter().copied().filter(|&x| x > lo && x < hi));
            for x in xs {
                cands.push((x, b, -price * (x - s) - kd + next.eval(x)));
            }
        }
        let best = cands.iter().map(|c| c.2).fold(S::neg_infinity(), S::max);
        let tol = value_tol(best);
        let mut pick: Option<(S, usize)> = None;
        for &(x, b, v) in &cands {
            if v < best - tol {
                continue;
            }
            pick = match pick {
                None => Some((x, b)),
                Some((px, pb)) if x < px - xtol || ((x - px).abs() <= xtol && b < pb) => Some((x, b)),
                keep => keep,
            };
        }
        let (x, b) = pick.expect("idling is always feasible");
        u.push(x - s);
        s = x;
        a = b;
    }
    let (travel, _) = relocation_cost(&[trajectory.clone()], transport);
    let mut warnings = Vec::new();
    if (s0 - unit.initial_soc).abs() > xtol {
        warnings.push(format!("initial SoC {} clamped to {s0}", unit.initial_soc));
    }
    Ok(RelocationResult {
        algorithm: Algorithm::ContinuousDp,
        unit: unit.name.clone(),
        soc: Some(soc_path(s0, &u)),
        schedule: Some(u),
        objective,
        gross_value: objective + travel,
        travel_cost: travel,
        trajectory,
        diagnostics: Diagnostics {
            warnings,
            ..Diagnostics::default()
        },
    })
}
