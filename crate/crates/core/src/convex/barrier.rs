//! Log-barrier interior-point solver specialised to the inner problem.
//!
//! Variables are `(phi_j, p_j)` pairs for every in-deadline entry with a
//! positive gain; everything else is pinned at zero. The Newton matrix is block
//! diagonal over RBs (the exclusivity barrier and the quadratic NCP term couple
//! only entries of the same RB) plus one rank-one term per robot from the rate
//! constraint, so each Newton system costs a few small dense Cholesky
//! factorizations and a capacitance matrix of size `#robots`.

use std::f64::consts::LN_2;

use ndarray::Array3;

use super::{Penalty, SubproblemSolution, SubproblemSpec, SubproblemStatus};

const NEWTON_DECREMENT_TOL: f64 = 1e-10;
const ARMIJO: f64 = 0.01;
const MAX_BACKTRACK: usize = 80;

struct Var {
    m: usize,
    n: usize,
    k: usize,
    g: f64,
    rb: usize,
    /// Linear objective coefficient on `phi`.
    lin: f64,
}

struct Robot {
    vars: Vec<usize>,
    bits: f64,
    /// `qinv / (2 sqrt(l_anchor) ln 2)`: bits lost per unit of blocklength.
    slope: f64,
    offset: f64,
    active: bool,
}

struct Layout {
    vars: Vec<Var>,
    rbs: Vec<Vec<usize>>,
    robots: Vec<Robot>,
    quad: f64,
    constant: f64,
    pmax: f64,
}

impl Layout {
    fn build(spec: &SubproblemSpec) -> Layout {
        let (m_rbs, n_sym, k_rob) = spec.gains.shape();
        let (quad, constant) = match &spec.penalty {
            Penalty::Ncp { lambda } => {
                let sq: f64 = spec.phi_anchor.iter().map(|a| a * a).sum();
                (*lambda, 0.5 * lambda * sq)
            }
            _ => (0.0, 0.0),
        };
        let mut vars = Vec::new();
        let mut rbs = Vec::new();
        let mut robots: Vec<Robot> = (0..k_rob)
            .map(|k| {
                let la = spec.l_anchor[k];
                let slope = spec.qinv[k] / (2.0 * la.sqrt() * LN_2);
                Robot {
                    vars: Vec::new(),
                    bits: spec.payload_bits[k],
                    slope,
                    offset: slope * la,
                    active: spec.payload_bits[k] > 0.0,
                }
            })
            .collect();
        for m in 0..m_rbs {
            for n in 0..n_sym {
                let mut members = Vec::new();
                for k in 0..k_rob {
                    let g = spec.gains.get(m, n, k);
                    if !spec.deadline_mask[[m, n, k]] || g <= 0.0 {
                        continue;
                    }
                    let lin = match &spec.penalty {
                        Penalty::None => 0.0,
                        Penalty::Ncp { lambda } => -lambda * spec.phi_anchor[[m, n, k]],
                        Penalty::ReweightedL1 { lambda, weights } => lambda * weights[[m, n, k]],
                    };
                    let j = vars.len();
                    vars.push(Var {
                        m,
                        n,
                        k,
                        g,
                        rb: rbs.len(),
                        lin,
                    });
                    members.push(j);
                    robots[k].vars.push(j);
                }
                if !members.is_empty() {
                    rbs.push(members);
                }
            }
        }
        Layout {
            vars,
            rbs,
            robots,
            quad,
            constant,
            pmax: spec.pmax,
        }
    }

    /// Strictly interior start biased towards the anchor, at 90% of the power cap.
    fn initial_point(&self, spec: &SubproblemSpec) -> Vec<f64> {
        let mut z = vec![0.0; 2 * self.vars.len()];
        for members in &self.rbs {
            let anchor_sum: f64 = members
                .iter()
                .map(|&j| {
                    let v = &self.vars[j];
                    spec.phi_anchor[[v.m, v.n, v.k]]
                })
                .sum();
            let scale = anchor_sum.max(1.0);
            for &j in members {
                let v = &self.vars[j];
                let a = spec.phi_anchor[[v.m, v.n, v.k]] / scale;
                let phi = 0.45 / members.len() as f64 + 0.45 * a;
                z[2 * j] = phi;
                z[2 * j + 1] = 0.9 * self.pmax * phi;
            }
        }
        z
    }
}

struct Slacks {
    p: Vec<f64>,
    cap: Vec<f64>,
    excl: Vec<f64>,
    rb_sum: Vec<f64>,
    /// Rate slack per robot (`inf` when inactive).
    rate: Vec<f64>,
    sigma_ub: f64,
}

/// Sparse column of the low-rank part.
struct Column {
    idx: Vec<usize>,
    val: Vec<f64>,
}

/// Dense block over the `(phi, p)` pairs of one RB, Cholesky-factored.
struct RbBlock {
    vars: Vec<usize>,
    dense: Vec<f64>,
    chol: Vec<f64>,
}

impl RbBlock {
    fn gather(&self, x: &[f64]) -> Vec<f64> {
        let mut local = Vec::with_capacity(2 * self.vars.len());
        for &j in &self.vars {
            local.push(x[2 * j]);
            local.push(x[2 * j + 1]);
        }
        local
    }

    fn scatter(&self, local: &[f64], out: &mut [f64]) {
        for (i, &j) in self.vars.iter().enumerate() {
            out[2 * j] = local[2 * i];
            out[2 * j + 1] = local[2 * i + 1];
        }
    }
}

/// Newton matrix `A + V V^T`: `A` block diagonal by RB (plus the phase-one
/// scalar), `V` one column per robot. Solved as `x = A^-1 (b - V y)` with
/// `(I + V^T A^-1 V) y = V^T A^-1 b`.
struct Factored {
    /// Diagonal scaling `D`; the stored factors describe `D H D`.
    scale: Vec<f64>,
    blocks: Vec<RbBlock>,
    sigma_diag: f64,
    cols: Vec<Column>,
    cap_chol: Vec<f64>,
    r: usize,
}

impl Factored {
    fn apply_ainv(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        for blk in &self.blocks {
            let mut local = blk.gather(x);
            cholesky_solve(&blk.chol, local.len(), &mut local);
            blk.scatter(&local, &mut out);
        }
        if x.len() % 2 == 1 {
            let s = x.len() - 1;
            out[s] = x[s] / self.sigma_diag;
        }
        out
    }

    fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        for blk in &self.blocks {
            let local = blk.gather(x);
            let d = local.len();
            let prod: Vec<f64> = (0..d)
                .map(|a| (0..d).map(|b| blk.dense[a * d + b] * local[b]).sum())
                .collect();
            blk.scatter(&prod, &mut out);
        }
        if x.len() % 2 == 1 {
            let s = x.len() - 1;
            out[s] = x[s] * self.sigma_diag;
        }
        for col in &self.cols {
            let dot = col.dot(x);
            for (&i, &v) in col.idx.iter().zip(&col.val) {
                out[i] += v * dot;
            }
        }
        out
    }

    fn solve_once(&self, b: &[f64]) -> Vec<f64> {
        if self.r == 0 {
            return self.apply_ainv(b);
        }
        let ab = self.apply_ainv(b);
        let mut y: Vec<f64> = self.cols.iter().map(|c| c.dot(&ab)).collect();
        cholesky_solve(&self.cap_chol, self.r, &mut y);
        let mut rhs = b.to_vec();
        for (col, yi) in self.cols.iter().zip(&y) {
            for (&i, &v) in col.idx.iter().zip(&col.val) {
                rhs[i] -= v * yi;
            }
        }
        self.apply_ainv(&rhs)
    }

    /// Solves `H x = b` for the unscaled `H`.
    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let bs: Vec<f64> = b.iter().zip(&self.scale).map(|(v, d)| v * d).collect();
        let xs = self.solve_scaled(&bs);
        xs.iter().zip(&self.scale).map(|(v, d)| v * d).collect()
    }

    fn solve_scaled(&self, b: &[f64]) -> Vec<f64> {
        let mut x = self.solve_once(b);
        let bn = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for _ in 0..3 {
            let hx = self.matvec(&x);
            let res: Vec<f64> = b.iter().zip(&hx).map(|(bi, hi)| bi - hi).collect();
            let rn = res.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if rn <= 1e-15 * bn {
                break;
            }
            let dx = self.solve_once(&res);
            for (xi, di) in x.iter_mut().zip(dx) {
                *xi += di;
            }
        }
        x
    }
}

impl Column {
    fn dot(&self, x: &[f64]) -> f64 {
        self.idx.iter().zip(&self.val).map(|(&i, &v)| v * x[i]).sum()
    }
}

fn cholesky_in_place(a: &mut [f64], r: usize) -> bool {
    for j in 0..r {
        let mut d = a[j * r + j];
        for k in 0..j {
            d -= a[j * r + k] * a[j * r + k];
        }
        if !(d > 0.0) {
            return false;
        }
        let d = d.sqrt();
        a[j * r + j] = d;
        for i in (j + 1)..r {
            let mut s = a[i * r + j];
            for k in 0..j {
                s -= a[i * r + k] * a[j * r + k];
            }
            a[i * r + j] = s / d;
        }
    }
    true
}

fn cholesky_solve(l: &[f64], r: usize, b: &mut [f64]) {
    for i in 0..r {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * r + k] * b[k];
        }
        b[i] = s / l[i * r + i];
    }
    for i in (0..r).rev() {
        let mut s = b[i];
        for k in (i + 1)..r {
            s -= l[k * r + i] * b[k];
        }
        b[i] = s / l[i * r + i];
    }
}

struct Engine<'a> {
    lay: &'a Layout,
    /// Phase one: extra variable `sigma` relaxing every rate constraint,
    /// objective `sigma`, upper bound `sigma_max`.
    phase1: bool,
    sigma_max: f64,
}

struct Step {
    dz: Vec<f64>,
    decrement_sq: f64,
}

enum CenterOutcome {
    Centered,
    /// Rounding error stopped progress before the point was centered.
    Stalled,
    Budget,
}

struct Centering {
    outcome: CenterOutcome,
    /// Squared Newton decrement at the final point.
    decrement_sq: f64,
}

impl<'a> Engine<'a> {
    fn nz(&self) -> usize {
        2 * self.lay.vars.len() + usize::from(self.phase1)
    }

    fn num_constraints(&self) -> usize {
        let active = self
            .lay
            .robots
            .iter()
            .filter(|r| r.active && !r.vars.is_empty())
            .count();
        2 * self.lay.vars.len() + self.lay.rbs.len() + active + usize::from(self.phase1)
    }

    fn sigma(&self, z: &[f64]) -> f64 {
        if self.phase1 {
            z[z.len() - 1]
        } else {
            0.0
        }
    }

    fn slacks(&self, z: &[f64]) -> Option<Slacks> {
        let lay = self.lay;
        let nv = lay.vars.len();
        let mut p = Vec::with_capacity(nv);
        let mut cap = Vec::with_capacity(nv);
        for j in 0..nv {
            let (phi, pw) = (z[2 * j], z[2 * j + 1]);
            let c = lay.pmax * phi - pw;
            if !(pw > 0.0 && c > 0.0) {
                return None;
            }
            p.push(pw);
            cap.push(c);
        }
        let mut excl = Vec::with_capacity(lay.rbs.len());
        let mut rb_sum = Vec::with_capacity(lay.rbs.len());
        for members in &lay.rbs {
            let s: f64 = members.iter().map(|&j| z[2 * j]).sum();
            let e = 1.0 - s;
            if !(e > 0.0) {
                return None;
            }
            excl.push(e);
            rb_sum.push(s);
        }
        let sigma = self.sigma(z);
        let mut rate = Vec::with_capacity(lay.robots.len());
        for robot in &lay.robots {
            if !robot.active || robot.vars.is_empty() {
                rate.push(f64::INFINITY);
                continue;
            }
            let mut r = -robot.offset - robot.bits + sigma;
            for &j in &robot.vars {
                let (phi, pw) = (z[2 * j], z[2 * j + 1]);
                r += phi * (lay.vars[j].g * pw / phi).ln_1p() / LN_2 - robot.slope * phi;
            }
            if !(r > 0.0) {
                return None;
            }
            rate.push(r);
        }
        let sigma_ub = if self.phase1 {
            let s = self.sigma_max - sigma;
            if !(s > 0.0) {
                return None;
            }
            s
        } else {
            f64::INFINITY
        };
        Some(Slacks {
            p,
            cap,
            excl,
            rb_sum,
            rate,
            sigma_ub,
        })
    }

    fn objective(&self, z: &[f64], sl: &Slacks) -> f64 {
        if self.phase1 {
            return self.sigma(z);
        }
        let lay = self.lay;
        let mut f = lay.constant;
        for (j, v) in lay.vars.iter().enumerate() {
            f += z[2 * j + 1] + v.lin * z[2 * j];
        }
        f += 0.5 * lay.quad * sl.rb_sum.iter().map(|s| s * s).sum::<f64>();
        f
    }

    fn barrier(&self, sl: &Slacks) -> f64 {
        let mut b = 0.0;
        for (&p, &c) in sl.p.iter().zip(&sl.cap) {
            b -= p.ln() + c.ln();
        }
        for &e in &sl.excl {
            b -= e.ln();
        }
        for &r in &sl.rate {
            if r.is_finite() {
                b -= r.ln();
            }
        }
        if self.phase1 {
            b -= sl.sigma_ub.ln();
        }
        b
    }

    fn merit(&self, z: &[f64], t: f64) -> Option<(f64, Slacks)> {
        let sl = self.slacks(z)?;
        let v = t * self.objective(z, &sl) + self.barrier(&sl);
        v.is_finite().then_some((v, sl))
    }

    /// Gradient of `t f0 + barrier` and the factored Newton matrix.
    fn assemble(&self, z: &[f64], sl: &Slacks, t: f64) -> Option<(Vec<f64>, Factored)> {
        let lay = self.lay;
        let nv = lay.vars.len();
        let nz = self.nz();
        let pm = lay.pmax;
        let mut grad = vec![0.0; nz];
        let mut fwd = vec![[0.0f64; 3]; nv];
        let mut cols: Vec<Column> = Vec::with_capacity(lay.robots.len());

        for (j, v) in lay.vars.iter().enumerate() {
            let (p, c) = (sl.p[j], sl.cap[j]);
            let blk = &mut fwd[j];
            if !self.phase1 {
                grad[2 * j] += t * (v.lin + lay.quad * sl.rb_sum[v.rb]);
                grad[2 * j + 1] += t;
            }
            grad[2 * j + 1] -= 1.0 / p;
            blk[2] += 1.0 / (p * p);
            grad[2 * j] -= pm / c;
            grad[2 * j + 1] += 1.0 / c;
            let ic2 = 1.0 / (c * c);
            blk[0] += pm * pm * ic2;
            blk[1] -= pm * ic2;
            blk[2] += ic2;
        }

        let mut alphas = Vec::with_capacity(lay.rbs.len());
        for (ci, members) in lay.rbs.iter().enumerate() {
            let e = sl.excl[ci];
            alphas.push(1.0 / (e * e) + if self.phase1 { 0.0 } else { t * lay.quad });
            for &j in members {
                grad[2 * j] += 1.0 / e;
            }
        }

        let mut sigma_grad = 0.0;
        for (k, robot) in lay.robots.iter().enumerate() {
            let s = sl.rate[k];
            if !s.is_finite() {
                continue;
            }
            let w = 1.0 / s;
            let mut idx = Vec::with_capacity(2 * robot.vars.len() + 1);
            let mut val = Vec::with_capacity(2 * robot.vars.len() + 1);
            for &j in &robot.vars {
                let g = lay.vars[j].g;
                let (phi, p) = (z[2 * j], z[2 * j + 1]);
                let u = g * p / phi;
                let dphi = (u.ln_1p() - u / (1.0 + u)) / LN_2 - robot.slope;
                let dp = g / ((1.0 + u) * LN_2);
                grad[2 * j] -= w * dphi;
                grad[2 * j + 1] -= w * dp;
                // -Hess(rate) = c (p, -phi)(p, -phi)^T
                let curv = w * g * g / (LN_2 * phi * phi * phi * (1.0 + u) * (1.0 + u));
                let blk = &mut fwd[j];
                blk[0] += curv * p * p;
                blk[1] -= curv * p * phi;
                blk[2] += curv * phi * phi;
                idx.push(2 * j);
                val.push(w * dphi);
                idx.push(2 * j + 1);
                val.push(w * dp);
            }
            if self.phase1 {
                sigma_grad -= w;
                idx.push(nz - 1);
                val.push(w);
            }
            cols.push(Column { idx, val });
        }

        let mut sigma_diag = 0.0;
        if self.phase1 {
            let su = sl.sigma_ub;
            grad[nz - 1] = t + sigma_grad + 1.0 / su;
            sigma_diag = 1.0 / (su * su);
        }

        // Symmetric Jacobi scaling to unit diagonal before factoring; entries
        // span many orders of magnitude near the boundary.
        let mut diag = vec![0.0; nz];
        for (members, &alpha) in lay.rbs.iter().zip(&alphas) {
            for &j in members {
                diag[2 * j] = fwd[j][0] + alpha;
                diag[2 * j + 1] = fwd[j][2];
            }
        }
        if self.phase1 {
            diag[nz - 1] = sigma_diag;
        }
        for col in &cols {
            for (&i, &v) in col.idx.iter().zip(&col.val) {
                diag[i] += v * v;
            }
        }
        let mut scale = Vec::with_capacity(nz);
        for &d in &diag {
            if !(d > 0.0 && d.is_finite()) {
                return None;
            }
            scale.push(1.0 / d.sqrt());
        }
        for col in &mut cols {
            for (&i, v) in col.idx.iter().zip(col.val.iter_mut()) {
                *v *= scale[i];
            }
        }
        if self.phase1 {
            sigma_diag *= scale[nz - 1] * scale[nz - 1];
        }

        let mut blocks = Vec::with_capacity(lay.rbs.len());
        for (members, &alpha) in lay.rbs.iter().zip(&alphas) {
            let d = 2 * members.len();
            let mut dense = vec![0.0; d * d];
            for (a, &ja) in members.iter().enumerate() {
                let f = &fwd[ja];
                dense[2 * a * d + 2 * a] = f[0];
                dense[2 * a * d + 2 * a + 1] = f[1];
                dense[(2 * a + 1) * d + 2 * a] = f[1];
                dense[(2 * a + 1) * d + 2 * a + 1] = f[2];
                for b in 0..members.len() {
                    dense[2 * a * d + 2 * b] += alpha;
                }
            }
            let global = |local: usize| 2 * members[local / 2] + local % 2;
            for a in 0..d {
                for b in 0..d {
                    dense[a * d + b] *= scale[global(a)] * scale[global(b)];
                }
            }
            let mut chol = dense.clone();
            if !cholesky_in_place(&mut chol, d) {
                return None;
            }
            blocks.push(RbBlock {
                vars: members.clone(),
                dense,
                chol,
            });
        }

        let r = cols.len();
        let mut fac = Factored {
            scale,
            blocks,
            sigma_diag,
            cols,
            cap_chol: vec![0.0; r * r],
            r,
        };
        let mut y = Vec::with_capacity(r);
        for col in &fac.cols {
            let mut dense = vec![0.0; nz];
            for (&i, &v) in col.idx.iter().zip(&col.val) {
                dense[i] = v;
            }
            y.push(fac.apply_ainv(&dense));
        }
        for a in 0..r {
            for b in 0..=a {
                let val = fac.cols[a].dot(&y[b]) + if a == b { 1.0 } else { 0.0 };
                fac.cap_chol[a * r + b] = val;
                fac.cap_chol[b * r + a] = val;
            }
        }
        if !cholesky_in_place(&mut fac.cap_chol, r) {
            return None;
        }
        Some((grad, fac))
    }

    fn newton_step(&self, z: &[f64], sl: &Slacks, t: f64) -> Option<Step> {
        let (grad, fac) = self.assemble(z, sl, t)?;
        let x = fac.solve(&grad);
        let dz: Vec<f64> = x.iter().map(|v| -v).collect();
        let decrement_sq: f64 = grad.iter().zip(&x).map(|(g, v)| g * v).sum();
        Some(Step { dz, decrement_sq })
    }

    /// Largest step keeping the linear constraints strictly feasible.
    fn max_step(&self, z: &[f64], sl: &Slacks, dz: &[f64]) -> f64 {
        let lay = self.lay;
        let mut s: f64 = 1.0;
        let mut limit = |slack: f64, rate: f64| {
            if rate < 0.0 {
                s = s.min(0.99 * slack / -rate);
            }
        };
        for j in 0..lay.vars.len() {
            let (df, dp) = (dz[2 * j], dz[2 * j + 1]);
            limit(sl.p[j], dp);
            limit(sl.cap[j], lay.pmax * df - dp);
        }
        for (ci, members) in lay.rbs.iter().enumerate() {
            let d: f64 = members.iter().map(|&j| dz[2 * j]).sum();
            limit(sl.excl[ci], -d);
        }
        if self.phase1 {
            limit(sl.sigma_ub, -dz[z.len() - 1]);
        }
        s
    }

    /// Newton centering at barrier weight `t`, updating `z` and the Newton
    /// counter.
    fn center(&self, z: &mut Vec<f64>, t: f64, newton_count: &mut usize, newton_max: usize) -> Centering {
        let stalled = Centering {
            outcome: CenterOutcome::Stalled,
            decrement_sq: f64::INFINITY,
        };
        loop {
            let Some((merit, sl)) = self.merit(z, t) else {
                return stalled;
            };
            let Some(step) = self.newton_step(z, &sl, t) else {
                return stalled;
            };
            // Below this the merit change is lost in rounding.
            let resolution = NEWTON_DECREMENT_TOL.max(1e-14 * merit.abs());
            if !(step.decrement_sq >= -resolution) {
                return stalled;
            }
            if 0.5 * step.decrement_sq <= resolution {
                return Centering {
                    outcome: CenterOutcome::Centered,
                    decrement_sq: step.decrement_sq.max(0.0),
                };
            }
            if *newton_count >= newton_max {
                return Centering {
                    outcome: CenterOutcome::Budget,
                    decrement_sq: step.decrement_sq,
                };
            }
            *newton_count += 1;
            let mut s = self.max_step(z, &sl, &step.dz);
            let slope = -step.decrement_sq;
            let mut accepted = false;
            for _ in 0..MAX_BACKTRACK {
                let trial: Vec<f64> = z.iter().zip(&step.dz).map(|(a, d)| a + s * d).collect();
                if let Some((m_new, _)) = self.merit(&trial, t) {
                    if m_new <= merit + ARMIJO * s * slope {
                        accepted = m_new < merit;
                        *z = trial;
                        break;
                    }
                }
                s *= 0.5;
            }
            if !accepted {
                return stalled;
            }
        }
    }
}

fn grid_from(lay: &Layout, z: &[f64], shape: (usize, usize, usize)) -> (Array3<f64>, Array3<f64>) {
    let mut phi = Array3::zeros(shape);
    let mut p = Array3::zeros(shape);
    for (j, v) in lay.vars.iter().enumerate() {
        phi[[v.m, v.n, v.k]] = z[2 * j];
        p[[v.m, v.n, v.k]] = z[2 * j + 1];
    }
    (phi, p)
}

fn rate_slacks(lay: &Layout, sl: &Slacks) -> Vec<f64> {
    lay.robots
        .iter()
        .zip(&sl.rate)
        .map(|(r, &s)| if r.active { s } else { f64::INFINITY })
        .collect()
}

fn infeasible(shape: (usize, usize, usize), k_rob: usize, iters: usize, why: String) -> SubproblemSolution {
    SubproblemSolution {
        phi: Array3::zeros(shape),
        p: Array3::zeros(shape),
        objective: f64::INFINITY,
        rate_slack: vec![f64::NEG_INFINITY; k_rob],
        kkt_residual: f64::INFINITY,
        status: SubproblemStatus::Infeasible,
        newton_iterations: iters,
        certificate: Some(why),
    }
}

pub(super) fn solve(spec: &SubproblemSpec) -> SubproblemSolution {
    let lay = Layout::build(spec);
    let shape = spec.gains.shape();
    let k_rob = shape.2;
    let settings = &spec.settings;
    let mu = settings.barrier_factor;

    for (k, robot) in lay.robots.iter().enumerate() {
        if robot.active && robot.vars.is_empty() {
            return infeasible(
                shape,
                k_rob,
                0,
                format!("robot {k} has no usable RB within its deadline"),
            );
        }
    }
    if lay.vars.is_empty() {
        return SubproblemSolution {
            phi: Array3::zeros(shape),
            p: Array3::zeros(shape),
            objective: spec.penalty_value(&Array3::zeros(shape)),
            rate_slack: vec![f64::INFINITY; k_rob],
            kkt_residual: 0.0,
            status: SubproblemStatus::Optimal,
            newton_iterations: 0,
            certificate: None,
        };
    }

    let mut z = lay.initial_point(spec);
    let mut newton = 0usize;
    let main = Engine {
        lay: &lay,
        phase1: false,
        sigma_max: 0.0,
    };

    if main.slacks(&z).is_none() {
        // Phase one: minimize sigma subject to rate_k - B_k + sigma > 0.
        let deficit = lay
            .robots
            .iter()
            .filter(|r| r.active)
            .map(|r| {
                let mut rate = -r.offset - r.bits;
                for &j in &r.vars {
                    let (phi, pw) = (z[2 * j], z[2 * j + 1]);
                    rate += phi * (lay.vars[j].g * pw / phi).ln_1p() / LN_2 - r.slope * phi;
                }
                -rate
            })
            .fold(f64::NEG_INFINITY, f64::max);
        let sigma0 = deficit + 1.0;
        let p1 = Engine {
            lay: &lay,
            phase1: true,
            sigma_max: sigma0 + 1.0 + sigma0.abs(),
        };
        z.push(sigma0);
        let m1 = p1.num_constraints() as f64;
        let mut t = m1 / (sigma0.abs() + 1.0);
        loop {
            let outcome = p1.center(&mut z, t, &mut newton, settings.newton_max).outcome;
            let sigma = z[z.len() - 1];
            if sigma < 0.0 {
                break;
            }
            let lower = sigma - m1 / t;
            if lower > settings.feas_tol {
                return infeasible(
                    shape,
                    k_rob,
                    newton,
                    format!(
                        "phase one: some robot falls at least {lower:.3e} bits short at every feasible point"
                    ),
                );
            }
            if m1 / t < settings.feas_tol * 1e-3 || !matches!(outcome, CenterOutcome::Centered) {
                return infeasible(
                    shape,
                    k_rob,
                    newton,
                    format!("phase one: no strictly feasible point (best rate margin {:.3e} bits)", -sigma),
                );
            }
            t *= mu;
        }
        z.pop();
        if main.slacks(&z).is_none() {
            return infeasible(shape, k_rob, newton, "phase one ended outside the domain".into());
        }
    }
    let mut newton_main = newton;

    let m = main.num_constraints() as f64;
    let f_start = {
        let sl = main.slacks(&z).expect("interior start");
        main.objective(&z, &sl)
    };
    // Objectives are non-negative; the floor keeps relative tolerances
    // meaningful when the optimum is zero.
    let f_floor = 1e-3 * f_start.max(f64::MIN_POSITIVE);
    let mut t = m / (f_start + f_floor);
    let mut status = SubproblemStatus::Optimal;
    // Dual estimates are `1 / (t slack)`, so every complementarity product is
    // `1/t`; the centering error costs at most about `decrement^2 / t` in
    // objective. Both are reported relative to the objective.
    let residual = |z: &[f64], t: f64, decrement_sq: f64| {
        let sl = main.slacks(z).expect("iterates stay interior");
        let scale = t * (main.objective(z, &sl).abs() + f_floor);
        (decrement_sq.max(1.0) / scale, m / scale)
    };
    let mut best: Option<(Vec<f64>, f64)> = None;
    loop {
        let c = main.center(&mut z, t, &mut newton_main, settings.newton_max);
        match c.outcome {
            CenterOutcome::Centered => {
                let (kkt, gap) = residual(&z, t, c.decrement_sq);
                best = Some((z.clone(), kkt));
                if gap <= settings.gap_tol {
                    break;
                }
                t *= mu;
            }
            // Further barrier stages are beyond double precision; keep the
            // last centered point.
            CenterOutcome::Stalled => break,
            CenterOutcome::Budget => {
                status = SubproblemStatus::MaxIter;
                break;
            }
        }
    }
    let (z, kkt_residual) = best.unwrap_or((z, f64::INFINITY));
    let sl = main.slacks(&z).expect("iterates stay interior");
    let f = main.objective(&z, &sl);
    if status == SubproblemStatus::Optimal && kkt_residual > settings.kkt_tol {
        status = SubproblemStatus::MaxIter;
    }
    let (phi, p) = grid_from(&lay, &z, shape);
    SubproblemSolution {
        phi,
        p,
        objective: f,
        rate_slack: rate_slacks(&lay, &sl),
        kkt_residual,
        status,
        newton_iterations: newton_main,
        certificate: None,
    }
}
