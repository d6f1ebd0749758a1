//! Primal-dual interior-point method for small second-order cone programs
//!
//! ```text
//! minimize c'v  subject to  G v + s = h,  s in K
//! ```
//!
//! where `K` is a product of a nonnegative orthant and second-order cones.
//! The solver runs a homogeneous self-dual embedding with Nesterov-Todd
//! scaling and Mehrotra predictor-corrector steps.
//!
//! Variables are split into a small dense "global" block and any number of
//! local blocks. Every linear row may touch the global block and at most one
//! local block; cone rows touch only the global block. The normal matrix is
//! then block-arrowhead and is solved through a Schur complement on the
//! global block.

/// Linear inequality `global . v_g + local . v_b <= h`.
#[derive(Debug, Clone, PartialEq)]
pub struct LpRow {
    /// Coefficients on the global block; empty means all zero.
    pub global: Vec<f64>,
    /// Local block the row touches, with `(index within block, coefficient)`.
    pub block: Option<usize>,
    pub local: Vec<(usize, f64)>,
    pub h: f64,
}

/// Cone constraint `h - G v_g in Q`, `Q = { s : s_0 >= ||s_1|| }`.
#[derive(Debug, Clone, PartialEq)]
pub struct SocConstraint {
    /// Rows of `G` over the global block.
    pub g: Vec<Vec<f64>>,
    pub h: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConeProgram {
    pub n_global: usize,
    pub blocks: Vec<usize>,
    pub c: Vec<f64>,
    pub lp: Vec<LpRow>,
    pub soc: Vec<SocConstraint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Optimal,
    /// A certificate of primal infeasibility was found.
    Infeasible,
    /// A certificate of dual infeasibility (unbounded objective) was found.
    Unbounded,
    MaxIter,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Settings {
    pub max_iter: usize,
    pub feastol: f64,
    pub abstol: f64,
    pub reltol: f64,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            max_iter: 100,
            feastol: 1e-8,
            abstol: 1e-8,
            reltol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConeSolution {
    pub v: Vec<f64>,
    pub s: Vec<f64>,
    pub z: Vec<f64>,
    pub status: Status,
    pub iterations: usize,
    pub primal_objective: f64,
    pub dual_objective: f64,
    /// Scaled primal and dual residual norms at the returned point.
    pub primal_residual: f64,
    pub dual_residual: f64,
}

struct Layout {
    n: usize,
    offsets: Vec<usize>,
    m_lp: usize,
    soc_offsets: Vec<usize>,
    m: usize,
}

impl ConeProgram {
    fn layout(&self) -> Layout {
        let mut offsets = Vec::with_capacity(self.blocks.len());
        let mut n = self.n_global;
        for &b in &self.blocks {
            offsets.push(n);
            n += b;
        }
        let m_lp = self.lp.len();
        let mut soc_offsets = Vec::with_capacity(self.soc.len());
        let mut m = m_lp;
        for q in &self.soc {
            soc_offsets.push(m);
            m += q.h.len();
        }
        Layout {
            n,
            offsets,
            m_lp,
            soc_offsets,
            m,
        }
    }

    pub fn n_vars(&self) -> usize {
        self.n_global + self.blocks.iter().sum::<usize>()
    }

    fn h_vec(&self, lay: &Layout) -> Vec<f64> {
        let mut h = Vec::with_capacity(lay.m);
        h.extend(self.lp.iter().map(|r| r.h));
        for q in &self.soc {
            h.extend_from_slice(&q.h);
        }
        h
    }

    /// `G v`.
    fn g_mul(&self, lay: &Layout, v: &[f64]) -> Vec<f64> {
        let ng = self.n_global;
        let mut out = Vec::with_capacity(lay.m);
        for row in &self.lp {
            let mut acc: f64 = row.global.iter().zip(&v[..ng]).map(|(a, b)| a * b).sum();
            if let Some(b) = row.block {
                let off = lay.offsets[b];
                acc += row.local.iter().map(|&(j, a)| a * v[off + j]).sum::<f64>();
            }
            out.push(acc);
        }
        for q in &self.soc {
            for g in &q.g {
                out.push(g.iter().zip(&v[..ng]).map(|(a, b)| a * b).sum());
            }
        }
        out
    }

    /// `G' w`.
    fn gt_mul(&self, lay: &Layout, w: &[f64]) -> Vec<f64> {
        let ng = self.n_global;
        let mut out = vec![0.0; lay.n];
        for (row, &wi) in self.lp.iter().zip(w) {
            for (o, a) in out[..ng].iter_mut().zip(&row.global) {
                *o += a * wi;
            }
            if let Some(b) = row.block {
                let off = lay.offsets[b];
                for &(j, a) in &row.local {
                    out[off + j] += a * wi;
                }
            }
        }
        for (q, &off) in self.soc.iter().zip(&lay.soc_offsets) {
            for (i, g) in q.g.iter().enumerate() {
                let wi = w[off + i];
                for (o, a) in out[..ng].iter_mut().zip(g) {
                    *o += a * wi;
                }
            }
        }
        out
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Nesterov-Todd scaling of one second-order cone:
/// `W = beta [[w0, w1'], [w1, I + w1 w1' / (1 + w0)]]` with `w' J w = 1`.
#[derive(Debug, Clone)]
struct SocScale {
    beta: f64,
    w: Vec<f64>,
}

impl SocScale {
    fn identity(dim: usize) -> Self {
        let mut w = vec![0.0; dim];
        w[0] = 1.0;
        Self { beta: 1.0, w }
    }

    fn new(s: &[f64], z: &[f64]) -> Self {
        let sj = (s[0] - norm(&s[1..])) * (s[0] + norm(&s[1..]));
        let zj = (z[0] - norm(&z[1..])) * (z[0] + norm(&z[1..]));
        let (sn, zn) = (sj.sqrt(), zj.sqrt());
        let sb: Vec<f64> = s.iter().map(|v| v / sn).collect();
        let zb: Vec<f64> = z.iter().map(|v| v / zn).collect();
        let gamma = ((1.0 + dot(&sb, &zb)) / 2.0).sqrt();
        let mut w: Vec<f64> = sb.iter().zip(&zb).map(|(a, b)| (a - b) / (2.0 * gamma)).collect();
        w[0] = (sb[0] + zb[0]) / (2.0 * gamma);
        Self {
            beta: (sj / zj).sqrt().sqrt(),
            w,
        }
    }

    fn apply(&self, v: &[f64], out: &mut [f64], inverse: bool) {
        let w0 = self.w[0];
        let w1 = &self.w[1..];
        let wv = dot(w1, &v[1..]);
        let (sign, scale) = if inverse {
            (-1.0, 1.0 / self.beta)
        } else {
            (1.0, self.beta)
        };
        out[0] = scale * (w0 * v[0] + sign * wv);
        let coef = wv / (1.0 + w0) + sign * v[0];
        for i in 1..v.len() {
            out[i] = scale * (v[i] + coef * w1[i - 1]);
        }
    }
}

struct Scaling {
    /// `sqrt(s / z)` per linear row.
    lp: Vec<f64>,
    soc: Vec<SocScale>,
}

impl Scaling {
    fn identity(prog: &ConeProgram) -> Self {
        Self {
            lp: vec![1.0; prog.lp.len()],
            soc: prog.soc.iter().map(|q| SocScale::identity(q.h.len())).collect(),
        }
    }

    fn new(lay: &Layout, s: &[f64], z: &[f64]) -> Self {
        let lp = (0..lay.m_lp).map(|i| (s[i] / z[i]).sqrt()).collect();
        let soc = lay
            .soc_offsets
            .iter()
            .enumerate()
            .map(|(k, &off)| {
                let end = lay.soc_offsets.get(k + 1).copied().unwrap_or(lay.m);
                SocScale::new(&s[off..end], &z[off..end])
            })
            .collect();
        Self { lp, soc }
    }

    fn apply(&self, lay: &Layout, v: &[f64], inverse: bool) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        for i in 0..lay.m_lp {
            out[i] = if inverse { v[i] / self.lp[i] } else { v[i] * self.lp[i] };
        }
        for (k, sc) in self.soc.iter().enumerate() {
            let off = lay.soc_offsets[k];
            let end = off + sc.w.len();
            sc.apply(&v[off..end], &mut out[off..end], inverse);
        }
        out
    }
}

/// Cone segments of a vector: `None` for linear entries, `Some(range)` per
/// second-order cone.
fn for_each_cone(lay: &Layout, mut f: impl FnMut(std::ops::Range<usize>, bool)) {
    for i in 0..lay.m_lp {
        f(i..i + 1, false);
    }
    for (k, &off) in lay.soc_offsets.iter().enumerate() {
        let end = lay.soc_offsets.get(k + 1).copied().unwrap_or(lay.m);
        f(off..end, true);
    }
}

/// Jordan product `a o b`.
fn jordan(lay: &Layout, a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len()];
    for_each_cone(lay, |r, soc| {
        if !soc {
            out[r.start] = a[r.start] * b[r.start];
            return;
        }
        let (a, b, o) = (&a[r.clone()], &b[r.clone()], &mut out[r]);
        o[0] = dot(a, b);
        for i in 1..a.len() {
            o[i] = a[0] * b[i] + b[0] * a[i];
        }
    });
    out
}

/// Solves `lambda o u = r` for `u`.
fn jordan_div(lay: &Layout, lambda: &[f64], r: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; r.len()];
    for_each_cone(lay, |rg, soc| {
        if !soc {
            out[rg.start] = r[rg.start] / lambda[rg.start];
            return;
        }
        let (l, r, o) = (&lambda[rg.clone()], &r[rg.clone()], &mut out[rg]);
        let l1 = norm(&l[1..]);
        let det = (l[0] - l1) * (l[0] + l1);
        o[0] = (l[0] * r[0] - dot(&l[1..], &r[1..])) / det;
        for i in 1..l.len() {
            o[i] = (r[i] - o[0] * l[i]) / l[0];
        }
    });
    out
}

/// Minimum eigenvalue over the cone product.
fn min_eig(lay: &Layout, v: &[f64]) -> f64 {
    let mut m = f64::INFINITY;
    for_each_cone(lay, |r, soc| {
        let e = if soc {
            v[r.start] - norm(&v[r.start + 1..r.end])
        } else {
            v[r.start]
        };
        m = m.min(e);
    });
    m
}

fn add_identity(lay: &Layout, v: &mut [f64], t: f64) {
    for_each_cone(lay, |r, _| v[r.start] += t);
}

/// Largest `a` with `v + a d` in the cone product (capped at `cap`).
fn max_step(lay: &Layout, v: &[f64], d: &[f64], cap: f64) -> f64 {
    let mut amax = cap;
    for_each_cone(lay, |r, soc| {
        if !soc {
            let i = r.start;
            if d[i] < 0.0 {
                amax = amax.min(-v[i] / d[i]);
            }
            return;
        }
        let (v, d) = (&v[r.clone()], &d[r]);
        let a = d[0] * d[0] - dot(&d[1..], &d[1..]);
        let b = v[0] * d[0] - dot(&v[1..], &d[1..]);
        let c = ((v[0] - norm(&v[1..])) * (v[0] + norm(&v[1..]))).max(0.0);
        let disc = b * b - a * c;
        let scale = a.abs().max(b.abs()).max(c.abs()).max(f64::MIN_POSITIVE);
        let root = if a.abs() <= 1e-14 * scale {
            if b < 0.0 {
                -c / (2.0 * b)
            } else {
                f64::INFINITY
            }
        } else if disc < 0.0 {
            f64::INFINITY
        } else {
            // Roots of a t^2 + 2 b t + c, computed without cancellation.
            let q = -(b + b.signum() * disc.sqrt());
            let (r1, r2) = if q != 0.0 { (q / a, c / q) } else { (0.0, 0.0) };
            let (lo, hi) = if r1 < r2 { (r1, r2) } else { (r2, r1) };
            if a > 0.0 {
                if lo > 0.0 {
                    lo
                } else {
                    f64::INFINITY
                }
            } else {
                hi.max(0.0)
            }
        };
        // The first component must stay nonnegative along the way.
        let lin = if d[0] < 0.0 { -v[0] / d[0] } else { f64::INFINITY };
        amax = amax.min(root).min(lin);
    });
    amax.max(0.0)
}

/// Dense symmetric positive definite factorisation, row-major, in place.
fn cholesky(a: &mut [f64], n: usize) -> bool {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > 0.0) || !d.is_finite() {
            return false;
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in (j + 1)..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
    }
    true
}

fn cholesky_solve(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in (i + 1)..n {
            s -= l[k * n + i] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

/// Factors a symmetric matrix, adding a growing diagonal shift if needed.
fn factor_regularized(a: &[f64], n: usize) -> Vec<f64> {
    let max_diag = (0..n).map(|i| a[i * n + i].abs()).fold(0.0, f64::max);
    let mut delta = 1e-14 * max_diag.max(1e-300);
    loop {
        let mut l = a.to_vec();
        for i in 0..n {
            l[i * n + i] += delta;
        }
        if cholesky(&mut l, n) {
            return l;
        }
        delta *= 100.0;
        if !delta.is_finite() {
            // Hopeless; return an identity factor so the caller can detect
            // failure through the residual checks.
            let mut id = vec![0.0; n * n];
            for i in 0..n {
                id[i * n + i] = 1.0;
            }
            return id;
        }
    }
}

struct BlockFactor {
    nb: usize,
    /// Cholesky factor of `H_bb`.
    chol: Vec<f64>,
    /// Coupling `H_gb`, ng x nb row-major.
    hgb: Vec<f64>,
    /// `H_bb^-1 H_gb'`, nb x ng row-major.
    y: Vec<f64>,
}

/// Factorised normal matrix `H = G' W^-2 G` in arrowhead form.
struct NormalFactor {
    ng: usize,
    blocks: Vec<BlockFactor>,
    schur: Vec<f64>,
}

impl NormalFactor {
    fn new(prog: &ConeProgram, scaling: &Scaling) -> Self {
        let ng = prog.n_global;
        let mut hgg = vec![0.0; ng * ng];
        let mut hbb: Vec<Vec<f64>> = prog.blocks.iter().map(|&b| vec![0.0; b * b]).collect();
        let mut hgb: Vec<Vec<f64>> = prog.blocks.iter().map(|&b| vec![0.0; ng * b]).collect();
        for (row, &w) in prog.lp.iter().zip(&scaling.lp) {
            let d = 1.0 / (w * w);
            for (i, gi) in row.global.iter().enumerate() {
                if *gi == 0.0 {
                    continue;
                }
                for (j, gj) in row.global.iter().enumerate() {
                    hgg[i * ng + j] += d * gi * gj;
                }
            }
            if let Some(b) = row.block {
                let nb = prog.blocks[b];
                for &(i, li) in &row.local {
                    for &(j, lj) in &row.local {
                        hbb[b][i * nb + j] += d * li * lj;
                    }
                    for (g, gv) in row.global.iter().enumerate() {
                        hgb[b][g * nb + i] += d * gv * li;
                    }
                }
            }
        }
        for (k, q) in prog.soc.iter().enumerate() {
            let sc = &scaling.soc[k];
            let dim = q.h.len();
            // Columns of W^-1 G.
            let mut col = vec![0.0; dim];
            let mut cols = vec![vec![0.0; dim]; ng];
            for (g, out) in cols.iter_mut().enumerate() {
                for (r, row) in q.g.iter().enumerate() {
                    col[r] = row[g];
                }
                sc.apply(&col, out, true);
            }
            for i in 0..ng {
                for j in 0..ng {
                    hgg[i * ng + j] += dot(&cols[i], &cols[j]);
                }
            }
        }

        let mut blocks = Vec::with_capacity(prog.blocks.len());
        let mut schur = hgg;
        for (b, &nb) in prog.blocks.iter().enumerate() {
            let l = factor_regularized(&hbb[b], nb);
            let mut y = vec![0.0; nb * ng];
            let mut colv = vec![0.0; nb];
            for g in 0..ng {
                colv.copy_from_slice(&hgb[b][g * nb..(g + 1) * nb]);
                cholesky_solve(&l, nb, &mut colv);
                for i in 0..nb {
                    y[i * ng + g] = colv[i];
                }
            }
            for i in 0..ng {
                for j in 0..ng {
                    let s: f64 = (0..nb).map(|t| hgb[b][i * nb + t] * y[t * ng + j]).sum();
                    schur[i * ng + j] -= s;
                }
            }
            blocks.push(BlockFactor {
                nb,
                chol: l,
                hgb: std::mem::take(&mut hgb[b]),
                y,
            });
        }
        let schur = factor_regularized(&schur, ng);
        Self { ng, blocks, schur }
    }

    fn solve(&self, lay: &Layout, rhs: &[f64]) -> Vec<f64> {
        let ng = self.ng;
        let mut rg = rhs[..ng].to_vec();
        let mut local: Vec<Vec<f64>> = Vec::with_capacity(self.blocks.len());
        for (b, blk) in self.blocks.iter().enumerate() {
            let nb = blk.nb;
            let off = lay.offsets[b];
            let mut t = rhs[off..off + nb].to_vec();
            cholesky_solve(&blk.chol, nb, &mut t);
            for (i, r) in rg.iter_mut().enumerate() {
                *r -= dot(&blk.hgb[i * nb..(i + 1) * nb], &t);
            }
            local.push(t);
        }
        cholesky_solve(&self.schur, ng, &mut rg);
        let mut out = vec![0.0; lay.n];
        out[..ng].copy_from_slice(&rg);
        for (b, blk) in self.blocks.iter().enumerate() {
            let off = lay.offsets[b];
            for i in 0..blk.nb {
                out[off + i] = local[b][i] - dot(&blk.y[i * ng..(i + 1) * ng], &rg);
            }
        }
        out
    }
}

struct Kkt<'a> {
    prog: &'a ConeProgram,
    lay: &'a Layout,
    scaling: &'a Scaling,
    factor: NormalFactor,
}

impl<'a> Kkt<'a> {
    fn new(prog: &'a ConeProgram, lay: &'a Layout, scaling: &'a Scaling) -> Self {
        Self {
            prog,
            lay,
            scaling,
            factor: NormalFactor::new(prog, scaling),
        }
    }

    fn w_inv2(&self, v: &[f64]) -> Vec<f64> {
        let t = self.scaling.apply(self.lay, v, true);
        self.scaling.apply(self.lay, &t, true)
    }

    /// Solves `[0 G'; G -W^2] [dv; dz] = [bx; bz]`.
    fn solve(&self, bx: &[f64], bz: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (prog, lay) = (self.prog, self.lay);
        let t = prog.gt_mul(lay, &self.w_inv2(bz));
        let rhs: Vec<f64> = bx.iter().zip(&t).map(|(a, b)| a + b).collect();
        let mut dv = self.factor.solve(lay, &rhs);
        for _ in 0..2 {
            let hv = prog.gt_mul(lay, &self.w_inv2(&prog.g_mul(lay, &dv)));
            let res: Vec<f64> = rhs.iter().zip(&hv).map(|(a, b)| a - b).collect();
            if norm(&res) <= 1e-15 * norm(&rhs).max(1e-300) {
                break;
            }
            let corr = self.factor.solve(lay, &res);
            for (d, c) in dv.iter_mut().zip(&corr) {
                *d += c;
            }
        }
        let gdv = prog.g_mul(lay, &dv);
        let diff: Vec<f64> = gdv.iter().zip(bz).map(|(a, b)| a - b).collect();
        (dv, self.w_inv2(&diff))
    }
}

/// Merit, (v, s, z, tau) and the residuals of the best iterate so far.
type Snapshot = (f64, Vec<f64>, Vec<f64>, Vec<f64>, f64, f64, f64);

/// Solves `prog`. Deterministic: identical inputs give identical outputs.
pub fn solve(prog: &ConeProgram, settings: &Settings) -> ConeSolution {
    let lay = prog.layout();
    let (n, m) = (lay.n, lay.m);
    assert_eq!(prog.c.len(), n, "objective length must match variable count");
    let h = prog.h_vec(&lay);
    let c = &prog.c;
    let degree = (lay.m_lp + prog.soc.len()) as f64;
    let (hnorm, cnorm) = (norm(&h).max(1.0), norm(c).max(1.0));

    // Starting point from least-squares solves with identity scaling.
    let id = Scaling::identity(prog);
    let kkt = Kkt::new(prog, &lay, &id);
    let (mut v, sneg) = kkt.solve(&vec![0.0; n], &h);
    let mut s: Vec<f64> = sneg.iter().map(|x| -x).collect();
    let negc: Vec<f64> = c.iter().map(|x| -x).collect();
    let (_, mut z) = kkt.solve(&negc, &vec![0.0; m]);
    let ts = -min_eig(&lay, &s);
    if ts >= -1e-8 * norm(&s).max(1.0) {
        add_identity(&lay, &mut s, 1.0 + ts);
    }
    let tz = -min_eig(&lay, &z);
    if tz >= -1e-8 * norm(&z).max(1.0) {
        add_identity(&lay, &mut z, 1.0 + tz);
    }
    drop(kkt);
    let (mut tau, mut kappa) = (1.0_f64, 1.0_f64);

    let mut status = Status::MaxIter;
    let mut iterations = 0;
    let (mut pres, mut dres);
    // Best iterate by the worst of the residuals and gap; returned when the
    // iteration budget runs out or rounding stalls progress.
    let mut best: Option<Snapshot> = None;
    loop {
        let gv = prog.g_mul(&lay, &v);
        let gtz = prog.gt_mul(&lay, &z);
        let rx: Vec<f64> = gtz.iter().zip(c).map(|(a, b)| a + b * tau).collect();
        let rz: Vec<f64> = (0..m).map(|i| gv[i] + s[i] - h[i] * tau).collect();
        let (cv, hz) = (dot(c, &v), dot(&h, &z));
        let rt = cv + hz + kappa;

        pres = norm(&rz) / tau / hnorm;
        dres = norm(&rx) / tau / cnorm;
        let pcost = cv / tau;
        let dcost = -hz / tau;
        let gap = dot(&s, &z) / (tau * tau);
        let relgap = if pcost < 0.0 {
            gap / -pcost
        } else if dcost > 0.0 {
            gap / dcost
        } else {
            f64::INFINITY
        };
        let merit = pres.max(dres).max(gap.min(relgap));
        if !merit.is_finite() {
            break;
        }
        if best.as_ref().is_none_or(|b| merit < b.0) {
            best = Some((merit, v.clone(), s.clone(), z.clone(), tau, pres, dres));
        }
        if pres <= settings.feastol && dres <= settings.feastol && (gap <= settings.abstol || relgap <= settings.reltol)
        {
            status = Status::Optimal;
            break;
        }
        if hz < 0.0 && norm(&gtz) / -hz / cnorm <= settings.feastol {
            status = Status::Infeasible;
            break;
        }
        if cv < 0.0 {
            let gs: Vec<f64> = gv.iter().zip(&s).map(|(a, b)| a + b).collect();
            if norm(&gs) / -cv / hnorm <= settings.feastol {
                status = Status::Unbounded;
                break;
            }
        }
        if iterations >= settings.max_iter {
            break;
        }
        iterations += 1;

        let scaling = Scaling::new(&lay, &s, &z);
        let lambda = scaling.apply(&lay, &z, false);
        let kkt = Kkt::new(prog, &lay, &scaling);
        let mu = (dot(&s, &z) + tau * kappa) / (degree + 1.0);
        let (v2, z2) = kkt.solve(&negc, &h);
        let denom_base = dot(c, &v2) + dot(&h, &z2);

        // Solves the linearised system
        //   G'dz + c dtau = bx,  G dv + ds - h dtau = bz,  c'dv + h'dz + dkappa = bt,
        //   W^-1 ds + W dz = u,  kappa dtau + tau dkappa = bk
        // and returns (dv, ds, dz, dtau, dkappa).
        let newton = |bx: &[f64], bz: &[f64], bt: f64, u: &[f64], bk: f64| {
            let wu = scaling.apply(&lay, u, false);
            let bzw: Vec<f64> = (0..m).map(|i| bz[i] - wu[i]).collect();
            let (v1, z1) = kkt.solve(bx, &bzw);
            let dtau = (bt - bk / tau - dot(c, &v1) - dot(&h, &z1)) / (denom_base - kappa / tau);
            let dv: Vec<f64> = (0..n).map(|i| v1[i] + dtau * v2[i]).collect();
            let dz: Vec<f64> = (0..m).map(|i| z1[i] + dtau * z2[i]).collect();
            let wdz = scaling.apply(&lay, &dz, false);
            let wwdz = scaling.apply(&lay, &wdz, false);
            let ds: Vec<f64> = (0..m).map(|i| wu[i] - wwdz[i]).collect();
            let dkappa = (bk - kappa * dtau) / tau;
            (dv, ds, dz, dtau, dkappa)
        };
        // Newton step for a given centring weight and complementarity target,
        // with two rounds of iterative refinement on the full system.
        let step = |sigma: f64, target: &[f64], bk: f64| {
            let u = jordan_div(&lay, &lambda, target);
            let bx: Vec<f64> = rx.iter().map(|r| -(1.0 - sigma) * r).collect();
            let bz: Vec<f64> = rz.iter().map(|r| -(1.0 - sigma) * r).collect();
            let bt = -(1.0 - sigma) * rt;
            let (mut dv, mut ds, mut dz, mut dtau, mut dkappa) = newton(&bx, &bz, bt, &u, bk);
            for _ in 0..2 {
                let gtdz = prog.gt_mul(&lay, &dz);
                let gdv = prog.g_mul(&lay, &dv);
                let winv_ds = scaling.apply(&lay, &ds, true);
                let w_dz = scaling.apply(&lay, &dz, false);
                let ex: Vec<f64> = (0..n).map(|i| bx[i] - gtdz[i] - c[i] * dtau).collect();
                let ez: Vec<f64> = (0..m).map(|i| bz[i] - gdv[i] - ds[i] + h[i] * dtau).collect();
                let et = bt - dot(c, &dv) - dot(&h, &dz) - dkappa;
                let eu: Vec<f64> = (0..m).map(|i| u[i] - winv_ds[i] - w_dz[i]).collect();
                let ek = bk - kappa * dtau - tau * dkappa;
                let (cv, cs, cz, ct, ck) = newton(&ex, &ez, et, &eu, ek);
                if !ct.is_finite() {
                    break;
                }
                dv.iter_mut().zip(&cv).for_each(|(a, b)| *a += b);
                ds.iter_mut().zip(&cs).for_each(|(a, b)| *a += b);
                dz.iter_mut().zip(&cz).for_each(|(a, b)| *a += b);
                dtau += ct;
                dkappa += ck;
            }
            (dv, ds, dz, dtau, dkappa)
        };
        let step_len = |ds: &[f64], dz: &[f64], dtau: f64, dkappa: f64| {
            let mut a = max_step(&lay, &s, ds, f64::INFINITY).min(max_step(&lay, &z, dz, f64::INFINITY));
            if dtau < 0.0 {
                a = a.min(-tau / dtau);
            }
            if dkappa < 0.0 {
                a = a.min(-kappa / dkappa);
            }
            a
        };

        let ll = jordan(&lay, &lambda, &lambda);
        let target_aff: Vec<f64> = ll.iter().map(|x| -x).collect();
        let (_, dsa, dza, dta, dka) = step(0.0, &target_aff, -tau * kappa);
        let alpha_aff = step_len(&dsa, &dza, dta, dka).min(1.0);
        let sigma = (1.0 - alpha_aff).powi(3);

        let winv_dsa = scaling.apply(&lay, &dsa, true);
        let w_dza = scaling.apply(&lay, &dza, false);
        let corr = jordan(&lay, &winv_dsa, &w_dza);
        let mut target = vec![0.0; m];
        for_each_cone(&lay, |r, _| target[r.start] = sigma * mu);
        for i in 0..m {
            target[i] -= ll[i] + corr[i];
        }
        let bk = sigma * mu - tau * kappa - dta * dka;
        let (dv, ds, dz, dtau, dkappa) = step(sigma, &target, bk);
        let alpha = (0.99 * step_len(&ds, &dz, dtau, dkappa)).min(1.0);
        if !(alpha > 1e-12) {
            break;
        }

        for i in 0..n {
            v[i] += alpha * dv[i];
        }
        for i in 0..m {
            s[i] += alpha * ds[i];
            z[i] += alpha * dz[i];
        }
        tau += alpha * dtau;
        kappa += alpha * dkappa;
    }

    if status == Status::MaxIter {
        if let Some((_, bv, bs, bz, bt, bp, bd)) = best {
            (v, s, z, tau, pres, dres) = (bv, bs, bz, bt, bp, bd);
        }
    }
    let scale = if status == Status::Optimal || status == Status::MaxIter {
        1.0 / tau
    } else {
        1.0
    };
    let v: Vec<f64> = v.iter().map(|x| x * scale).collect();
    let s: Vec<f64> = s.iter().map(|x| x * scale).collect();
    let z: Vec<f64> = z.iter().map(|x| x * scale).collect();
    ConeSolution {
        primal_objective: dot(c, &v),
        dual_objective: -dot(&h, &z),
        v,
        s,
        z,
        status,
        iterations,
        primal_residual: pres,
        dual_residual: dres,
    }
}
