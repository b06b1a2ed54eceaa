//! Infeasible-start primal-dual path following with the HKM direction and
//! Mehrotra predictor-corrector steps, carried out in double-double.
//!
//! Moment relaxations are degenerate: zero-cost mass may sit anywhere on
//! the optimal face, so the Schur complement condition number grows like
//! `1/mu^2`. In plain `f64` the dual residual stops improving around
//! `1e-6`; the extra precision pushes that floor far below the default
//! tolerance. The iteration also keeps the best iterate seen and returns it
//! when progress stalls.

use nalgebra::{DMatrix, SymmetricEigen};

use super::dd::{Dd, DdLu, DdMat};
use super::{ConicProgram, SolveOptions, SolveStatus};

const STEP_FRACTION: f64 = 0.98;
const STALL_ITERATIONS: usize = 10;

pub(super) struct IpmOutput {
    pub status: SolveStatus,
    pub y: Vec<f64>,
    pub lambda: Vec<f64>,
    pub z: Vec<DMatrix<f64>>,
    pub iterations: usize,
    pub merit: f64,
    pub weak_duality_violations: usize,
}

struct Block {
    side: usize,
    b: DdMat,
    b_norm: f64,
    /// Coefficient matrices with both triangles listed.
    vars: Vec<(usize, Vec<(usize, usize, f64)>)>,
}

struct Data {
    nvar: usize,
    rows: usize,
    c: Vec<Dd>,
    f: DdMat,
    g: Vec<Dd>,
    blocks: Vec<Block>,
    c_scale: f64,
    row_scale: Vec<f64>,
    g_norm: f64,
    c_norm: f64,
    /// Variables touched by no block and no equality.
    dead: Vec<bool>,
}

#[derive(Clone)]
struct Iterate {
    y: Vec<Dd>,
    lam: Vec<Dd>,
    s: Vec<DdMat>,
    z: Vec<DdMat>,
}

fn prepare(p: &ConicProgram) -> Data {
    let rows = p.num_equalities();
    let nvar = p.nvar;
    let row_scale: Vec<f64> = (0..rows)
        .map(|r| {
            let m = p.eq_matrix.row(r).amax();
            if m > 0.0 {
                1.0 / m
            } else {
                1.0
            }
        })
        .collect();
    let c2 = p.objective.iter().map(|v| v * v).sum::<f64>().sqrt();
    let c_scale = if c2 > 0.0 { c2 } else { 1.0 };
    let c: Vec<Dd> = p.objective.iter().map(|&v| Dd::new(v) / Dd::new(c_scale)).collect();
    let f = DdMat::from_f64(rows, nvar, |r, k| p.eq_matrix[(r, k)] * row_scale[r]);
    let g: Vec<Dd> = (0..rows).map(|r| Dd::new(p.eq_rhs[r]).mul_f64(row_scale[r])).collect();
    let mut touched = vec![false; nvar];
    let blocks = p
        .blocks
        .iter()
        .map(|blk| {
            let mut merged: std::collections::BTreeMap<usize, Vec<(usize, usize, f64)>> = Default::default();
            for (var, entries) in &blk.coeffs {
                let list = merged.entry(*var).or_default();
                for &(i, j, v) in entries {
                    list.push((i, j, v));
                    if i != j {
                        list.push((j, i, v));
                    }
                }
                touched[*var] = true;
            }
            let side = blk.side();
            Block {
                side,
                b: DdMat::from_f64(side, side, |i, j| blk.constant[(i, j)]),
                b_norm: blk.constant.amax(),
                vars: merged.into_iter().collect(),
            }
        })
        .collect();
    for k in 0..nvar {
        if (0..rows).any(|r| p.eq_matrix[(r, k)] != 0.0) {
            touched[k] = true;
        }
    }
    Data {
        nvar,
        rows,
        g_norm: g.iter().fold(0.0, |a, v| a.max(v.hi.abs())),
        c_norm: c.iter().fold(0.0, |a, v| a.max(v.hi.abs())),
        c,
        f,
        g,
        blocks,
        c_scale,
        row_scale,
        dead: touched.iter().map(|t| !t).collect(),
    }
}

fn apply_a(b: &Block, y: &[Dd]) -> DdMat {
    let mut out = DdMat::zeros(b.side, b.side);
    for (a, entries) in &b.vars {
        let ya = y[*a];
        if ya.hi == 0.0 {
            continue;
        }
        for &(i, j, v) in entries {
            *out.at_mut(i, j) += ya.mul_f64(v);
        }
    }
    out
}

fn adjoint(d: &Data, xs: &[DdMat]) -> Vec<Dd> {
    let mut out = vec![Dd::ZERO; d.nvar];
    for (b, x) in d.blocks.iter().zip(xs) {
        for (a, entries) in &b.vars {
            let mut s = Dd::ZERO;
            for &(i, j, v) in entries {
                s += x.at(i, j).mul_f64(v);
            }
            out[*a] += s;
        }
    }
    out
}

fn f_times(d: &Data, y: &[Dd]) -> Vec<Dd> {
    (0..d.rows)
        .map(|r| (0..d.nvar).fold(Dd::ZERO, |acc, k| acc + d.f.at(r, k) * y[k]))
        .collect()
}

fn ft_times(d: &Data, l: &[Dd]) -> Vec<Dd> {
    (0..d.nvar)
        .map(|k| (0..d.rows).fold(Dd::ZERO, |acc, r| acc + d.f.at(r, k) * l[r]))
        .collect()
}

fn dot(a: &[Dd], b: &[Dd]) -> Dd {
    a.iter().zip(b).fold(Dd::ZERO, |acc, (&x, &y)| acc + x * y)
}

fn inf_norm(v: &[Dd]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.to_f64().abs()))
}

/// `M_ab = tr(A_a Z A_b S^-1)`, accumulated block by block through
/// `T_a = S^-1 A_a Z`.
fn schur(d: &Data, sinv: &[DdMat], z: &[DdMat]) -> DdMat {
    let mut m = DdMat::zeros(d.nvar, d.nvar);
    for ((b, si), zj) in d.blocks.iter().zip(sinv).zip(z) {
        let s = b.side;
        let mut t = DdMat::zeros(s, s);
        for (ia, (a, ea)) in b.vars.iter().enumerate() {
            t.data.iter_mut().for_each(|v| *v = Dd::ZERO);
            for &(i, j, v) in ea {
                let zrow = &zj.data[j * s..(j + 1) * s];
                for l in 0..s {
                    let coef = si.at(l, i).mul_f64(v);
                    let trow = &mut t.data[l * s..(l + 1) * s];
                    for (tv, &zv) in trow.iter_mut().zip(zrow) {
                        *tv += coef * zv;
                    }
                }
            }
            for (bb, eb) in &b.vars[ia..] {
                let val = eb.iter().fold(Dd::ZERO, |acc, &(k, l, w)| acc + t.at(l, k).mul_f64(w));
                *m.at_mut(*a, *bb) += val;
                if a != bb {
                    *m.at_mut(*bb, *a) += val;
                }
            }
        }
    }
    for k in 0..d.nvar {
        if d.dead[k] {
            *m.at_mut(k, k) += Dd::ONE;
        }
    }
    m
}

/// `sym(X Y W)` for square matrices.
fn sym_prod(x: &DdMat, y: &DdMat, w: &DdMat) -> DdMat {
    let mut p = x.matmul(y).matmul(w);
    p.symmetrize();
    p
}

struct Factors {
    sinv: Vec<DdMat>,
    s_linv: Vec<DdMat>,
    z_linv: Vec<DdMat>,
}

fn factor(it: &Iterate) -> Option<Factors> {
    let mut sinv = Vec::with_capacity(it.s.len());
    let mut s_linv = Vec::with_capacity(it.s.len());
    let mut z_linv = Vec::with_capacity(it.s.len());
    for (s, z) in it.s.iter().zip(&it.z) {
        let ls = s.cholesky()?.lower_inverse();
        let lz = z.cholesky()?.lower_inverse();
        sinv.push(ls.transpose().matmul(&ls));
        s_linv.push(ls);
        z_linv.push(lz);
    }
    Some(Factors { sinv, s_linv, z_linv })
}

/// Largest `alpha` with `X + alpha dX` PSD, given `L^-1` for `X = L L'`.
fn max_step(linv: &DdMat, dx: &DdMat) -> f64 {
    let w = linv.matmul(dx).matmul(&linv.transpose()).to_f64();
    let w = (&w + w.transpose()) * 0.5;
    let lmin = SymmetricEigen::new(w).eigenvalues.min();
    if lmin >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / lmin
    }
}

struct Direction {
    dy: Vec<Dd>,
    dlam: Vec<Dd>,
    ds: Vec<DdMat>,
    dz: Vec<DdMat>,
}

#[allow(clippy::too_many_arguments)]
fn direction(
    d: &Data,
    it: &Iterate,
    fac: &Factors,
    lu: &DdLu,
    rs: &[DdMat],
    rd: &[Dd],
    rf: &[Dd],
    rc: &[DdMat],
) -> Direction {
    // rhs1 = A^*(Rc - sym(Z Rs S^-1)) - Rd
    let inner: Vec<DdMat> = rc
        .iter()
        .zip(rs)
        .zip(&it.z)
        .zip(&fac.sinv)
        .map(|(((rcj, rsj), zj), sij)| {
            let mut t = rcj.clone();
            t.axpy(-Dd::ONE, &sym_prod(zj, rsj, sij));
            t
        })
        .collect();
    let adj = adjoint(d, &inner);
    let mut rhs: Vec<Dd> = adj.iter().zip(rd).map(|(&a, &r)| a - r).collect();
    rhs.extend_from_slice(rf);
    let sol = lu.solve(&rhs);
    let dy: Vec<Dd> = sol[..d.nvar].to_vec();
    let dlam: Vec<Dd> = sol[d.nvar..].iter().map(|&v| -v).collect();
    let ds: Vec<DdMat> = d
        .blocks
        .iter()
        .zip(rs)
        .map(|(b, rsj)| {
            let mut t = apply_a(b, &dy);
            t.axpy(Dd::ONE, rsj);
            t
        })
        .collect();
    let dz: Vec<DdMat> = rc
        .iter()
        .zip(&ds)
        .zip(&it.z)
        .zip(&fac.sinv)
        .map(|(((rcj, dsj), zj), sij)| {
            let mut t = rcj.clone();
            t.axpy(-Dd::ONE, &sym_prod(zj, dsj, sij));
            t
        })
        .collect();
    Direction { dy, dlam, ds, dz }
}

fn step_lengths(fac: &Factors, dir: &Direction, fraction: f64) -> (f64, f64) {
    let ap = fac.s_linv.iter().zip(&dir.ds).map(|(l, ds)| max_step(l, ds)).fold(f64::INFINITY, f64::min);
    let ad = fac.z_linv.iter().zip(&dir.dz).map(|(l, dz)| max_step(l, dz)).fold(f64::INFINITY, f64::min);
    ((fraction * ap).min(1.0), (fraction * ad).min(1.0))
}

struct Measures {
    merit: f64,
    pobj: f64,
    dobj: f64,
    pinf: f64,
    dinf: f64,
}

pub(super) fn run(p: &ConicProgram, opts: SolveOptions) -> IpmOutput {
    let d = prepare(p);
    let total_side: usize = d.blocks.iter().map(|b| b.side).sum();
    let mut it = Iterate {
        y: vec![Dd::ZERO; d.nvar],
        lam: vec![Dd::ZERO; d.rows],
        s: d.blocks.iter().map(|b| DdMat::identity(b.side, 10.0 * b.b_norm.max(1.0))).collect(),
        z: d.blocks.iter().map(|b| DdMat::identity(b.side, 10.0 * b.b_norm.max(1.0))).collect(),
    };
    let mut best: Option<(Iterate, f64, usize)> = None;
    let mut violations = 0;
    let mut status = SolveStatus::MaxIterations;
    let mut iterations = 0;

    // objective unbounded along a variable no constraint touches
    if (0..d.nvar).any(|k| d.dead[k] && d.c[k].hi != 0.0) {
        return output(&d, &it, SolveStatus::DualInfeasible, 0, f64::INFINITY, 0);
    }

    for iter in 0..=opts.max_iter {
        iterations = iter;
        let rs: Vec<DdMat> = d
            .blocks
            .iter()
            .zip(&it.s)
            .map(|(b, s)| {
                let mut t = apply_a(b, &it.y);
                t.axpy(Dd::ONE, &b.b);
                t.axpy(-Dd::ONE, s);
                t
            })
            .collect();
        let adj_z = adjoint(&d, &it.z);
        let ftl = ft_times(&d, &it.lam);
        let rd: Vec<Dd> = (0..d.nvar).map(|k| d.c[k] - adj_z[k] - ftl[k]).collect();
        let fy = f_times(&d, &it.y);
        let rf: Vec<Dd> = (0..d.rows).map(|r| d.g[r] - fy[r]).collect();

        let pobj = dot(&d.c, &it.y);
        let bz = d.blocks.iter().zip(&it.z).fold(Dd::ZERO, |acc, (b, z)| acc + b.b.dot(z));
        let dobj = dot(&d.g, &it.lam) - bz;
        let sz = it.s.iter().zip(&it.z).fold(Dd::ZERO, |acc, (s, z)| acc + s.dot(z));
        let mu = sz.to_f64() / total_side.max(1) as f64;

        let corrected = pobj - dobj - dot(&rd, &it.y)
            - rs.iter().zip(&it.z).fold(Dd::ZERO, |acc, (r, z)| acc + r.dot(z))
            + dot(&it.lam, &rf);
        let scale = 1.0 + pobj.to_f64().abs() + dobj.to_f64().abs() + sz.to_f64().abs();
        if corrected.to_f64() < -1e-20 * scale {
            violations += 1;
        }

        let m = measures(&d, &rs, &rd, &rf, pobj, dobj);
        if total_side == 0 && d.rows == 0 {
            status = SolveStatus::Optimal;
            break;
        }
        let improved = best.as_ref().is_none_or(|(_, bm, _)| m.merit < *bm);
        if improved {
            best = Some((it.clone(), m.merit, iter));
        }
        if m.merit <= opts.tol {
            status = SolveStatus::Optimal;
            break;
        }
        let lam_norm = inf_norm(&it.lam).max(it.z.iter().fold(0.0, |a, z| a.max(z.max_abs())));
        if m.dobj > 1e8 * (1.0 + m.pobj.abs().min(1e8)) && m.dinf <= 1e-6 && lam_norm > 1e8 {
            status = SolveStatus::PrimalInfeasible;
            break;
        }
        let y_norm = inf_norm(&it.y);
        if m.pobj < -1e8 && m.pinf <= 1e-6 && y_norm > 1e8 {
            status = SolveStatus::DualInfeasible;
            break;
        }
        if iter == opts.max_iter {
            break;
        }
        if let Some((_, _, bi)) = &best {
            if iter >= bi + STALL_ITERATIONS {
                status = SolveStatus::NumericalFailure;
                break;
            }
        }

        let Some(fac) = factor(&it) else {
            status = SolveStatus::NumericalFailure;
            break;
        };
        let schur_m = schur(&d, &fac.sinv, &it.z);
        let n = d.nvar + d.rows;
        let mut k = DdMat::zeros(n, n);
        for i in 0..d.nvar {
            for j in 0..d.nvar {
                *k.at_mut(i, j) = schur_m.at(i, j);
            }
        }
        for r in 0..d.rows {
            for j in 0..d.nvar {
                let v = d.f.at(r, j);
                *k.at_mut(d.nvar + r, j) = v;
                *k.at_mut(j, d.nvar + r) = v;
            }
        }
        let Some(lu) = DdLu::new(k) else {
            status = SolveStatus::NumericalFailure;
            break;
        };

        let rc_pred: Vec<DdMat> = it.z.iter().map(|z| {
            let mut t = z.clone();
            t.data.iter_mut().for_each(|v| *v = -*v);
            t
        }).collect();
        let pred = direction(&d, &it, &fac, &lu, &rs, &rd, &rf, &rc_pred);
        let (ap, ad) = step_lengths(&fac, &pred, 1.0);
        let mut sz_aff = Dd::ZERO;
        for j in 0..it.s.len() {
            let mut s = it.s[j].clone();
            s.axpy(Dd::new(ap), &pred.ds[j]);
            let mut z = it.z[j].clone();
            z.axpy(Dd::new(ad), &pred.dz[j]);
            sz_aff += s.dot(&z);
        }
        let mu_aff = sz_aff.to_f64() / total_side.max(1) as f64;
        let sigma = if mu > 0.0 { (mu_aff / mu).clamp(0.0, 1.0).powi(3) } else { 0.0 };

        let rc_corr: Vec<DdMat> = (0..it.s.len())
            .map(|j| {
                let mut t = fac.sinv[j].clone();
                t.data.iter_mut().for_each(|v| *v = v.mul_f64(sigma * mu));
                t.axpy(-Dd::ONE, &it.z[j]);
                t.axpy(-Dd::ONE, &sym_prod(&pred.dz[j], &pred.ds[j], &fac.sinv[j]));
                t
            })
            .collect();
        let corr = direction(&d, &it, &fac, &lu, &rs, &rd, &rf, &rc_corr);
        let (ap, ad) = step_lengths(&fac, &corr, STEP_FRACTION);
        if !(ap.is_finite() && ad.is_finite()) {
            status = SolveStatus::NumericalFailure;
            break;
        }
        let (ap, ad) = (Dd::new(ap), Dd::new(ad));
        for k in 0..d.nvar {
            it.y[k] += ap * corr.dy[k];
        }
        for r in 0..d.rows {
            it.lam[r] += ad * corr.dlam[r];
        }
        for j in 0..it.s.len() {
            it.s[j].axpy(ap, &corr.ds[j]);
            it.s[j].symmetrize();
            it.z[j].axpy(ad, &corr.dz[j]);
            it.z[j].symmetrize();
        }
    }

    match status {
        SolveStatus::Optimal | SolveStatus::PrimalInfeasible | SolveStatus::DualInfeasible => {
            let merit = best.as_ref().map_or(f64::INFINITY, |b| b.1);
            let final_merit = if status == SolveStatus::Optimal { merit } else { f64::INFINITY };
            output(&d, &it, status, iterations, final_merit, violations)
        }
        _ => {
            let (b, merit, _) = best.expect("at least one iterate");
            let status = if merit <= opts.tol { SolveStatus::Optimal } else { status };
            output(&d, &b, status, iterations, merit, violations)
        }
    }
}

fn measures(d: &Data, rs: &[DdMat], rd: &[Dd], rf: &[Dd], pobj: Dd, dobj: Dd) -> Measures {
    let pinf_eq = inf_norm(rf) / (1.0 + d.g_norm);
    let pinf_blk = rs
        .iter()
        .zip(&d.blocks)
        .fold(0.0f64, |a, (r, b)| a.max(r.max_abs() / (1.0 + b.b_norm)));
    let pinf = pinf_eq.max(pinf_blk);
    let dinf = inf_norm(rd) / (1.0 + d.c_norm);
    let pu = d.c_scale * pobj.to_f64();
    let du = d.c_scale * dobj.to_f64();
    let relgap = (pu - du).abs() / (0.5 * (pu.abs() + du.abs())).max(1.0);
    Measures { merit: pinf.max(dinf).max(relgap), pobj: pu, dobj: du, pinf, dinf }
}

fn output(d: &Data, it: &Iterate, status: SolveStatus, iterations: usize, merit: f64, violations: usize) -> IpmOutput {
    IpmOutput {
        status,
        y: it.y.iter().map(|v| v.to_f64()).collect(),
        lambda: it
            .lam
            .iter()
            .zip(&d.row_scale)
            .map(|(l, rs)| l.mul_f64(d.c_scale * rs).to_f64())
            .collect(),
        z: it
            .z
            .iter()
            .map(|z| {
                let m = z.to_f64() * d.c_scale;
                (&m + m.transpose()) * 0.5
            })
            .collect(),
        iterations,
        merit,
        weak_duality_violations: violations,
    }
}
