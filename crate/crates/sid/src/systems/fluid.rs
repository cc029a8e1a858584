//! Constrained fluid-element systems: a triangle of unit-mass vertices with an
//! area-preservation constraint (2D, 12-dimensional phase space) and a
//! tetrahedron with a volume-preservation constraint (3D, 24-dimensional).
//!
//! The constraint force is a Lagrange multiplier along the area/volume
//! gradient, so the multiplier is solved in closed form at every state.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Result, SidError};
use crate::poly::{poly_sum, Poly};

/// Degeneracy guard for constraint denominators.
const DEGENERATE_TOL: f64 = 1e-10;

/// Alternating six-term pattern p_a q_b - p_a q_c - p_b q_a + p_b q_c + p_c q_a - p_c q_b.
fn alt6val(p: [f64; 3], q: [f64; 3]) -> f64 {
    p[0] * q[1] - p[0] * q[2] - p[1] * q[0] + p[1] * q[2] + p[2] * q[0] - p[2] * q[1]
}

fn alt6(p: [&Poly; 3], q: [&Poly; 3]) -> Poly {
    let mut acc = p[0].mul(q[1]);
    acc = acc.sub(&p[0].mul(q[2]));
    acc = acc.sub(&p[1].mul(q[0]));
    acc = acc.add(&p[1].mul(q[2]));
    acc = acc.add(&p[2].mul(q[0]));
    acc = acc.sub(&p[2].mul(q[1]));
    acc
}

// ---------------------------------------------------------------------------
// 2D triangle: state (x1, y1, u1, v1, x2, y2, u2, v2, x3, y3, u3, v3)
// ---------------------------------------------------------------------------

pub const DIM_2D: usize = 12;

fn unpack2(x: &[f64]) -> ([f64; 3], [f64; 3], [f64; 3], [f64; 3]) {
    let mut pos_x = [0.0; 3];
    let mut pos_y = [0.0; 3];
    let mut vel_u = [0.0; 3];
    let mut vel_v = [0.0; 3];
    for i in 0..3 {
        pos_x[i] = x[4 * i];
        pos_y[i] = x[4 * i + 1];
        vel_u[i] = x[4 * i + 2];
        vel_v[i] = x[4 * i + 3];
    }
    (pos_x, pos_y, vel_u, vel_v)
}

/// Gradients of the signed area with respect to each vertex position.
fn area_gradients2(px: &[f64; 3], py: &[f64; 3]) -> ([f64; 3], [f64; 3]) {
    let mut ax = [0.0; 3];
    let mut ay = [0.0; 3];
    for i in 0..3 {
        ax[i] = py[(i + 1) % 3] - py[(i + 2) % 3];
        ay[i] = px[(i + 2) % 3] - px[(i + 1) % 3];
    }
    (ax, ay)
}

/// Field of the area-constrained triangle.
pub fn fluid2d_field(x: &[f64]) -> Result<Vec<f64>> {
    assert_eq!(x.len(), DIM_2D);
    let (px, py, vu, vv) = unpack2(x);
    let (ax, ay) = area_gradients2(&px, &py);
    let k_num = alt6val(vu, vv);
    let den = -px[0] * px[0] + px[0] * px[1] + px[0] * px[2] - px[1] * px[1]
        + px[1] * px[2]
        - px[2] * px[2]
        - py[0] * py[0]
        + py[0] * py[1]
        + py[0] * py[2]
        - py[1] * py[1]
        + py[1] * py[2]
        - py[2] * py[2];
    if den.abs() < DEGENERATE_TOL {
        return Err(SidError::Numerical(
            "degenerate triangle: constraint denominator vanished".into(),
        ));
    }
    let lambda = k_num / den;
    let mut f = vec![0.0; DIM_2D];
    for i in 0..3 {
        f[4 * i] = vu[i];
        f[4 * i + 1] = vv[i];
        f[4 * i + 2] = lambda * ax[i];
        f[4 * i + 3] = lambda * ay[i];
    }
    Ok(f)
}

/// Draw a state with N(0, I) positions and velocities projected onto the
/// constraint hyperplane dA/dt = 0.
pub(crate) fn sample2d<R: Rng>(rng: &mut R) -> Option<Vec<f64>> {
    let mut x: Vec<f64> = (0..DIM_2D).map(|_| rng.sample(StandardNormal)).collect();
    let (px, py, _, _) = unpack2(&x);
    let (ax, ay) = area_gradients2(&px, &py);
    let mut a = vec![0.0; DIM_2D];
    for i in 0..3 {
        a[4 * i + 2] = ax[i];
        a[4 * i + 3] = ay[i];
    }
    let aa: f64 = a.iter().map(|v| v * v).sum();
    if aa < DEGENERATE_TOL {
        return None;
    }
    let proj: f64 = a.iter().zip(x.iter()).map(|(ai, xi)| ai * xi).sum::<f64>() / aa;
    for (xi, ai) in x.iter_mut().zip(a.iter()) {
        *xi -= proj * ai;
    }
    Some(x)
}

struct Vars2 {
    x: Vec<Poly>,
    y: Vec<Poly>,
    u: Vec<Poly>,
    v: Vec<Poly>,
}

fn vars2() -> Vars2 {
    let var = |slot: usize| Poly::var(DIM_2D, slot);
    Vars2 {
        x: (0..3).map(|i| var(4 * i)).collect(),
        y: (0..3).map(|i| var(4 * i + 1)).collect(),
        u: (0..3).map(|i| var(4 * i + 2)).collect(),
        v: (0..3).map(|i| var(4 * i + 3)).collect(),
    }
}

fn centered(vs: &[Poly]) -> (Poly, Vec<Poly>) {
    let n = vs.len() as f64;
    let cm = poly_sum(&vs.to_vec()).scale(1.0 / n);
    let bars = vs.iter().map(|p| p.sub(&cm)).collect();
    (cm, bars)
}

/// All named 2D quantities: the 8 conserved catalog entries first, then the
/// auxiliary non-conserved I, K, G used by the identity check.
pub(crate) fn quantities2d() -> Vec<(&'static str, Poly)> {
    let vs = vars2();
    let (xcm, bx) = centered(&vs.x);
    let (ycm, by) = centered(&vs.y);
    let (ucm, bu) = centered(&vs.u);
    let (vcm, bv) = centered(&vs.v);

    let l_cm = xcm.mul(&vcm).sub(&ycm.mul(&ucm));
    let l = poly_sum(&(0..3).map(|i| bv[i].mul(&bx[i]).sub(&bu[i].mul(&by[i]))).collect::<Vec<_>>());
    let e = poly_sum(&(0..3).map(|i| bu[i].mul(&bu[i]).add(&bv[i].mul(&bv[i]))).collect::<Vec<_>>());
    let inertia =
        poly_sum(&(0..3).map(|i| bx[i].mul(&bx[i]).add(&by[i].mul(&by[i]))).collect::<Vec<_>>());
    let g = poly_sum(&(0..3).map(|i| bu[i].mul(&bx[i]).add(&bv[i].mul(&by[i]))).collect::<Vec<_>>());

    let xr: [&Poly; 3] = [&vs.x[0], &vs.x[1], &vs.x[2]];
    let yr: [&Poly; 3] = [&vs.y[0], &vs.y[1], &vs.y[2]];
    let ur: [&Poly; 3] = [&vs.u[0], &vs.u[1], &vs.u[2]];
    let vr: [&Poly; 3] = [&vs.v[0], &vs.v[1], &vs.v[2]];
    let area = alt6(xr, yr);
    let k = alt6(ur, vr);

    let mut div = Poly::zero(DIM_2D);
    let mut omega = Poly::zero(DIM_2D);
    for i in 0..3 {
        let j = (i + 1) % 3;
        let m = (i + 2) % 3;
        div = div.add(&vs.u[i].mul(&vs.y[j].sub(&vs.y[m])));
        div = div.add(&vs.v[i].mul(&vs.x[m].sub(&vs.x[j])));
        omega = omega.add(&vs.u[i].mul(&vs.x[j].sub(&vs.x[m])));
        omega = omega.add(&vs.v[i].mul(&vs.y[j].sub(&vs.y[m])));
    }

    vec![
        ("u_cm", ucm),
        ("v_cm", vcm),
        ("L_cm", l_cm),
        ("L", l),
        ("E", e),
        ("A", area),
        ("D", div),
        ("omega", omega),
        ("I", inertia),
        ("K", k),
        ("G", g),
    ]
}

/// The conserved 2D catalog (first 8 named quantities).
pub(crate) fn catalog2d() -> Vec<(&'static str, Poly)> {
    quantities2d().into_iter().take(8).collect()
}

// ---------------------------------------------------------------------------
// 3D tetrahedron: state (x1, y1, z1, u1, v1, w1, x2, ...)
// ---------------------------------------------------------------------------

pub const DIM_3D: usize = 24;

const SGN: [f64; 4] = [-1.0, 1.0, -1.0, 1.0];

fn others(i: usize) -> [usize; 3] {
    let mut o = [0usize; 3];
    let mut n = 0;
    for j in 0..4 {
        if j != i {
            o[n] = j;
            n += 1;
        }
    }
    o
}

fn unpack3(x: &[f64]) -> [[f64; 4]; 6] {
    let mut comps = [[0.0; 4]; 6];
    for i in 0..4 {
        for (k, comp) in comps.iter_mut().enumerate() {
            comp[i] = x[6 * i + k];
        }
    }
    comps
}

/// Signed face-area vectors (Ax_i, Ay_i, Az_i) for each vertex, evaluated on
/// arbitrary component triples (positions for the constraint gradient,
/// velocities for its time derivative).
fn face_areas3(cx: &[f64; 4], cy: &[f64; 4], cz: &[f64; 4]) -> ([f64; 4], [f64; 4], [f64; 4]) {
    let mut ax = [0.0; 4];
    let mut ay = [0.0; 4];
    let mut az = [0.0; 4];
    for i in 0..4 {
        let [a, b, c] = others(i);
        let core_x = alt6val([cy[a], cy[b], cy[c]], [cz[a], cz[b], cz[c]]);
        let core_y = alt6val([cx[a], cx[b], cx[c]], [cz[a], cz[b], cz[c]]);
        let core_z = alt6val([cx[a], cx[b], cx[c]], [cy[a], cy[b], cy[c]]);
        ax[i] = SGN[i] * core_x;
        ay[i] = -SGN[i] * core_y;
        az[i] = SGN[i] * core_z;
    }
    (ax, ay, az)
}

/// Field of the volume-constrained tetrahedron.
pub fn fluid3d_field(x: &[f64]) -> Result<Vec<f64>> {
    assert_eq!(x.len(), DIM_3D);
    let [px, py, pz, vu, vv, vw] = unpack3(x);
    let (ax, ay, az) = face_areas3(&px, &py, &pz);
    let (bx, by, bz) = face_areas3(&vu, &vv, &vw);
    let mut p = 0.0;
    let mut q = 0.0;
    for i in 0..4 {
        p += px[i] * bx[i] + py[i] * by[i] + pz[i] * bz[i];
        q += ax[i] * ax[i] + ay[i] * ay[i] + az[i] * az[i];
    }
    if q.abs() < DEGENERATE_TOL {
        return Err(SidError::Numerical(
            "degenerate tetrahedron: constraint denominator vanished".into(),
        ));
    }
    let lambda = -2.0 * p / q;
    let mut f = vec![0.0; DIM_3D];
    for i in 0..4 {
        f[6 * i] = vu[i];
        f[6 * i + 1] = vv[i];
        f[6 * i + 2] = vw[i];
        f[6 * i + 3] = lambda * ax[i];
        f[6 * i + 4] = lambda * ay[i];
        f[6 * i + 5] = lambda * az[i];
    }
    Ok(f)
}

/// Draw a state with N(0, I) positions and velocities projected onto the
/// constraint hyperplane dV/dt = 0.
pub(crate) fn sample3d<R: Rng>(rng: &mut R) -> Option<Vec<f64>> {
    let mut x: Vec<f64> = (0..DIM_3D).map(|_| rng.sample(StandardNormal)).collect();
    let [px, py, pz, _, _, _] = unpack3(&x);
    let (ax, ay, az) = face_areas3(&px, &py, &pz);
    let mut a = vec![0.0; DIM_3D];
    for i in 0..4 {
        a[6 * i + 3] = ax[i];
        a[6 * i + 4] = ay[i];
        a[6 * i + 5] = az[i];
    }
    let aa: f64 = a.iter().map(|v| v * v).sum();
    if aa < DEGENERATE_TOL {
        return None;
    }
    let proj: f64 = a.iter().zip(x.iter()).map(|(ai, xi)| ai * xi).sum::<f64>() / aa;
    for (xi, ai) in x.iter_mut().zip(a.iter()) {
        *xi -= proj * ai;
    }
    Some(x)
}

struct Vars3 {
    comp: [Vec<Poly>; 6],
}

impl Vars3 {
    fn get(&self, comp: usize, vertex: usize) -> &Poly {
        &self.comp[comp][vertex]
    }
}

fn vars3() -> Vars3 {
    let make = |k: usize| (0..4).map(|i| Poly::var(DIM_3D, 6 * i + k)).collect::<Vec<_>>();
    Vars3 {
        comp: [make(0), make(1), make(2), make(3), make(4), make(5)],
    }
}

fn alt6_at(vs: &Vars3, pc: usize, qc: usize, idx: [usize; 3]) -> Poly {
    alt6(
        [vs.get(pc, idx[0]), vs.get(pc, idx[1]), vs.get(pc, idx[2])],
        [vs.get(qc, idx[0]), vs.get(qc, idx[1]), vs.get(qc, idx[2])],
    )
}

/// All named 3D quantities; every entry is conserved.
pub(crate) fn quantities3d() -> Vec<(&'static str, Poly)> {
    const X: usize = 0;
    const Y: usize = 1;
    const Z: usize = 2;
    const U: usize = 3;
    const V: usize = 4;
    const W: usize = 5;
    let vs = vars3();

    let mut cms = Vec::new();
    let mut bars = Vec::new();
    for k in 0..6 {
        let (cm, bar) = centered(&vs.comp[k]);
        cms.push(cm);
        bars.push(bar);
    }

    let e = poly_sum(
        &(0..4)
            .flat_map(|i| [U, V, W].map(|k| bars[k][i].mul(&bars[k][i])))
            .collect::<Vec<_>>(),
    );
    let pair_sum = |a: usize, b: usize, c: usize, d: usize| {
        poly_sum(&(0..4).map(|i| bars[a][i].mul(&bars[b][i]).sub(&bars[c][i].mul(&bars[d][i]))).collect::<Vec<_>>())
    };
    let l_x = pair_sum(W, Y, V, Z);
    let l_y = pair_sum(U, Z, W, X);
    let l_z = pair_sum(V, X, U, Y);

    let lcm_x = cms[W].mul(&cms[Y]).sub(&cms[V].mul(&cms[Z]));
    let lcm_y = cms[U].mul(&cms[Z]).sub(&cms[W].mul(&cms[X]));
    let lcm_z = cms[V].mul(&cms[X]).sub(&cms[U].mul(&cms[Y]));

    let mut face_x = Vec::new();
    let mut face_y = Vec::new();
    let mut face_z = Vec::new();
    for i in 0..4 {
        let o = others(i);
        face_x.push(alt6_at(&vs, Y, Z, o).scale(SGN[i]));
        face_y.push(alt6_at(&vs, X, Z, o).scale(-SGN[i]));
        face_z.push(alt6_at(&vs, X, Y, o).scale(SGN[i]));
    }

    let volume = poly_sum(
        &(0..4)
            .flat_map(|i| {
                [
                    vs.get(X, i).mul(&face_x[i]),
                    vs.get(Y, i).mul(&face_y[i]),
                    vs.get(Z, i).mul(&face_z[i]),
                ]
            })
            .collect::<Vec<_>>(),
    )
    .scale(1.0 / 3.0);
    let div = poly_sum(
        &(0..4)
            .flat_map(|i| {
                [
                    vs.get(U, i).mul(&face_x[i]),
                    vs.get(V, i).mul(&face_y[i]),
                    vs.get(W, i).mul(&face_z[i]),
                ]
            })
            .collect::<Vec<_>>(),
    );

    let mut circs = Vec::new();
    for i in 0..4 {
        let o = others(i);
        let core = alt6_at(&vs, U, X, o)
            .add(&alt6_at(&vs, V, Y, o))
            .add(&alt6_at(&vs, W, Z, o));
        circs.push(core.scale(SGN[i]));
    }

    let mut out: Vec<(&'static str, Poly)> = vec![
        ("u_cm", cms[U].clone()),
        ("v_cm", cms[V].clone()),
        ("w_cm", cms[W].clone()),
        ("Lcm_x", lcm_x),
        ("Lcm_y", lcm_y),
        ("Lcm_z", lcm_z),
        ("L_x", l_x),
        ("L_y", l_y),
        ("L_z", l_z),
        ("E", e),
        ("V", volume),
        ("D", div),
    ];
    let names = ["C1", "C2", "C3", "C4"];
    for (name, c) in names.iter().zip(circs.into_iter()) {
        out.push((name, c));
    }
    out
}
