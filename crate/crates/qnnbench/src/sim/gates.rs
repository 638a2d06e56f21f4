//! Primitive gate matrices and dense statevector kernels.
//!
//! Composite gates (`ArbitraryUnitary`) are lowered to a fixed sequence of
//! primitives before evaluation so that every evaluator (forward, adjoint,
//! parameter-shift, dense oracle) sees the same gate stream.

use super::{C64, GateKind, GateOp};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum PrimKind {
    Rx,
    Ry,
    Rz,
    U3,
    XX,
    YY,
    ZZ,
    Swap,
    CU3,
}

/// A lowered primitive gate: up to two wires, up to three parameter slots.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Prim {
    pub kind: PrimKind,
    w: [usize; 2],
    n_wires: u8,
    slots: [usize; 3],
    pub n_slots: u8,
}

impl Prim {
    fn one(kind: PrimKind, w: usize, slots: &[usize]) -> Self {
        let mut s = [0usize; 3];
        s[..slots.len()].copy_from_slice(slots);
        Self {
            kind,
            w: [w, 0],
            n_wires: 1,
            slots: s,
            n_slots: slots.len() as u8,
        }
    }

    fn two(kind: PrimKind, w0: usize, w1: usize, slots: &[usize]) -> Self {
        let mut s = [0usize; 3];
        s[..slots.len()].copy_from_slice(slots);
        Self {
            kind,
            w: [w0, w1],
            n_wires: 2,
            slots: s,
            n_slots: slots.len() as u8,
        }
    }

    pub fn wires(&self) -> &[usize] {
        &self.w[..self.n_wires as usize]
    }

    pub fn slots(&self) -> &[usize] {
        &self.slots[..self.n_slots as usize]
    }

    fn angles(&self, params: &[f64]) -> [f64; 3] {
        let mut a = [0.0; 3];
        for (i, &s) in self.slots().iter().enumerate() {
            a[i] = params[s];
        }
        a
    }

    /// Angles with a single occurrence-local offset applied to slot position
    /// `pos` (used by the parameter-shift rule).
    fn angles_shifted(&self, params: &[f64], pos: usize, delta: f64) -> [f64; 3] {
        let mut a = self.angles(params);
        a[pos] += delta;
        a
    }
}

/// Lower one circuit op into primitive gates. The two-wire
/// `ArbitraryUnitary` becomes the universal 15-parameter product
/// `(U3 x U3) . IsingXX . IsingYY . IsingZZ . (U3 x U3)`.
pub(crate) fn lower_op(op: &GateOp) -> impl Iterator<Item = Prim> {
    let mut out: [Option<Prim>; 7] = [None; 7];
    let s = &op.param_slots;
    match op.kind {
        GateKind::RX => out[0] = Some(Prim::one(PrimKind::Rx, op.wires[0], &s[..1])),
        GateKind::RY => out[0] = Some(Prim::one(PrimKind::Ry, op.wires[0], &s[..1])),
        GateKind::RZ => out[0] = Some(Prim::one(PrimKind::Rz, op.wires[0], &s[..1])),
        GateKind::U3 => out[0] = Some(Prim::one(PrimKind::U3, op.wires[0], &s[..3])),
        GateKind::IsingXX => {
            out[0] = Some(Prim::two(PrimKind::XX, op.wires[0], op.wires[1], &s[..1]))
        }
        GateKind::IsingYY => {
            out[0] = Some(Prim::two(PrimKind::YY, op.wires[0], op.wires[1], &s[..1]))
        }
        GateKind::IsingZZ => {
            out[0] = Some(Prim::two(PrimKind::ZZ, op.wires[0], op.wires[1], &s[..1]))
        }
        GateKind::Swap => out[0] = Some(Prim::two(PrimKind::Swap, op.wires[0], op.wires[1], &[])),
        GateKind::ControlledU3 => {
            out[0] = Some(Prim::two(PrimKind::CU3, op.wires[0], op.wires[1], &s[..3]))
        }
        GateKind::ArbitraryUnitary => {
            let (a, b) = (op.wires[0], op.wires[1]);
            out[0] = Some(Prim::one(PrimKind::U3, a, &s[0..3]));
            out[1] = Some(Prim::one(PrimKind::U3, b, &s[3..6]));
            out[2] = Some(Prim::two(PrimKind::XX, a, b, &s[6..7]));
            out[3] = Some(Prim::two(PrimKind::YY, a, b, &s[7..8]));
            out[4] = Some(Prim::two(PrimKind::ZZ, a, b, &s[8..9]));
            out[5] = Some(Prim::one(PrimKind::U3, a, &s[9..12]));
            out[6] = Some(Prim::one(PrimKind::U3, b, &s[12..15]));
        }
    }
    out.into_iter().flatten()
}

pub(crate) fn lower_circuit(ops: &[GateOp]) -> Vec<Prim> {
    ops.iter().flat_map(lower_op).collect()
}

const I: C64 = C64::new(0.0, 1.0);

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

pub(crate) fn mat_rx(t: f64) -> [C64; 4] {
    let (s, co) = (t / 2.0).sin_cos();
    [c(co), -I * s, -I * s, c(co)]
}

pub(crate) fn mat_ry(t: f64) -> [C64; 4] {
    let (s, co) = (t / 2.0).sin_cos();
    [c(co), c(-s), c(s), c(co)]
}

pub(crate) fn mat_rz(t: f64) -> [C64; 4] {
    let e = C64::from_polar(1.0, -t / 2.0);
    [e, c(0.0), c(0.0), e.conj()]
}

pub(crate) fn mat_u3(t: f64, phi: f64, lam: f64) -> [C64; 4] {
    let (s, co) = (t / 2.0).sin_cos();
    let eip = C64::from_polar(1.0, phi);
    let eil = C64::from_polar(1.0, lam);
    [c(co), -eil * s, eip * s, eip * eil * co]
}

fn dmat_u3(t: f64, phi: f64, lam: f64, pos: usize) -> [C64; 4] {
    let (s, co) = (t / 2.0).sin_cos();
    let eip = C64::from_polar(1.0, phi);
    let eil = C64::from_polar(1.0, lam);
    match pos {
        0 => [
            c(-s / 2.0),
            -eil * (co / 2.0),
            eip * (co / 2.0),
            eip * eil * (-s / 2.0),
        ],
        1 => [c(0.0), c(0.0), I * eip * s, I * eip * eil * co],
        2 => [c(0.0), -I * eil * s, c(0.0), I * eip * eil * co],
        _ => unreachable!(),
    }
}

fn mat1(kind: PrimKind, a: &[f64; 3]) -> [C64; 4] {
    match kind {
        PrimKind::Rx => mat_rx(a[0]),
        PrimKind::Ry => mat_ry(a[0]),
        PrimKind::Rz => mat_rz(a[0]),
        PrimKind::U3 | PrimKind::CU3 => mat_u3(a[0], a[1], a[2]),
        _ => unreachable!(),
    }
}

fn dmat1(kind: PrimKind, a: &[f64; 3], pos: usize) -> [C64; 4] {
    match kind {
        PrimKind::Rx => {
            let (s, co) = (a[0] / 2.0).sin_cos();
            [c(-s / 2.0), -I * (co / 2.0), -I * (co / 2.0), c(-s / 2.0)]
        }
        PrimKind::Ry => {
            let (s, co) = (a[0] / 2.0).sin_cos();
            [c(-s / 2.0), c(-co / 2.0), c(co / 2.0), c(-s / 2.0)]
        }
        PrimKind::Rz => {
            let e = C64::from_polar(1.0, -a[0] / 2.0);
            [-I * e * 0.5, c(0.0), c(0.0), I * e.conj() * 0.5]
        }
        PrimKind::U3 | PrimKind::CU3 => dmat_u3(a[0], a[1], a[2], pos),
        _ => unreachable!(),
    }
}

fn mat_ising(kind: PrimKind, t: f64) -> [C64; 16] {
    let (s, co) = (t / 2.0).sin_cos();
    let z = c(0.0);
    match kind {
        PrimKind::XX => [
            c(co), z, z, -I * s,
            z, c(co), -I * s, z,
            z, -I * s, c(co), z,
            -I * s, z, z, c(co),
        ],
        PrimKind::YY => [
            c(co), z, z, I * s,
            z, c(co), -I * s, z,
            z, -I * s, c(co), z,
            I * s, z, z, c(co),
        ],
        PrimKind::ZZ => {
            let e = C64::from_polar(1.0, -t / 2.0);
            [
                e, z, z, z,
                z, e.conj(), z, z,
                z, z, e.conj(), z,
                z, z, z, e,
            ]
        }
        _ => unreachable!(),
    }
}

fn dmat_ising(kind: PrimKind, t: f64) -> [C64; 16] {
    let (s, co) = (t / 2.0).sin_cos();
    let (hs, hc) = (s / 2.0, co / 2.0);
    let z = c(0.0);
    match kind {
        PrimKind::XX => [
            c(-hs), z, z, -I * hc,
            z, c(-hs), -I * hc, z,
            z, -I * hc, c(-hs), z,
            -I * hc, z, z, c(-hs),
        ],
        PrimKind::YY => [
            c(-hs), z, z, I * hc,
            z, c(-hs), -I * hc, z,
            z, -I * hc, c(-hs), z,
            I * hc, z, z, c(-hs),
        ],
        PrimKind::ZZ => {
            let e = C64::from_polar(1.0, -t / 2.0);
            let d0 = -I * e * 0.5;
            let d1 = I * e.conj() * 0.5;
            [
                d0, z, z, z,
                z, d1, z, z,
                z, z, d1, z,
                z, z, z, d0,
            ]
        }
        _ => unreachable!(),
    }
}

fn dag1(m: &[C64; 4]) -> [C64; 4] {
    [m[0].conj(), m[2].conj(), m[1].conj(), m[3].conj()]
}

fn dag2(m: &[C64; 16]) -> [C64; 16] {
    let mut out = [c(0.0); 16];
    for r in 0..4 {
        for cc in 0..4 {
            out[r * 4 + cc] = m[cc * 4 + r].conj();
        }
    }
    out
}

/// The full matrix of a primitive on its own wires (2x2 or 4x4), used by the
/// dense oracle. For `CU3` the 4x4 controlled form is returned.
pub(crate) enum PrimMatrix {
    One([C64; 4]),
    Two([C64; 16]),
}

pub(crate) fn prim_matrix(prim: &Prim, params: &[f64]) -> PrimMatrix {
    let a = prim.angles(params);
    match prim.kind {
        PrimKind::Rx | PrimKind::Ry | PrimKind::Rz | PrimKind::U3 => {
            PrimMatrix::One(mat1(prim.kind, &a))
        }
        PrimKind::XX | PrimKind::YY | PrimKind::ZZ => PrimMatrix::Two(mat_ising(prim.kind, a[0])),
        PrimKind::Swap => {
            let (o, z) = (c(1.0), c(0.0));
            PrimMatrix::Two([
                o, z, z, z,
                z, z, o, z,
                z, o, z, z,
                z, z, z, o,
            ])
        }
        PrimKind::CU3 => {
            let u = mat_u3(a[0], a[1], a[2]);
            let (o, z) = (c(1.0), c(0.0));
            PrimMatrix::Two([
                o, z, z, z,
                z, o, z, z,
                z, z, u[0], u[1],
                z, z, u[2], u[3],
            ])
        }
    }
}

// ---------------------------------------------------------------------------
// Statevector kernels. Qubit q occupies bit (n-1-q) of the basis index.
// ---------------------------------------------------------------------------

#[inline]
fn bitpos(n: usize, wire: usize) -> usize {
    n - 1 - wire
}

pub(crate) fn apply1(amps: &mut [C64], n: usize, wire: usize, m: &[C64; 4]) {
    let b = bitpos(n, wire);
    let stride = 1usize << b;
    let dim = amps.len();
    let mut base = 0;
    while base < dim {
        for i in base..base + stride {
            let a0 = amps[i];
            let a1 = amps[i + stride];
            amps[i] = m[0] * a0 + m[1] * a1;
            amps[i + stride] = m[2] * a0 + m[3] * a1;
        }
        base += stride << 1;
    }
}

pub(crate) fn apply2(amps: &mut [C64], n: usize, w0: usize, w1: usize, m: &[C64; 16]) {
    // w0 is the high bit of the gate's 2-bit index.
    let p0 = bitpos(n, w0);
    let p1 = bitpos(n, w1);
    let (s0, s1) = (1usize << p0, 1usize << p1);
    for i in 0..amps.len() {
        if i & s0 == 0 && i & s1 == 0 {
            let i00 = i;
            let i01 = i | s1;
            let i10 = i | s0;
            let i11 = i | s0 | s1;
            let a = [amps[i00], amps[i01], amps[i10], amps[i11]];
            for (r, &idx) in [i00, i01, i10, i11].iter().enumerate() {
                amps[idx] =
                    m[r * 4] * a[0] + m[r * 4 + 1] * a[1] + m[r * 4 + 2] * a[2] + m[r * 4 + 3] * a[3];
            }
        }
    }
}

fn apply_swap(amps: &mut [C64], n: usize, w0: usize, w1: usize) {
    let (s0, s1) = (1usize << bitpos(n, w0), 1usize << bitpos(n, w1));
    for i in 0..amps.len() {
        if i & s0 != 0 && i & s1 == 0 {
            amps.swap(i, (i & !s0) | s1);
        }
    }
}

fn apply_ctrl1(amps: &mut [C64], n: usize, ctrl: usize, tgt: usize, m: &[C64; 4]) {
    let sc = 1usize << bitpos(n, ctrl);
    let st = 1usize << bitpos(n, tgt);
    for i in 0..amps.len() {
        if i & sc != 0 && i & st == 0 {
            let a0 = amps[i];
            let a1 = amps[i | st];
            amps[i] = m[0] * a0 + m[1] * a1;
            amps[i | st] = m[2] * a0 + m[3] * a1;
        }
    }
}

/// Apply a primitive, optionally with a shifted angle at slot position
/// `shift` (occurrence-local, for the parameter-shift rule).
pub(crate) fn apply_prim_shifted(
    amps: &mut [C64],
    n: usize,
    prim: &Prim,
    params: &[f64],
    shift: Option<(usize, f64)>,
) {
    let a = match shift {
        Some((pos, delta)) => prim.angles_shifted(params, pos, delta),
        None => prim.angles(params),
    };
    match prim.kind {
        PrimKind::Rx | PrimKind::Ry | PrimKind::Rz | PrimKind::U3 => {
            apply1(amps, n, prim.w[0], &mat1(prim.kind, &a))
        }
        PrimKind::XX | PrimKind::YY | PrimKind::ZZ => {
            apply2(amps, n, prim.w[0], prim.w[1], &mat_ising(prim.kind, a[0]))
        }
        PrimKind::Swap => apply_swap(amps, n, prim.w[0], prim.w[1]),
        PrimKind::CU3 => apply_ctrl1(amps, n, prim.w[0], prim.w[1], &mat1(PrimKind::U3, &a)),
    }
}

pub(crate) fn apply_prim(amps: &mut [C64], n: usize, prim: &Prim, params: &[f64]) {
    apply_prim_shifted(amps, n, prim, params, None);
}

/// Apply the conjugate transpose of a primitive.
pub(crate) fn apply_prim_dagger(amps: &mut [C64], n: usize, prim: &Prim, params: &[f64]) {
    let a = prim.angles(params);
    match prim.kind {
        PrimKind::Rx | PrimKind::Ry | PrimKind::Rz | PrimKind::U3 => {
            apply1(amps, n, prim.w[0], &dag1(&mat1(prim.kind, &a)))
        }
        PrimKind::XX | PrimKind::YY | PrimKind::ZZ => apply2(
            amps,
            n,
            prim.w[0],
            prim.w[1],
            &dag2(&mat_ising(prim.kind, a[0])),
        ),
        PrimKind::Swap => apply_swap(amps, n, prim.w[0], prim.w[1]),
        PrimKind::CU3 => apply_ctrl1(
            amps,
            n,
            prim.w[0],
            prim.w[1],
            &dag1(&mat1(PrimKind::U3, &a)),
        ),
    }
}

fn inner1(bra: &[C64], ket: &[C64], n: usize, wire: usize, m: &[C64; 4]) -> C64 {
    let stride = 1usize << bitpos(n, wire);
    let mut acc = C64::new(0.0, 0.0);
    let mut base = 0;
    while base < ket.len() {
        for i in base..base + stride {
            let k0 = ket[i];
            let k1 = ket[i + stride];
            acc += bra[i].conj() * (m[0] * k0 + m[1] * k1);
            acc += bra[i + stride].conj() * (m[2] * k0 + m[3] * k1);
        }
        base += stride << 1;
    }
    acc
}

fn inner2(bra: &[C64], ket: &[C64], n: usize, w0: usize, w1: usize, m: &[C64; 16]) -> C64 {
    let (s0, s1) = (1usize << bitpos(n, w0), 1usize << bitpos(n, w1));
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..ket.len() {
        if i & s0 == 0 && i & s1 == 0 {
            let idx = [i, i | s1, i | s0, i | s0 | s1];
            let k = [ket[idx[0]], ket[idx[1]], ket[idx[2]], ket[idx[3]]];
            for r in 0..4 {
                let v = m[r * 4] * k[0] + m[r * 4 + 1] * k[1] + m[r * 4 + 2] * k[2] + m[r * 4 + 3] * k[3];
                acc += bra[idx[r]].conj() * v;
            }
        }
    }
    acc
}

fn inner_ctrl1(bra: &[C64], ket: &[C64], n: usize, ctrl: usize, tgt: usize, m: &[C64; 4]) -> C64 {
    let sc = 1usize << bitpos(n, ctrl);
    let st = 1usize << bitpos(n, tgt);
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..ket.len() {
        if i & sc != 0 && i & st == 0 {
            let k0 = ket[i];
            let k1 = ket[i | st];
            acc += bra[i].conj() * (m[0] * k0 + m[1] * k1);
            acc += bra[i | st].conj() * (m[2] * k0 + m[3] * k1);
        }
    }
    acc
}

/// `<bra| dU/d(slot pos) |ket>` for one primitive occurrence. The derivative
/// of a controlled gate vanishes on the control-off subspace, so only the
/// control-on block contributes.
pub(crate) fn grad_inner(
    bra: &[C64],
    ket: &[C64],
    n: usize,
    prim: &Prim,
    params: &[f64],
    pos: usize,
) -> C64 {
    let a = prim.angles(params);
    match prim.kind {
        PrimKind::Rx | PrimKind::Ry | PrimKind::Rz | PrimKind::U3 => {
            inner1(bra, ket, n, prim.w[0], &dmat1(prim.kind, &a, pos))
        }
        PrimKind::XX | PrimKind::YY | PrimKind::ZZ => {
            inner2(bra, ket, n, prim.w[0], prim.w[1], &dmat_ising(prim.kind, a[0]))
        }
        PrimKind::CU3 => inner_ctrl1(
            bra,
            ket,
            n,
            prim.w[0],
            prim.w[1],
            &dmat1(PrimKind::U3, &a, pos),
        ),
        PrimKind::Swap => C64::new(0.0, 0.0),
    }
}

/// Parameter-shift rule classification for one primitive.
pub(crate) enum ShiftRule {
    /// Generator eigenvalues +-1/2: g = [f(+pi/2) - f(-pi/2)] / 2.
    TwoTerm,
    /// Controlled rotation (generator eigenvalues {0, +-1/2}): four-term rule
    /// at shifts +-pi/2 and +-3pi/2.
    FourTerm,
}

pub(crate) fn shift_rule(kind: PrimKind) -> Option<ShiftRule> {
    match kind {
        PrimKind::Rx
        | PrimKind::Ry
        | PrimKind::Rz
        | PrimKind::U3
        | PrimKind::XX
        | PrimKind::YY
        | PrimKind::ZZ => Some(ShiftRule::TwoTerm),
        PrimKind::CU3 => Some(ShiftRule::FourTerm),
        PrimKind::Swap => None,
    }
}
