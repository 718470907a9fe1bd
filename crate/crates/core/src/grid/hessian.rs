//! 2x2 Hermitian algebra and the central-difference complex Hessian.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{Grid, HermitianField, PotentialField, Visit};

/// `[[a, b], [conj(b), d]]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Herm2 {
    pub a: f64,
    pub d: f64,
    pub b: Complex64,
}

impl Herm2 {
    pub const IDENTITY: Herm2 = Herm2 {
        a: 1.0,
        d: 1.0,
        b: Complex64 { re: 0.0, im: 0.0 },
    };

    pub fn new(a: f64, d: f64, b: Complex64) -> Self {
        Self { a, d, b }
    }

    pub fn diag(a: f64, d: f64) -> Self {
        Self::new(a, d, Complex64::new(0.0, 0.0))
    }

    pub fn det(&self) -> f64 {
        self.a * self.d - self.b.norm_sqr()
    }

    pub fn trace(&self) -> f64 {
        self.a + self.d
    }

    /// Eigenvalues in increasing order.
    pub fn eigenvalues(&self) -> (f64, f64) {
        let mean = 0.5 * (self.a + self.d);
        let half = 0.5 * (self.a - self.d);
        let rad = (half * half + self.b.norm_sqr()).sqrt();
        (mean - rad, mean + rad)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().0
    }

    pub fn shift(&self, s: f64) -> Self {
        Self::new(self.a + s, self.d + s, self.b)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::new(self.a * s, self.d * s, self.b * s)
    }

    /// Projection onto the PSD cone: negative eigenvalues replaced by 0.
    pub fn clamp_psd(&self) -> Self {
        let (l1, l2) = self.eigenvalues();
        if l1 >= 0.0 {
            return *self;
        }
        if l2 <= 0.0 {
            return Self::default();
        }
        // Rank one: l2 * v v^* with v the top eigenvector.
        let (va, vb) = if self.b.norm() > 0.0 {
            (self.b, Complex64::new(l2 - self.a, 0.0))
        } else if self.a >= self.d {
            (Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0))
        } else {
            (Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0))
        };
        let nrm = va.norm_sqr() + vb.norm_sqr();
        Self::new(l2 * va.norm_sqr() / nrm, l2 * vb.norm_sqr() / nrm, l2 * va * vb.conj() / nrm)
    }

    /// Determinant after PSD clamping.
    pub fn det_psd(&self) -> f64 {
        let (l1, l2) = self.eigenvalues();
        l1.max(0.0) * l2.max(0.0)
    }
}

impl std::ops::Add for Herm2 {
    type Output = Herm2;
    fn add(self, o: Herm2) -> Herm2 {
        Herm2::new(self.a + o.a, self.d + o.d, self.b + o.b)
    }
}

impl std::ops::Sub for Herm2 {
    type Output = Herm2;
    fn sub(self, o: Herm2) -> Herm2 {
        Herm2::new(self.a - o.a, self.d - o.d, self.b - o.b)
    }
}

/// `D(A, B) = (det(A + B) - det A - det B) / 2`.
pub fn mixed_determinant(a: &Herm2, b: &Herm2) -> f64 {
    0.5 * (a.a * b.d + b.a * a.d) - (a.b * b.b.conj()).re
}

/// Complex Hessian at a node, split into the neighbour part and the weight
/// of the centre: the full Hessian is `neighbours - (u(x)/h^2) I`.
/// `u` maps an offset in `[x1, y1, x2, y2]` to a value.
#[inline]
pub fn stencil_neighbours<F: Fn([i32; 4]) -> f64>(u: F, h: f64) -> Herm2 {
    let inv = 1.0 / (h * h);
    let pair = |a: usize, sa: i32, b: usize, sb: i32| {
        let mut o = [0; 4];
        o[a] += sa;
        o[b] += sb;
        u(o)
    };
    let line = |a: usize| pair(a, 1, a, 0) + pair(a, -1, a, 0);
    let mixed = |a: usize, b: usize| pair(a, 1, b, 1) - pair(a, 1, b, -1) - pair(a, -1, b, 1) + pair(a, -1, b, -1);
    let q = 0.25 * inv;
    Herm2::new(
        q * (line(0) + line(1)),
        q * (line(2) + line(3)),
        Complex64::new(0.25 * q * (mixed(0, 2) + mixed(1, 3)), 0.25 * q * (mixed(0, 3) - mixed(1, 2))),
    )
}

/// Full central-difference complex Hessian from an offset oracle.
pub fn stencil_hessian<F: Fn([i32; 4]) -> f64>(u: F, h: f64) -> Herm2 {
    let centre = u([0; 4]);
    stencil_neighbours(u, h).shift(-centre / (h * h))
}

/// `G + H_nbr u` at a node reached by [`Grid::visit`]: the local matrix
/// with the centre removed. `q = 1/(4h^2)`.
#[inline(always)]
pub(crate) fn visit_matrix(values: &[f64], v: &Visit, g: &Herm2, q: f64) -> Herm2 {
    let at = |d: usize| values[v.idx.wrapping_add(d)];
    let two = |a: usize, b: usize| values[v.idx.wrapping_add(a).wrapping_add(b)];
    let (p, m) = (&v.plus, &v.minus);
    let line = |k: usize| at(p[k]) + at(m[k]);
    let mixed = |a: usize, b: usize| two(p[a], p[b]) - two(p[a], m[b]) - two(m[a], p[b]) + two(m[a], m[b]);
    Herm2::new(
        g.a + q * (line(0) + line(1)),
        g.d + q * (line(2) + line(3)),
        g.b + Complex64::new(0.25 * q * (mixed(0, 2) + mixed(1, 3)), 0.25 * q * (mixed(0, 3) - mixed(1, 2))),
    )
}

pub fn complex_hessian(u: &PotentialField, grid: &Grid) -> Vec<Herm2> {
    (0..grid.len())
        .map(|idx| {
            let c = grid.coords(idx);
            stencil_hessian(|o| u.values[grid.offset_index(c, o)], grid.h())
        })
        .collect()
}

/// `G + H u` at every node.
pub fn form_field(u: &PotentialField, g: &HermitianField, grid: &Grid) -> Vec<Herm2> {
    complex_hessian(u, grid).into_iter().zip(&g.entries).map(|(hu, gx)| hu + *gx).collect()
}

/// Pointwise Monge-Ampere density with PSD clamping.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaMeasure {
    pub density: Vec<f64>,
    /// Most negative eigenvalue of `G + Hu` encountered (0 if psh).
    pub clamping: f64,
}

impl MaMeasure {
    pub fn mass(&self, grid: &Grid) -> f64 {
        self.density.iter().sum::<f64>() * grid.cell_volume()
    }
}

pub fn ma_measure(u: &PotentialField, g: &HermitianField, grid: &Grid) -> MaMeasure {
    let forms = form_field(u, g, grid);
    let clamping = forms.iter().map(|m| m.min_eigenvalue().min(0.0)).fold(0.0, f64::min);
    MaMeasure {
        density: forms.iter().map(Herm2::det_psd).collect(),
        clamping,
    }
}
