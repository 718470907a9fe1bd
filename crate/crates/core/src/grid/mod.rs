//! Periodic grid model of the complex Monge-Ampere equation in complex
//! dimension 2: fields, the discrete operator, a Gauss-Seidel solver, the
//! relative capacity envelope and numeric checks of the comparison-type
//! inequalities.

pub mod capacity;
pub mod checks;
pub mod hessian;
pub mod io;
pub mod solver;

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
pub use hessian::{complex_hessian, ma_measure, mixed_determinant, Herm2, MaMeasure};

/// `N^4` nodes on the unit torus `(R/Z)^4`, axes ordered `[x1, y1, x2, y2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    size: usize,
    strides: [usize; 4],
    /// `wrap[k][j + 1]` is the index contribution of coordinate `j` on axis
    /// `k`, for `j` in `-1..=N`.
    wrap: [Vec<usize>; 4],
}

impl Grid {
    pub const COMPLEX_DIM: u32 = 2;

    pub fn new(size: usize) -> Result<Self> {
        if size < 8 || !size.is_multiple_of(2) {
            return Err(invalid("N", format!("need an even N >= 8, got {size}")));
        }
        let strides = [size * size * size, size * size, size, 1];
        let wrap = std::array::from_fn(|k| (0..size + 2).map(|j| ((j + size - 1) % size) * strides[k]).collect());
        Ok(Self { size, strides, wrap })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn len(&self) -> usize {
        self.size.pow(4)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn h(&self) -> f64 {
        1.0 / self.size as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.h().powi(4)
    }

    pub fn coords(&self, idx: usize) -> [usize; 4] {
        let n = self.size;
        [idx / self.strides[0], (idx / n / n) % n, (idx / n) % n, idx % n]
    }

    pub fn index(&self, c: [usize; 4]) -> usize {
        (0..4).map(|k| (c[k] % self.size) * self.strides[k]).sum()
    }

    /// Index of `c + o` for offsets in `-1..=1`, periodically wrapped.
    #[inline]
    pub fn offset_index(&self, c: [usize; 4], o: [i32; 4]) -> usize {
        let w = &self.wrap;
        w[0][(c[0] as i32 + o[0] + 1) as usize]
            + w[1][(c[1] as i32 + o[1] + 1) as usize]
            + w[2][(c[2] as i32 + o[2] + 1) as usize]
            + w[3][(c[3] as i32 + o[3] + 1) as usize]
    }

    /// Periodic translate by whole nodes.
    pub fn shifted_index(&self, idx: usize, shift: [usize; 4]) -> usize {
        let c = self.coords(idx);
        self.index(std::array::from_fn(|k| c[k] + shift[k]))
    }

    pub fn position(&self, idx: usize) -> [f64; 4] {
        let c = self.coords(idx);
        let h = self.h();
        std::array::from_fn(|k| c[k] as f64 * h)
    }

    /// Visiting order starting at `origin`, used by sweeps and reductions so
    /// that translated data with a translated origin reproduces bitwise.
    pub fn order(&self, origin: [usize; 4]) -> impl Iterator<Item = usize> + '_ {
        let n = self.size;
        (0..self.len()).map(move |i| {
            let c = [i / (n * n * n), (i / (n * n)) % n, (i / n) % n, i % n];
            self.index(std::array::from_fn(|k| c[k] + origin[k]))
        })
    }

    /// Periodic Euclidean distance between node positions.
    pub fn torus_distance(&self, a: usize, b: usize) -> f64 {
        let (ca, cb) = (self.coords(a), self.coords(b));
        (0..4)
            .map(|k| {
                let d = ca[k].abs_diff(cb[k]);
                let d = d.min(self.size - d) as f64 * self.h();
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }

    pub fn sum(&self, values: impl Fn(usize) -> f64, origin: [usize; 4]) -> f64 {
        let mut total = 0.0;
        self.visit(origin, |v| total += values(v.idx));
        total
    }

    /// Calls `f` on every node in the order of [`Self::order`], with the
    /// wrapped index steps to its axis neighbours.
    #[inline]
    pub fn visit(&self, origin: [usize; 4], mut f: impl FnMut(&Visit)) {
        let n = self.size;
        let s = self.strides;
        let step = |k: usize, c: usize, up: bool| -> usize {
            let to = if up { (c + 1) % n } else { (c + n - 1) % n };
            (to * s[k]).wrapping_sub(c * s[k])
        };
        let mut v = Visit {
            idx: 0,
            plus: [0; 4],
            minus: [0; 4],
        };
        for i0 in 0..n {
            let c0 = (i0 + origin[0]) % n;
            v.plus[0] = step(0, c0, true);
            v.minus[0] = step(0, c0, false);
            for i1 in 0..n {
                let c1 = (i1 + origin[1]) % n;
                v.plus[1] = step(1, c1, true);
                v.minus[1] = step(1, c1, false);
                for i2 in 0..n {
                    let c2 = (i2 + origin[2]) % n;
                    v.plus[2] = step(2, c2, true);
                    v.minus[2] = step(2, c2, false);
                    let base = c0 * s[0] + c1 * s[1] + c2 * s[2];
                    for i3 in 0..n {
                        let c3 = (i3 + origin[3]) % n;
                        v.plus[3] = step(3, c3, true);
                        v.minus[3] = step(3, c3, false);
                        v.idx = base + c3;
                        f(&v);
                    }
                }
            }
        }
    }
}

/// A node index with wrapping steps (to be added with `wrapping_add`) to
/// its neighbours along each axis.
#[derive(Debug, Clone, Copy)]
pub struct Visit {
    pub idx: usize,
    pub plus: [usize; 4],
    pub minus: [usize; 4],
}

pub fn check_len(name: &'static str, len: usize, grid: &Grid) -> Result<()> {
    if len != grid.len() {
        return Err(invalid(name, format!("has {len} entries, grid has {}", grid.len())));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialField {
    pub values: Vec<f64>,
    pub sup_normalized: bool,
}

impl PotentialField {
    pub fn zeros(grid: &Grid) -> Self {
        Self {
            values: vec![0.0; grid.len()],
            sup_normalized: true,
        }
    }

    pub fn from_values(values: Vec<f64>) -> Self {
        Self {
            values,
            sup_normalized: false,
        }
    }

    pub fn from_fn(grid: &Grid, f: impl Fn([f64; 4]) -> f64) -> Self {
        Self::from_values((0..grid.len()).map(|i| f(grid.position(i))).collect())
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn sup_normalize(&mut self) {
        let m = self.max();
        for v in &mut self.values {
            *v -= m;
        }
        self.sup_normalized = true;
    }

    pub fn shifted(&self, c: f64) -> Self {
        Self::from_values(self.values.iter().map(|v| v + c).collect())
    }

    pub fn translated(&self, grid: &Grid, shift: [usize; 4]) -> Self {
        let mut out = vec![0.0; self.values.len()];
        for (i, v) in self.values.iter().enumerate() {
            out[grid.shifted_index(i, shift)] = *v;
        }
        Self {
            values: out,
            sup_normalized: self.sup_normalized,
        }
    }
}

/// Background forms on the torus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum BackgroundFamily {
    Flat,
    /// `G = I + Hess_C((c / (2 pi^2)) (cos 2 pi x1 + cos 2 pi y1))`, so that
    /// `G_{11} = 1 - (c/2)(cos 2 pi x1 + cos 2 pi y1)`: semipositive for
    /// `c <= 1` and degenerate at the points `x1 = y1 = 0` when `c = 1`.
    CosineDegenerate { c: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HermitianField {
    pub entries: Vec<Herm2>,
    pub family: BackgroundFamily,
}

impl HermitianField {
    pub fn flat(grid: &Grid) -> Self {
        Self {
            entries: vec![Herm2::IDENTITY; grid.len()],
            family: BackgroundFamily::Flat,
        }
    }

    pub fn cosine_degenerate(grid: &Grid, c: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&c) {
            return Err(invalid("c", format!("{c} outside [0, 1] loses semipositivity")));
        }
        let entries = (0..grid.len())
            .map(|i| {
                let p = grid.position(i);
                let g11 = 1.0 - 0.5 * c * ((2.0 * PI * p[0]).cos() + (2.0 * PI * p[1]).cos());
                Herm2::diag(g11, 1.0)
            })
            .collect();
        Ok(Self {
            entries,
            family: BackgroundFamily::CosineDegenerate { c },
        })
    }

    pub fn for_family(grid: &Grid, family: BackgroundFamily) -> Result<Self> {
        match family {
            BackgroundFamily::Flat => Ok(Self::flat(grid)),
            BackgroundFamily::CosineDegenerate { c } => Self::cosine_degenerate(grid, c),
        }
    }

    /// `\int det G`.
    pub fn mass(&self, grid: &Grid) -> f64 {
        self.entries.iter().map(Herm2::det).sum::<f64>() * grid.cell_volume()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.entries.iter().map(Herm2::min_eigenvalue).fold(f64::INFINITY, f64::min)
    }
}

/// A measure `Omega` given by its density against Lebesgue measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureField {
    pub weights: Vec<f64>,
    pub alpha: Option<f64>,
    pub chi: Option<f64>,
}

impl MeasureField {
    pub fn uniform(grid: &Grid) -> Self {
        Self {
            weights: vec![1.0; grid.len()],
            alpha: None,
            chi: None,
        }
    }

    /// `min(dist(x, 0), floor)^{-2 gamma}`, normalized to unit mass.
    pub fn singular(grid: &Grid, gamma: f64, floor: f64) -> Result<Self> {
        if !(gamma >= 0.0 && floor > 0.0) {
            return Err(invalid("gamma", "need gamma >= 0 and a positive floor"));
        }
        let raw: Vec<f64> = (0..grid.len()).map(|i| grid.torus_distance(i, 0).max(floor).powf(-2.0 * gamma)).collect();
        let mass = raw.iter().sum::<f64>() * grid.cell_volume();
        Ok(Self {
            weights: raw.iter().map(|w| w / mass).collect(),
            alpha: None,
            chi: None,
        })
    }

    pub fn validate(&self, grid: &Grid) -> Result<()> {
        check_len("omega", self.weights.len(), grid)?;
        if self.weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(invalid("omega", "weights must be finite and nonnegative"));
        }
        Ok(())
    }

    /// `\int f Omega`.
    pub fn integrate(&self, f: &[f64], grid: &Grid) -> f64 {
        f.iter().zip(&self.weights).map(|(a, w)| a * w).sum::<f64>() * grid.cell_volume()
    }

    pub fn mass_of(&self, set: &[bool], grid: &Grid) -> f64 {
        set.iter().zip(&self.weights).filter(|(k, _)| **k).map(|(_, w)| w).sum::<f64>() * grid.cell_volume()
    }
}

/// Two densities with `\int f Omega = \int g Omega = \int det G`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityPair {
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub p: f64,
    /// Factors applied to the raw densities.
    pub normalization: (f64, f64),
}

impl DensityPair {
    pub fn normalized(f: Vec<f64>, g: Vec<f64>, p: f64, omega: &MeasureField, background: &HermitianField, grid: &Grid) -> Result<Self> {
        let target = background.mass(grid);
        let (f, cf) = normalize_density(f, omega, target, grid)?;
        let (g, cg) = normalize_density(g, omega, target, grid)?;
        if !(p > 1.0) {
            return Err(invalid("p", "the integrability exponent must exceed 1"));
        }
        Ok(Self {
            f,
            g,
            p,
            normalization: (cf, cg),
        })
    }

    /// `\int |f - g| Omega`.
    pub fn l1_distance(&self, omega: &MeasureField, grid: &Grid) -> f64 {
        let diff: Vec<f64> = self.f.iter().zip(&self.g).map(|(a, b)| (a - b).abs()).collect();
        omega.integrate(&diff, grid)
    }
}

/// Rescales `f` so that `\int f Omega = target`.
pub fn normalize_density(mut f: Vec<f64>, omega: &MeasureField, target: f64, grid: &Grid) -> Result<(Vec<f64>, f64)> {
    check_len("density", f.len(), grid)?;
    if f.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(invalid("density", "must be finite and nonnegative"));
    }
    let mass = omega.integrate(&f, grid);
    if !(mass > 0.0) {
        return Err(invalid("density", "has zero mass"));
    }
    let c = target / mass;
    for v in &mut f {
        *v *= c;
    }
    Ok((f, c))
}

/// `L^p(Omega)` norm of a density.
pub fn lp_norm(f: &[f64], p: f64, omega: &MeasureField, grid: &Grid) -> f64 {
    let pow: Vec<f64> = f.iter().map(|v| v.abs().powf(p)).collect();
    omega.integrate(&pow, grid).powf(1.0 / p)
}

/// `amplitude * cos(2 pi k.x + phase)` on the torus, with its exact complex
/// Hessian. Used to manufacture solutions and smooth perturbations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaneWave {
    pub amplitude: f64,
    pub k: [i32; 4],
    pub phase: f64,
}

impl PlaneWave {
    fn arg(&self, x: [f64; 4]) -> f64 {
        2.0 * PI * (0..4).map(|i| self.k[i] as f64 * x[i]).sum::<f64>() + self.phase
    }

    pub fn value(&self, x: [f64; 4]) -> f64 {
        self.amplitude * self.arg(x).cos()
    }

    pub fn complex_hessian(&self, x: [f64; 4]) -> Herm2 {
        let k = self.k.map(f64::from);
        let s = -(2.0 * PI).powi(2) * self.value(x) * 0.25;
        Herm2::new(
            s * (k[0] * k[0] + k[1] * k[1]),
            s * (k[2] * k[2] + k[3] * k[3]),
            Complex64::new(s * (k[0] * k[2] + k[1] * k[3]), s * (k[0] * k[3] - k[1] * k[2])),
        )
    }
}

/// Sum of plane waves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrigPotential(pub Vec<PlaneWave>);

impl TrigPotential {
    pub fn value(&self, x: [f64; 4]) -> f64 {
        self.0.iter().map(|w| w.value(x)).sum()
    }

    pub fn complex_hessian(&self, x: [f64; 4]) -> Herm2 {
        self.0.iter().fold(Herm2::default(), |acc, w| acc + w.complex_hessian(x))
    }

    pub fn field(&self, grid: &Grid) -> PotentialField {
        PotentialField::from_fn(grid, |x| self.value(x))
    }

    /// `det(I + Hess_C u)` sampled at the nodes: the density for which this
    /// potential solves the flat equation.
    pub fn flat_density(&self, grid: &Grid) -> Vec<f64> {
        (0..grid.len()).map(|i| (Herm2::IDENTITY + self.complex_hessian(grid.position(i))).det()).collect()
    }

    /// The manufactured potential used by the solver checks.
    pub fn manufactured() -> Self {
        Self(vec![
            PlaneWave { amplitude: 0.03, k: [1, 0, 0, 1], phase: 0.0 },
            PlaneWave { amplitude: 0.015, k: [0, 1, 0, 0], phase: 0.4 },
            PlaneWave { amplitude: 0.015, k: [0, -1, 1, 0], phase: 1.1 },
        ])
    }
}

/// Indicator of a set of nodes.
pub type NodeSet = Vec<bool>;

/// Nodes within periodic distance `radius` of `center`.
pub fn ball(grid: &Grid, center: usize, radius: f64) -> NodeSet {
    (0..grid.len()).map(|i| grid.torus_distance(i, center) <= radius).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_indexing() {
        let g = Grid::new(8).unwrap();
        assert!(Grid::new(7).is_err() && Grid::new(6).is_err());
        for idx in [0, 1, 77, 4095] {
            assert_eq!(g.index(g.coords(idx)), idx);
        }
        let c = [0, 7, 3, 0];
        assert_eq!(g.offset_index(c, [-1, 1, 0, -1]), g.index([7, 0, 3, 7]));
        let order: Vec<usize> = g.order([1, 2, 3, 4]).collect();
        assert_eq!(order[0], g.index([1, 2, 3, 4]));
        let mut sorted = order.clone();
        sorted.sort();
        assert_eq!(sorted, (0..g.len()).collect::<Vec<_>>());
    }

    #[test]
    fn backgrounds() {
        let g = Grid::new(8).unwrap();
        let flat = HermitianField::flat(&g);
        assert_eq!(flat.mass(&g), 1.0);
        let cos = HermitianField::cosine_degenerate(&g, 1.0).unwrap();
        assert!((cos.mass(&g) - 1.0).abs() < 1e-12);
        assert!(cos.min_eigenvalue().abs() < 1e-15);
        assert!(HermitianField::cosine_degenerate(&g, 1.5).is_err());
    }

    #[test]
    fn plane_wave_hessian_matches_stencil_limit() {
        let w = PlaneWave { amplitude: 0.5, k: [1, -1, 2, 1], phase: 0.3 };
        let x = [0.1, 0.2, 0.3, 0.4];
        let exact = w.complex_hessian(x);
        let mut prev = f64::INFINITY;
        for h in [1e-2, 5e-3] {
            let m = hessian::stencil_hessian(|o| w.value(std::array::from_fn(|k| x[k] + h * o[k] as f64)), h);
            let err = (m - exact).a.abs() + (m - exact).d.abs() + (m - exact).b.norm();
            assert!(err < prev / 3.0);
            prev = err;
        }
        assert!(prev < 1e-3 * w.amplitude * (2.0 * PI).powi(2) * 6.0);
    }

    #[test]
    fn density_normalization() {
        let g = Grid::new(8).unwrap();
        let omega = MeasureField::uniform(&g);
        let bg = HermitianField::flat(&g);
        let f: Vec<f64> = (0..g.len()).map(|i| 1.0 + (i % 7) as f64).collect();
        let pair = DensityPair::normalized(f.clone(), f, 2.0, &omega, &bg, &g).unwrap();
        assert!((omega.integrate(&pair.f, &g) - 1.0).abs() < 1e-12);
        assert_eq!(pair.l1_distance(&omega, &g), 0.0);
        assert!(normalize_density(vec![-1.0; g.len()], &omega, 1.0, &g).is_err());
        let sing = MeasureField::singular(&g, 0.5, 0.05).unwrap();
        assert!((sing.integrate(&vec![1.0; g.len()], &g) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cosine_stencil_symbol() {
        let g = Grid::new(16).unwrap();
        let u = PotentialField::from_fn(&g, |x| (2.0 * PI * x[0]).cos());
        let hs = complex_hessian(&u, &g);
        let h = g.h();
        let symbol = ((PI * h).sin() / (PI * h)).powi(2);
        for (i, m) in hs.iter().enumerate() {
            let expect = -PI * PI * u.values[i] * symbol;
            assert!((m.a - expect).abs() < 1e-10, "{} vs {expect}", m.a);
            assert!(m.d.abs() < 1e-12 && m.b.norm() < 1e-12);
        }
    }
}
