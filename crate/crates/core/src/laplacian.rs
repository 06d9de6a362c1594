//! Path-graph Laplacian editing with hard point constraints.
//!
//! A path of `m` points has a tridiagonal Laplacian, so the pinned least
//! squares problem reduces to a pentadiagonal normal system over the free
//! points. It is factored with a banded Cholesky in `O(m)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::Point;

/// Graph Laplacian of a path with unit weights, its differential
/// coordinates and point pins.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianSystem {
    size: usize,
    /// `delta[i]` are the Laplacian coordinates of point `i`.
    delta: Vec<Point>,
    pins: Vec<(usize, Point)>,
}

/// Builds the unit-weight path Laplacian of `m` points.
///
/// Interior rows are `[-1/2, 1, -1/2]` and end rows `[1, -1]`, so every row
/// sums to zero.
pub fn build_laplacian(m: usize) -> Result<LaplacianSystem> {
    if m < 2 {
        return Err(Error::InvalidConfig(format!(
            "a Laplacian path needs at least 2 points, got {m}"
        )));
    }
    Ok(LaplacianSystem {
        size: m,
        delta: Vec::new(),
        pins: Vec::new(),
    })
}

impl LaplacianSystem {
    pub fn size(&self) -> usize {
        self.size
    }

    /// Nonzero entries `(column, value)` of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> {
        let m = self.size;
        let (lo, hi) = (i.saturating_sub(1), (i + 1).min(m - 1));
        let neighbors = (hi - lo) as f64;
        (lo..=hi).map(move |j| if j == i { (j, 1.0) } else { (j, -1.0 / neighbors) })
    }

    /// Dense `m×m` Laplacian.
    pub fn matrix(&self) -> DMatrix<f64> {
        let mut l = DMatrix::zeros(self.size, self.size);
        for i in 0..self.size {
            for (j, v) in self.row(i) {
                l[(i, j)] = v;
            }
        }
        l
    }

    /// `L · points`.
    pub fn apply(&self, points: &[Point]) -> Vec<Point> {
        (0..self.size)
            .map(|i| {
                self.row(i)
                    .fold(DVector::zeros(points[0].len()), |acc, (j, v)| acc + &points[j] * v)
            })
            .collect()
    }

    /// Stores the Laplacian coordinates of `points` as the shape to preserve.
    pub fn with_path(mut self, points: &[Point]) -> Result<Self> {
        if points.len() != self.size {
            return Err(Error::DimensionMismatch {
                expected: self.size,
                found: points.len(),
            });
        }
        self.delta = self.apply(points);
        Ok(self)
    }

    pub fn delta(&self) -> &[Point] {
        &self.delta
    }

    pub fn pins(&self) -> &[(usize, Point)] {
        &self.pins
    }

    /// Adds the equality constraint `β[index] = target`.
    ///
    /// Pinning an index twice is accepted only when both targets agree within
    /// `tolerance`; otherwise the system is inconsistent.
    pub fn pin(&mut self, index: usize, target: Point, tolerance: f64) -> Result<()> {
        if index >= self.size {
            return Err(Error::InvalidConfig(format!(
                "pin index {index} outside a {}-point path",
                self.size
            )));
        }
        if let Some((_, existing)) = self.pins.iter().find(|(i, _)| *i == index) {
            let gap = (existing - &target).norm();
            if gap > tolerance {
                return Err(Error::RankDeficientSystem { residual: gap });
            }
            return Ok(());
        }
        self.pins.push((index, target));
        Ok(())
    }

    /// Minimizes `‖Lβ − Δ‖²` subject to the pins.
    pub fn solve(&self) -> Result<Vec<Point>> {
        if self.delta.len() != self.size {
            return Err(Error::InvalidConfig(
                "Laplacian coordinates are not attached".into(),
            ));
        }
        let m = self.size;
        let d = self.delta[0].len();
        let mut value: Vec<Option<&Point>> = vec![None; m];
        for (i, p) in &self.pins {
            if p.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: p.len(),
                });
            }
            value[*i] = Some(p);
        }
        let mut slot = vec![usize::MAX; m];
        let mut free = Vec::new();
        for i in 0..m {
            if value[i].is_none() {
                slot[i] = free.len();
                free.push(i);
            }
        }
        let nf = free.len();
        let mut band = Band::zeros(nf);
        let mut rhs = DMatrix::<f64>::zeros(nf, d);
        for i in 0..m {
            let mut residual = self.delta[i].clone();
            let mut entries: [(usize, f64); 3] = [(0, 0.0); 3];
            let mut count = 0;
            for (j, v) in self.row(i) {
                match value[j] {
                    Some(p) => residual -= p * v,
                    None => {
                        entries[count] = (slot[j], v);
                        count += 1;
                    }
                }
            }
            for a in 0..count {
                let (ra, va) = entries[a];
                for b in 0..count {
                    let (rb, vb) = entries[b];
                    if rb <= ra {
                        band.add(ra, rb, va * vb);
                    }
                }
                for c in 0..d {
                    rhs[(ra, c)] += va * residual[c];
                }
            }
        }
        if nf > 0 {
            band.factor()?;
            band.solve_in_place(&mut rhs);
        }
        let mut out: Vec<Point> = Vec::with_capacity(m);
        for i in 0..m {
            out.push(match value[i] {
                Some(p) => p.clone(),
                None => rhs.row(slot[i]).transpose(),
            });
        }
        Ok(out)
    }

    /// `‖Lβ − Δ‖²` of a candidate solution.
    pub fn objective(&self, points: &[Point]) -> f64 {
        self.apply(points)
            .iter()
            .zip(&self.delta)
            .map(|(a, b)| (a - b).norm_squared())
            .sum()
    }
}

/// Symmetric positive-definite matrix with lower bandwidth 2.
struct Band {
    /// `rows[i] = [A(i,i-2), A(i,i-1), A(i,i)]`.
    rows: Vec<[f64; 3]>,
}

impl Band {
    fn zeros(n: usize) -> Self {
        Self {
            rows: vec![[0.0; 3]; n],
        }
    }

    fn add(&mut self, i: usize, j: usize, v: f64) {
        let off = i - j;
        debug_assert!(off <= 2, "entry outside the band");
        self.rows[i][2 - off] += v;
    }

    /// In-place Cholesky `A = G Gᵀ`.
    fn factor(&mut self) -> Result<()> {
        let n = self.rows.len();
        let scale = self
            .rows
            .iter()
            .map(|r| r[2].abs())
            .fold(0.0_f64, f64::max)
            .max(f64::MIN_POSITIVE);
        for i in 0..n {
            for off in (1..=2).rev() {
                if off > i {
                    continue;
                }
                let j = i - off;
                let mut s = self.rows[i][2 - off];
                // Σ_k G(i,k) G(j,k) over k in the shared band, k < j.
                for k in j.saturating_sub(2)..j {
                    if i - k <= 2 {
                        s -= self.rows[i][2 - (i - k)] * self.rows[j][2 - (j - k)];
                    }
                }
                self.rows[i][2 - off] = s / self.rows[j][2];
            }
            let mut diag = self.rows[i][2];
            for off in 1..=2.min(i) {
                diag -= self.rows[i][2 - off].powi(2);
            }
            if !(diag > 1e-13 * scale) {
                return Err(Error::RankDeficientSystem {
                    residual: diag.max(0.0),
                });
            }
            self.rows[i][2] = diag.sqrt();
        }
        Ok(())
    }

    fn solve_in_place(&self, rhs: &mut DMatrix<f64>) {
        let n = self.rows.len();
        for c in 0..rhs.ncols() {
            for i in 0..n {
                let mut s = rhs[(i, c)];
                for off in 1..=2.min(i) {
                    s -= self.rows[i][2 - off] * rhs[(i - off, c)];
                }
                rhs[(i, c)] = s / self.rows[i][2];
            }
            for i in (0..n).rev() {
                let mut s = rhs[(i, c)];
                for off in 1..=2 {
                    if i + off < n {
                        s -= self.rows[i + off][2 - off] * rhs[(i + off, c)];
                    }
                }
                rhs[(i, c)] = s / self.rows[i][2];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    #[test]
    fn three_point_laplacian() {
        let l = build_laplacian(3).unwrap().matrix();
        let expected = DMatrix::from_row_slice(
            3,
            3,
            &[1.0, -1.0, 0.0, -0.5, 1.0, -0.5, 0.0, -1.0, 1.0],
        );
        assert_eq!(l, expected);
    }

    #[test]
    fn two_point_laplacian() {
        let l = build_laplacian(2).unwrap().matrix();
        assert_eq!(l, DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));
    }

    #[test]
    fn rows_sum_to_zero() {
        for m in 2..40 {
            let l = build_laplacian(m).unwrap().matrix();
            for i in 0..m {
                assert_eq!(l.row(i).sum(), 0.0);
                assert_eq!(l[(i, i)], 1.0);
            }
        }
    }

    #[test]
    fn too_small_path() {
        assert!(build_laplacian(1).is_err());
    }

    #[test]
    fn unpinned_system_is_singular() {
        let pts: Vec<Point> = (0..5).map(|i| dvector![i as f64, 0.0]).collect();
        let sys = build_laplacian(5).unwrap().with_path(&pts).unwrap();
        assert!(matches!(
            sys.solve(),
            Err(Error::RankDeficientSystem { .. })
        ));
    }

    #[test]
    fn conflicting_pins_are_rejected() {
        let mut sys = build_laplacian(3).unwrap();
        sys.pin(1, dvector![0.0, 0.0], 1e-9).unwrap();
        sys.pin(1, dvector![0.0, 0.0], 1e-9).unwrap();
        assert!(matches!(
            sys.pin(1, dvector![1.0, 0.0], 1e-9),
            Err(Error::RankDeficientSystem { residual }) if residual == 1.0
        ));
    }

    #[test]
    fn banded_solution_matches_dense_normal_equations() {
        let m = 12;
        let pts: Vec<Point> = (0..m)
            .map(|i| {
                let t = i as f64 / (m - 1) as f64;
                dvector![t, (3.0 * t).sin()]
            })
            .collect();
        let mut sys = build_laplacian(m).unwrap().with_path(&pts).unwrap();
        sys.pin(0, dvector![0.0, 0.0], 1e-9).unwrap();
        sys.pin(5, dvector![0.5, 1.5], 1e-9).unwrap();
        sys.pin(11, dvector![1.2, 0.1], 1e-9).unwrap();
        let got = sys.solve().unwrap();

        let l = sys.matrix();
        let free: Vec<usize> = (0..m).filter(|i| ![0, 5, 11].contains(i)).collect();
        for c in 0..2 {
            let mut target = DVector::from_iterator(m, sys.delta().iter().map(|p| p[c]));
            for (i, p) in sys.pins() {
                target -= l.column(*i) * p[c];
            }
            let lf = l.select_columns(&free);
            let sol = (lf.transpose() * &lf)
                .lu()
                .solve(&(lf.transpose() * target))
                .unwrap();
            for (r, &i) in free.iter().enumerate() {
                assert!((got[i][c] - sol[r]).abs() < 1e-10);
            }
        }
    }
}
