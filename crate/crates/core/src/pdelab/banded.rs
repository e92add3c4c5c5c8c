use crate::error::{Error, Result};

/// Square band matrix with `kl` sub- and `ku` super-diagonals, stored by row.
#[derive(Debug, Clone, PartialEq)]
pub struct Banded {
    n: usize,
    kl: usize,
    ku: usize,
    data: Vec<f64>,
}

impl Banded {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Banded {
        Banded { n, kl, ku, data: vec![0.0; n * (kl + ku + 1)] }
    }

    pub fn identity(n: usize, kl: usize, ku: usize) -> Banded {
        let mut m = Banded::zeros(n, kl, ku);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn idx(&self, i: usize, j: usize) -> Option<usize> {
        if i >= self.n || j >= self.n || j + self.kl < i || j > i + self.ku {
            return None;
        }
        Some(i * (self.kl + self.ku + 1) + (j + self.kl - i))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.idx(i, j).map_or(0.0, |k| self.data[k])
    }

    /// Panics outside the band.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j).expect("entry outside band");
        self.data[k] = v;
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j).expect("entry outside band");
        self.data[k] += v;
    }

    /// `a·self + b·I`.
    pub fn affine(&self, a: f64, b: f64) -> Banded {
        let mut m = self.clone();
        m.data.iter_mut().for_each(|v| *v *= a);
        for i in 0..self.n {
            m.add(i, i, b);
        }
        m
    }

    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        for i in 0..self.n {
            let lo = i.saturating_sub(self.kl);
            let hi = (i + self.ku).min(self.n - 1);
            out[i] = (lo..=hi).map(|j| self.get(i, j) * x[j]).sum();
        }
    }

    /// LU without pivoting. Fails on a pivot below 1e-13 of the row scale.
    pub fn factor(mut self) -> Result<BandedLu> {
        let n = self.n;
        for k in 0..n {
            let scale = (k.saturating_sub(self.kl)..=(k + self.ku).min(n - 1))
                .map(|j| self.get(k, j).abs())
                .fold(0.0, f64::max);
            let p = self.get(k, k);
            if !(p.abs() > 1e-13 * scale) {
                return Err(Error::Numerical(format!("singular band matrix at row {k}")));
            }
            for i in k + 1..=(k + self.kl).min(n - 1) {
                let l = self.get(i, k) / p;
                self.set(i, k, l);
                for j in k + 1..=(k + self.ku).min(n - 1) {
                    let v = self.get(k, j);
                    if v != 0.0 {
                        self.add(i, j, -l * v);
                    }
                }
            }
        }
        Ok(BandedLu { m: self })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandedLu {
    m: Banded,
}

impl BandedLu {
    pub fn n(&self) -> usize {
        self.m.n
    }

    /// Solve in place.
    pub fn solve(&self, b: &mut [f64]) {
        let m = &self.m;
        let n = m.n;
        for i in 0..n {
            let lo = i.saturating_sub(m.kl);
            let s: f64 = (lo..i).map(|j| m.get(i, j) * b[j]).sum();
            b[i] -= s;
        }
        for i in (0..n).rev() {
            let hi = (i + m.ku).min(n - 1);
            let s: f64 = (i + 1..=hi).map(|j| m.get(i, j) * b[j]).sum();
            b[i] = (b[i] - s) / m.get(i, i);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn matches_dense_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &(n, kl, ku) in &[(1, 0, 0), (7, 1, 1), (20, 2, 2), (15, 1, 3)] {
            let mut b = Banded::zeros(n, kl, ku);
            let mut d = DMatrix::zeros(n, n);
            for i in 0..n {
                for j in i.saturating_sub(kl)..=(i + ku).min(n - 1) {
                    let v = if i == j { 10.0 + rng.random::<f64>() } else { rng.random::<f64>() - 0.5 };
                    b.set(i, j, v);
                    d[(i, j)] = v;
                }
            }
            let rhs: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let mut x = rhs.clone();
            b.clone().factor().unwrap().solve(&mut x);
            let want = d.lu().solve(&DVector::from_vec(rhs.clone())).unwrap();
            let mut back = vec![0.0; n];
            b.matvec(&x, &mut back);
            for i in 0..n {
                assert!((x[i] - want[i]).abs() < 1e-12);
                assert!((back[i] - rhs[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn singular_rejected() {
        assert!(Banded::zeros(3, 1, 1).factor().is_err());
    }
}
