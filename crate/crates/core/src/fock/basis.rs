use std::collections::HashMap;

use num_complex::Complex64;

/// Occupation tuples `(n_1, …, n_M)` with `Σ n_i ≤ n_max`, in lexicographic order.
#[derive(Clone, Debug, PartialEq)]
pub struct FockBasis {
    modes: usize,
    n_max: usize,
    tuples: Vec<Vec<u8>>,
    index: HashMap<Vec<u8>, usize>,
}

impl FockBasis {
    pub fn new(modes: usize, n_max: usize) -> Self {
        let mut tuples = Vec::new();
        let mut cur = vec![0u8; modes];
        enumerate(&mut cur, 0, n_max, &mut tuples);
        let index = tuples.iter().cloned().enumerate().map(|(i, t)| (t, i)).collect();
        Self {
            modes,
            n_max,
            tuples,
            index,
        }
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn dim(&self) -> usize {
        self.tuples.len()
    }

    pub fn tuple(&self, i: usize) -> &[u8] {
        &self.tuples[i]
    }

    pub fn tuples(&self) -> &[Vec<u8>] {
        &self.tuples
    }

    pub fn index_of(&self, tuple: &[u8]) -> Option<usize> {
        self.index.get(tuple).copied()
    }

    pub fn total(&self, i: usize) -> usize {
        self.tuples[i].iter().map(|&n| n as usize).sum()
    }

    pub fn vacuum(&self) -> Vec<Complex64> {
        let mut v = vec![Complex64::new(0.0, 0.0); self.dim()];
        v[0] = Complex64::new(1.0, 0.0);
        v
    }

    /// Applies `Σ_m coeffs[m]·a†_m`. Components pushed above `n_max` are dropped.
    pub fn create(&self, coeffs: &[Complex64], state: &[Complex64]) -> Vec<Complex64> {
        debug_assert_eq!(coeffs.len(), self.modes);
        let mut out = vec![Complex64::new(0.0, 0.0); self.dim()];
        let mut buf = Vec::with_capacity(self.modes);
        for (i, amp) in state.iter().enumerate() {
            if amp.norm_sqr() == 0.0 {
                continue;
            }
            for (m, c) in coeffs.iter().enumerate() {
                if c.norm_sqr() == 0.0 {
                    continue;
                }
                buf.clear();
                buf.extend_from_slice(&self.tuples[i]);
                let n = buf[m] as f64;
                buf[m] += 1;
                if let Some(j) = self.index_of(&buf) {
                    out[j] += c * amp * (n + 1.0).sqrt();
                }
            }
        }
        out
    }
}

fn enumerate(cur: &mut Vec<u8>, pos: usize, left: usize, out: &mut Vec<Vec<u8>>) {
    if pos == cur.len() {
        out.push(cur.clone());
        return;
    }
    for n in 0..=left {
        cur[pos] = n as u8;
        enumerate(cur, pos + 1, left - n, out);
    }
    cur[pos] = 0;
}

pub fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lexicographic_enumeration() {
        let b = FockBasis::new(2, 2);
        let want: Vec<Vec<u8>> = vec![vec![0, 0], vec![0, 1], vec![0, 2], vec![1, 0], vec![1, 1], vec![2, 0]];
        assert_eq!(b.tuples(), &want[..]);
        assert_eq!(FockBasis::new(4, 4).dim(), 70);
        assert_eq!(FockBasis::new(4, 2).dim(), 15);
        assert_eq!(b.index_of(&[1, 1]), Some(4));
    }

    #[test]
    fn creation_ladder() {
        let b = FockBasis::new(1, 3);
        let one = Complex64::new(1.0, 0.0);
        let v = b.create(&[one], &b.create(&[one], &b.vacuum()));
        // a†a†|0⟩ = √2|2⟩
        assert!((v[2].re - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(binomial(4, 2), 6.0);
        assert_eq!(binomial(3, 0), 1.0);
    }
}
