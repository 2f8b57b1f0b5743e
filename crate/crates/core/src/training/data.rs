use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::systems::Trajectory;
use crate::tensor::Tensor;

/// A training set that can be subsampled into minibatches.
pub trait Samples: Sized {
    fn len(&self) -> usize;
    fn select(&self, idx: &[usize]) -> Self;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn take_rows(t: &Tensor, idx: &[usize]) -> Tensor {
    let w = t.cols();
    let mut data = Vec::with_capacity(idx.len() * w);
    for &i in idx {
        data.extend_from_slice(&t.data()[i * w..(i + 1) * w]);
    }
    Tensor::new(&[idx.len(), w], data).expect("row count matches")
}

/// Individual states with their true time derivatives, `[M, n]` each.
#[derive(Clone, Debug, PartialEq)]
pub struct DerivativeSamples {
    pub q: Tensor,
    pub p: Tensor,
    pub qdot: Tensor,
    pub pdot: Tensor,
}

impl DerivativeSamples {
    pub fn from_trajectories(trajs: &[&Trajectory]) -> Result<Self> {
        let n = trajs.first().ok_or_else(|| Error::invalid("no trajectories"))?.dof();
        let mut cols: [Vec<f64>; 4] = Default::default();
        let mut m = 0;
        for t in trajs {
            if t.dof() != n {
                return Err(Error::invalid("trajectories of different dimension"));
            }
            for k in 0..t.len() {
                let s = &t.states.data()[k * 2 * n..(k + 1) * 2 * n];
                let d = &t.derivs.data()[k * 2 * n..(k + 1) * 2 * n];
                cols[0].extend_from_slice(&s[..n]);
                cols[1].extend_from_slice(&s[n..]);
                cols[2].extend_from_slice(&d[..n]);
                cols[3].extend_from_slice(&d[n..]);
            }
            m += t.len();
        }
        let [q, p, qdot, pdot] = cols.map(|c| Tensor::new(&[m, n], c).expect("sizes agree"));
        Ok(DerivativeSamples { q, p, qdot, pdot })
    }

    pub fn dof(&self) -> usize {
        self.q.cols()
    }
}

impl Samples for DerivativeSamples {
    fn len(&self) -> usize {
        self.q.rows()
    }

    fn select(&self, idx: &[usize]) -> Self {
        DerivativeSamples {
            q: take_rows(&self.q, idx),
            p: take_rows(&self.p, idx),
            qdot: take_rows(&self.qdot, idx),
            pdot: take_rows(&self.pdot, idx),
        }
    }
}

/// Runs of `steps + 1` consecutive stored states.
#[derive(Clone, Debug, PartialEq)]
pub struct Windows {
    steps: usize,
    dof: usize,
    /// `[M, (steps + 1) · 2n]`, one window per row.
    rows: Tensor,
}

impl Windows {
    /// All windows starting every `stride` samples.
    pub fn from_trajectories(trajs: &[&Trajectory], steps: usize, stride: usize) -> Result<Self> {
        let n = trajs.first().ok_or_else(|| Error::invalid("no trajectories"))?.dof();
        if stride == 0 || steps == 0 {
            return Err(Error::invalid("windows need steps ≥ 1 and stride ≥ 1"));
        }
        let w = (steps + 1) * 2 * n;
        let mut data = Vec::new();
        let mut m = 0;
        for t in trajs {
            if t.len() < steps + 1 {
                return Err(Error::invalid(alloc::format!(
                    "trajectory of {} samples is shorter than a window of {}",
                    t.len(),
                    steps + 1
                )));
            }
            let mut s = 0;
            while s + steps < t.len() {
                data.extend_from_slice(&t.states.data()[s * 2 * n..s * 2 * n + w]);
                m += 1;
                s += stride;
            }
        }
        Ok(Windows { steps, dof: n, rows: Tensor::new(&[m, w], data)? })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dof(&self) -> usize {
        self.dof
    }

    /// `(q_j, p_j)` for `j = 0..=steps`, each `[M, n]`.
    pub fn columns(&self) -> (Vec<Tensor>, Vec<Tensor>) {
        let (n, m) = (self.dof, self.rows.rows());
        let w = self.rows.cols();
        let mut qs = Vec::with_capacity(self.steps + 1);
        let mut ps = Vec::with_capacity(self.steps + 1);
        for j in 0..=self.steps {
            let (mut q, mut p) = (Vec::with_capacity(m * n), Vec::with_capacity(m * n));
            for i in 0..m {
                let s = &self.rows.data()[i * w + j * 2 * n..i * w + (j + 1) * 2 * n];
                q.extend_from_slice(&s[..n]);
                p.extend_from_slice(&s[n..]);
            }
            qs.push(Tensor::new(&[m, n], q).expect("sizes agree"));
            ps.push(Tensor::new(&[m, n], p).expect("sizes agree"));
        }
        (qs, ps)
    }
}

impl Samples for Windows {
    fn len(&self) -> usize {
        self.rows.rows()
    }

    fn select(&self, idx: &[usize]) -> Self {
        Windows { steps: self.steps, dof: self.dof, rows: take_rows(&self.rows, idx) }
    }
}

/// Per-coordinate means of positions and momenta over all stored states.
pub fn state_means(trajs: &[&Trajectory]) -> (Tensor, Tensor) {
    let n = trajs.first().map_or(0, |t| t.dof());
    let mut sum = alloc::vec![0.0; 2 * n];
    let mut count = 0usize;
    for t in trajs {
        for row in t.states.data().chunks(2 * n) {
            for (s, x) in sum.iter_mut().zip(row) {
                *s += x;
            }
        }
        count += t.len();
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / count.max(1) as f64).collect();
    (Tensor::vector(&mean[..n]), Tensor::vector(&mean[n..]))
}
