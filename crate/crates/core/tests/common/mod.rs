//! Oracles shared by the integration tests. Nothing here calls into the
//! solver or the metric code it checks.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use provshift::corpus::{Corpus, Record};
use provshift::sampler::CellCounts;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Dense logistic-regression instance with an explicit penalty mask.
pub struct DenseInstance {
    /// Columns: intercept, features, then the two provenance columns if any.
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub penalized: Vec<bool>,
    pub c: f64,
}

impl DenseInstance {
    pub fn new(features: &[Vec<f64>], y: &[u8], z: Option<&[u8]>, v: f64, c: f64) -> Self {
        let n = features.len();
        let d = features.first().map_or(0, Vec::len);
        let extra = if z.is_some() { 2 } else { 0 };
        let p = 1 + d + extra;
        let mut x = DMatrix::zeros(n, p);
        for i in 0..n {
            x[(i, 0)] = 1.0;
            for j in 0..d {
                x[(i, 1 + j)] = features[i][j];
            }
            if let Some(z) = z {
                x[(i, 1 + d + z[i] as usize)] = v;
            }
        }
        let mut penalized = vec![true; p];
        penalized[0] = false;
        DenseInstance {
            x,
            y: DVector::from_iterator(n, y.iter().map(|&l| l as f64)),
            penalized,
            c,
        }
    }

    pub fn objective(&self, theta: &DVector<f64>) -> f64 {
        let t = &self.x * theta;
        let mut f = 0.0;
        for i in 0..t.len() {
            // log(1 + e^t) - y t
            let ti = t[i];
            let lse = if ti > 0.0 {
                ti + (-ti).exp().ln_1p()
            } else {
                ti.exp().ln_1p()
            };
            f += lse - self.y[i] * ti;
        }
        for (j, &pen) in self.penalized.iter().enumerate() {
            if pen {
                f += theta[j] * theta[j] / (2.0 * self.c);
            }
        }
        f
    }

    fn grad_hess(&self, theta: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let t = &self.x * theta;
        let p: DVector<f64> = t.map(|v| 1.0 / (1.0 + (-v).exp()));
        let r = &p - &self.y;
        let mut g = self.x.transpose() * r;
        let w = p.map(|v| v * (1.0 - v));
        let xw = DMatrix::from_fn(self.x.nrows(), self.x.ncols(), |i, j| self.x[(i, j)] * w[i]);
        let mut h = self.x.transpose() * xw;
        for (j, &pen) in self.penalized.iter().enumerate() {
            if pen {
                g[j] += theta[j] / self.c;
                h[(j, j)] += 1.0 / self.c;
            }
        }
        (g, h)
    }

    /// Damped Newton iterations until the gradient sup-norm drops below 1e-10.
    pub fn newton(&self) -> (DVector<f64>, f64) {
        let p = self.x.ncols();
        let mut theta = DVector::zeros(p);
        let mut f = self.objective(&theta);
        for _ in 0..200 {
            let (g, mut h) = self.grad_hess(&theta);
            if g.amax() < 1e-10 {
                break;
            }
            for j in 0..p {
                h[(j, j)] += 1e-12;
            }
            let step = h
                .cholesky()
                .expect("hessian is positive definite")
                .solve(&g);
            let mut a = 1.0;
            loop {
                let trial = &theta - &step * a;
                let ft = self.objective(&trial);
                if ft <= f - 1e-4 * a * g.dot(&step) || a < 1e-10 {
                    theta = trial;
                    f = ft;
                    break;
                }
                a *= 0.5;
            }
        }
        (theta, f)
    }
}

/// Average precision by enumerating every threshold's confusion matrix.
pub fn brute_force_ap(scores: &[f64], labels: &[u8]) -> f64 {
    let positives = labels.iter().filter(|&&l| l == 1).count() as f64;
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
    thresholds.dedup();
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    for t in thresholds {
        let tp = scores
            .iter()
            .zip(labels)
            .filter(|(s, l)| **s >= t && **l == 1)
            .count() as f64;
        let fp = scores
            .iter()
            .zip(labels)
            .filter(|(s, l)| **s >= t && **l == 0)
            .count() as f64;
        let recall = tp / positives;
        ap += (recall - prev_recall) * (tp / (tp + fp));
        prev_recall = recall;
    }
    ap
}

/// A corpus holding only labels and sources, with the given cell sizes.
pub fn count_corpus(cells: CellCounts) -> Corpus {
    let mut records = Vec::with_capacity(cells.total());
    for (y, z, n) in cells.iter() {
        for i in 0..n {
            records.push(Record::new(format!("y{y}z{z}-{i}"), Some(String::new()), y, z).unwrap());
        }
    }
    Corpus::new(records, ["src0".into(), "src1".into()]).unwrap()
}

/// Source cells of the two-site clinical corpus: 2,528 notes (1,040 positive)
/// and 1,877 notes (371 positive).
pub fn clinical_cells() -> CellCounts {
    CellCounts::from_zy([[2528 - 1040, 1040], [1877 - 371, 371]])
}

pub fn random_dense(seed: u64, n: usize, d: usize) -> (Vec<Vec<f64>>, Vec<u8>, Vec<u8>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w: Vec<f64> = (0..d).map(|_| rng.random_range(-1.5..1.5)).collect();
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    let mut zs = Vec::with_capacity(n);
    for _ in 0..n {
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let z: u8 = rng.random_range(0..2);
        let t: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + 0.8 * z as f64 - 0.3;
        let y = u8::from(rng.random::<f64>() < 1.0 / (1.0 + (-t).exp()));
        xs.push(x);
        ys.push(y);
        zs.push(z);
    }
    ys[0] = 0;
    ys[1] = 1;
    (xs, ys, zs)
}
