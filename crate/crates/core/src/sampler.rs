//! Shift settings, integer cell plans and seeded train/test draws.
//!
//! A setting fixes the training rates `P(y=1|z=0)`, `P(y=1|z=1)`, the source
//! mix `C_z = P(z=1)` and the test ratio `alpha_test`. The overall positive
//! rate `C_y` and `alpha_train` follow from those, and the test rates are the
//! unique pair with the same `C_y` and `C_z` whose ratio is `alpha_test`.
//!
//! Randomness: every draw uses ChaCha20, a counter-based stream cipher
//! generator. Sweep cells use the key derived from the base seed and select a
//! distinct stream from `(setting index, repeat index)`, so a cell's sample
//! does not depend on which thread runs it or in what order.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::corpus::Corpus;
use crate::error::{Error, Result};

/// Counts indexed by label `y` and provenance `z`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct CellCounts {
    counts: [[usize; 2]; 2], // [z][y]
}

impl CellCounts {
    /// Builds counts from `[[neg_z0, pos_z0], [neg_z1, pos_z1]]`.
    pub fn from_zy(counts: [[usize; 2]; 2]) -> Self {
        CellCounts { counts }
    }

    pub fn get(&self, y: u8, z: u8) -> usize {
        self.counts[z as usize][y as usize]
    }

    pub fn set(&mut self, y: u8, z: u8, n: usize) {
        self.counts[z as usize][y as usize] = n;
    }

    pub fn add(&mut self, y: u8, z: u8, n: usize) {
        self.counts[z as usize][y as usize] += n;
    }

    pub fn z_total(&self, z: u8) -> usize {
        self.counts[z as usize].iter().sum()
    }

    pub fn total(&self) -> usize {
        self.z_total(0) + self.z_total(1)
    }

    /// `(y, z, count)` in the fixed order `(0,0) (1,0) (0,1) (1,1)`.
    pub fn iter(&self) -> impl Iterator<Item = (u8, u8, usize)> + '_ {
        CELLS.iter().map(move |&(y, z)| (y, z, self.get(y, z)))
    }
}

/// Formats as `neg_z0;pos_z0;neg_z1;pos_z1`.
impl fmt::Display for CellCounts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{};{};{};{}",
            self.get(0, 0),
            self.get(1, 0),
            self.get(0, 1),
            self.get(1, 1)
        )
    }
}

const CELLS: [(u8, u8); 4] = [(0, 0), (1, 0), (0, 1), (1, 1)];

/// One point of the shift grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiftSetting {
    pub p_train_y1_z0: f64,
    pub p_train_y1_z1: f64,
    pub cz: f64,
    pub alpha_test: f64,
    pub n_train: usize,
    pub n_test: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedRates {
    pub cy: f64,
    pub alpha_train: f64,
}

fn is_probability(p: f64) -> bool {
    (0.0..=1.0).contains(&p)
}

/// `C_y = (1 - C_z) p0 + C_z p1` and `alpha_train = p1 / p0`.
pub fn derive_rates(setting: &ShiftSetting) -> Result<DerivedRates> {
    let (p0, p1, cz) = (setting.p_train_y1_z0, setting.p_train_y1_z1, setting.cz);
    if !(is_probability(p0) && is_probability(p1) && is_probability(cz)) {
        return Err(Error::InvalidArgument(format!(
            "probabilities must lie in [0, 1]: p0 = {p0}, p1 = {p1}, cz = {cz}"
        )));
    }
    if !(setting.alpha_test > 0.0 && setting.alpha_test.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "alpha_test must be positive, got {}",
            setting.alpha_test
        )));
    }
    if p0 == 0.0 {
        return Err(Error::UndefinedRatio);
    }
    let cy = (1.0 - cz) * p0 + cz * p1;
    if !(cy > 0.0 && cy < 1.0) {
        return Err(Error::DegenerateSetting { cy });
    }
    Ok(DerivedRates {
        cy,
        alpha_train: p1 / p0,
    })
}

/// Test-split rates `(p0, p1)` with mixture `C_y` under `C_z` and ratio
/// `p1 / p0 = alpha_test`.
pub fn solve_test_rates(cz: f64, cy: f64, alpha_test: f64) -> Result<(f64, f64)> {
    if !(cz > 0.0 && cz < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "cz must lie in (0, 1), got {cz}"
        )));
    }
    if !(cy > 0.0 && cy < 1.0) {
        return Err(Error::DegenerateSetting { cy });
    }
    if !(alpha_test > 0.0 && alpha_test.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "alpha_test must be positive, got {alpha_test}"
        )));
    }
    let p_z0 = cy / ((1.0 - cz) + cz * alpha_test);
    let p_z1 = alpha_test * p_z0;
    if !(is_probability(p_z0) && is_probability(p_z1)) {
        return Err(Error::InfeasibleRates { p_z0, p_z1 });
    }
    Ok((p_z0, p_z1))
}

// Products such as 10 * 0.35 land a hair below the half-integer they denote;
// the slack keeps such ties rounding up.
const ROUNDING_SLACK: f64 = 1e-9;

fn round_half_up(x: f64) -> usize {
    (x + 0.5 + ROUNDING_SLACK).floor().max(0.0) as usize
}

/// Integer counts for a split of size `n`.
///
/// The z-marginal is rounded first (`n_z1 = round(n * cz)`), then positives
/// within each source (`round(n_z * p)`), ties rounding up.
pub fn plan_cells(n: usize, cz: f64, p_y1_z0: f64, p_y1_z1: f64) -> Result<CellCounts> {
    if !(is_probability(cz) && is_probability(p_y1_z0) && is_probability(p_y1_z1)) {
        return Err(Error::InvalidArgument(format!(
            "probabilities must lie in [0, 1]: cz = {cz}, p0 = {p_y1_z0}, p1 = {p_y1_z1}"
        )));
    }
    let n_z1 = round_half_up(n as f64 * cz).min(n);
    let n_z0 = n - n_z1;
    let mut cells = CellCounts::default();
    for (z, n_z, p) in [(0u8, n_z0, p_y1_z0), (1u8, n_z1, p_y1_z1)] {
        let pos = round_half_up(n_z as f64 * p).min(n_z);
        cells.set(1, z, pos);
        cells.set(0, z, n_z - pos);
    }
    Ok(cells)
}

/// Train and test cell counts for one setting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellPlan {
    pub train: CellCounts,
    pub test: CellCounts,
}

impl CellPlan {
    /// Records needed per cell for a disjoint draw.
    pub fn required(&self) -> CellCounts {
        let mut need = self.train;
        for (y, z, n) in self.test.iter() {
            need.add(y, z, n);
        }
        need
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellDeficit {
    pub y: u8,
    pub z: u8,
    pub needed: usize,
    pub available: usize,
}

impl CellDeficit {
    pub fn short(&self) -> usize {
        self.needed - self.available
    }
}

/// Cells whose corpus supply cannot cover the plan.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeficitReport {
    pub cells: Vec<CellDeficit>,
}

impl fmt::Display for DeficitReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, d) in self.cells.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(
                f,
                "(y={},z={}): {} needed, {} available, short {}",
                d.y,
                d.z,
                d.needed,
                d.available,
                d.short()
            )?;
        }
        Ok(())
    }
}

impl std::error::Error for DeficitReport {}

/// Feasible iff every cell's train + test demand fits the corpus supply.
pub fn check_feasibility(plan: &CellPlan, available: &CellCounts) -> Result<(), DeficitReport> {
    let need = plan.required();
    let cells: Vec<CellDeficit> = need
        .iter()
        .filter(|&(y, z, n)| n > available.get(y, z))
        .map(|(y, z, needed)| CellDeficit {
            y,
            z,
            needed,
            available: available.get(y, z),
        })
        .collect();
    if cells.is_empty() {
        Ok(())
    } else {
        Err(DeficitReport { cells })
    }
}

/// Corpus indices of a drawn split, each list in ascending order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    pub fn train_ids<'a>(&self, corpus: &'a Corpus) -> Vec<&'a str> {
        self.train
            .iter()
            .map(|&i| corpus.records()[i].id.as_str())
            .collect()
    }

    pub fn test_ids<'a>(&self, corpus: &'a Corpus) -> Vec<&'a str> {
        self.test
            .iter()
            .map(|&i| corpus.records()[i].id.as_str())
            .collect()
    }
}

const REPEAT_BITS: u32 = 20;

/// Generator for sweep cell `(setting, repeat)` under `base_seed`.
pub fn cell_rng(base_seed: u64, setting: usize, repeat: usize) -> ChaCha20Rng {
    assert!(repeat < 1 << REPEAT_BITS, "repeat index too large");
    assert!(
        (setting as u64) < 1 << (64 - REPEAT_BITS),
        "setting index too large"
    );
    let mut rng = ChaCha20Rng::seed_from_u64(base_seed);
    rng.set_stream(((setting as u64) << REPEAT_BITS) | repeat as u64);
    rng
}

/// Disjoint draw without replacement within each `(y, z)` cell.
pub fn draw_split(
    corpus: &Corpus,
    train_plan: &CellCounts,
    test_plan: &CellCounts,
    seed: u64,
) -> Result<Split> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    draw_split_with_rng(corpus, train_plan, test_plan, &mut rng)
}

pub fn draw_split_with_rng<R: Rng + ?Sized>(
    corpus: &Corpus,
    train_plan: &CellCounts,
    test_plan: &CellCounts,
    rng: &mut R,
) -> Result<Split> {
    let plan = CellPlan {
        train: *train_plan,
        test: *test_plan,
    };
    check_feasibility(&plan, &corpus.cell_counts()).map_err(Error::Insufficient)?;

    let mut pools: [[Vec<usize>; 2]; 2] = Default::default();
    for (i, r) in corpus.records().iter().enumerate() {
        pools[r.z as usize][r.y as usize].push(i);
    }

    let mut train = Vec::with_capacity(train_plan.total());
    let mut test = Vec::with_capacity(test_plan.total());
    for (y, z, n_train) in train_plan.iter() {
        let n_test = test_plan.get(y, z);
        let pool = &mut pools[z as usize][y as usize];
        let k = n_train + n_test;
        // partial Fisher-Yates: the first k slots become a uniform k-subset
        for i in 0..k {
            let j = rng.random_range(i..pool.len());
            pool.swap(i, j);
        }
        train.extend_from_slice(&pool[..n_train]);
        test.extend_from_slice(&pool[n_train..k]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(Split { train, test })
}
