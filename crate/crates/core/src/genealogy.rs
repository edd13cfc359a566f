//! Rolling windows of Enoch indices.
//!
//! `E_{m,r}^i` is the index of the ancestor, at generation `m`, of particle
//! `i` at reference generation `r`. After a selection step with ancestor
//! indices `I`, every retained row is updated by gathering,
//! `E_{m,r+1}^i = E_{m,r}^{I^i}`, and the identity row `E_{r+1,r+1}` is
//! appended. Generations are counted in selection steps, so without adaptive
//! resampling they coincide with filter time.

use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Enoch index rows for generations `oldest_generation ..= newest_generation`.
#[derive(Debug, Clone)]
pub struct EnochWindow {
    n_particles: usize,
    oldest_generation: usize,
    rows: VecDeque<Vec<usize>>,
    scratch: Vec<usize>,
    spare: Vec<Vec<usize>>,
}

impl EnochWindow {
    /// A single identity row at generation 0.
    pub fn new(n_particles: usize) -> Result<Self> {
        if n_particles == 0 {
            return Err(Error::NoParticles);
        }
        let mut rows = VecDeque::new();
        rows.push_back((0..n_particles).collect());
        Ok(Self {
            n_particles,
            oldest_generation: 0,
            rows,
            scratch: vec![0; n_particles],
            spare: Vec::new(),
        })
    }

    pub fn n_particles(&self) -> usize {
        self.n_particles
    }

    pub fn oldest_generation(&self) -> usize {
        self.oldest_generation
    }

    /// The reference generation `r`; its row is the identity.
    pub fn newest_generation(&self) -> usize {
        self.oldest_generation + self.rows.len() - 1
    }

    /// Number of retained rows.
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Largest lag whose generation `r - lag` is retained.
    pub fn span(&self) -> usize {
        self.rows.len() - 1
    }

    pub fn rows(&self) -> impl DoubleEndedIterator<Item = &[usize]> + ExactSizeIterator {
        self.rows.iter().map(Vec::as_slice)
    }

    /// Row `E_{m, r}` for generation `m`.
    pub fn row(&self, generation: usize) -> Result<&[usize]> {
        if generation < self.oldest_generation || generation > self.newest_generation() {
            return Err(Error::GenerationOutOfWindow {
                generation,
                oldest: self.oldest_generation,
                newest: self.newest_generation(),
            });
        }
        Ok(&self.rows[generation - self.oldest_generation])
    }

    /// Row for generation `r<lag> = max(r - lag, 0)`.
    pub fn row_at_lag(&self, lag: usize) -> Result<&[usize]> {
        let generation = self.newest_generation().saturating_sub(lag);
        self.row(generation).map_err(|_| Error::LagOutOfWindow {
            lag,
            span: self.span(),
        })
    }

    /// Number of distinct labels in the row of generation `m`.
    pub fn distinct_count(&self, generation: usize) -> Result<usize> {
        Ok(distinct_labels(self.row(generation)?, self.n_particles))
    }

    /// Apply one selection step with 0-based `ancestors`, keeping at most
    /// `max_rows` rows (the oldest are dropped before gathering).
    pub fn advance(&mut self, ancestors: &[usize], max_rows: usize) -> Result<()> {
        if ancestors.len() != self.n_particles {
            return Err(Error::LengthMismatch {
                expected: self.n_particles,
                got: ancestors.len(),
            });
        }
        if let Some(&index) = ancestors.iter().find(|&&a| a >= self.n_particles) {
            return Err(Error::InvalidAncestor {
                index,
                n_particles: self.n_particles,
            });
        }
        if max_rows == 0 {
            return Err(Error::InvalidParameter("window must retain at least one row".into()));
        }
        let keep = max_rows - 1;
        while self.rows.len() > keep {
            let row = self.rows.pop_front().expect("non-empty");
            self.spare.push(row);
            self.oldest_generation += 1;
        }
        for row in self.rows.iter_mut() {
            for (dst, &a) in self.scratch.iter_mut().zip(ancestors) {
                *dst = row[a];
            }
            std::mem::swap(row, &mut self.scratch);
        }
        let mut identity = self.spare.pop().unwrap_or_else(|| vec![0; self.n_particles]);
        for (i, v) in identity.iter_mut().enumerate() {
            *v = i;
        }
        self.rows.push_back(identity);
        Ok(())
    }

    /// Drop rows older than generation `r - lag`.
    pub fn retain_lag(&mut self, lag: usize) {
        while self.rows.len() > lag + 1 {
            let row = self.rows.pop_front().expect("non-empty");
            self.spare.push(row);
            self.oldest_generation += 1;
        }
    }
}

/// Count of distinct labels in `row`, labels being `< n_labels`.
pub fn distinct_labels(row: &[usize], n_labels: usize) -> usize {
    let mut seen = vec![false; n_labels];
    let mut count = 0;
    for &label in row {
        if !seen[label] {
            seen[label] = true;
            count += 1;
        }
    }
    count
}

/// Eve indices `E_{0,r}`, kept as a single persistent row.
#[derive(Debug, Clone)]
pub struct EveRow {
    row: Vec<usize>,
    scratch: Vec<usize>,
    generation: usize,
}

impl EveRow {
    pub fn new(n_particles: usize) -> Self {
        Self {
            row: (0..n_particles).collect(),
            scratch: vec![0; n_particles],
            generation: 0,
        }
    }

    pub fn advance(&mut self, ancestors: &[usize]) -> Result<()> {
        let n = self.row.len();
        if ancestors.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: ancestors.len(),
            });
        }
        for (dst, &a) in self.scratch.iter_mut().zip(ancestors) {
            *dst = *self.row.get(a).ok_or(Error::InvalidAncestor {
                index: a,
                n_particles: n,
            })?;
        }
        std::mem::swap(&mut self.row, &mut self.scratch);
        self.generation += 1;
        Ok(())
    }

    pub fn row(&self) -> &[usize] {
        &self.row
    }

    /// Number of selection steps applied so far.
    pub fn generation(&self) -> usize {
        self.generation
    }

    pub fn distinct_count(&self) -> usize {
        distinct_labels(&self.row, self.row.len())
    }
}

/// The last `depth` ancestor arrays, for reconstructing every Enoch row up to
/// lag `depth` at selected times only.
///
/// Pushing costs one copy of `N` indices; reconstructing all rows costs
/// `O(depth * N)`. Studies that need all lags at a few checkpoints use this
/// instead of gathering `depth` rows at every step.
#[derive(Debug, Clone)]
pub struct AncestryBuffer {
    n_particles: usize,
    depth: usize,
    history: VecDeque<Vec<usize>>,
}

impl AncestryBuffer {
    pub fn new(n_particles: usize, depth: usize) -> Self {
        Self {
            n_particles,
            depth,
            history: VecDeque::with_capacity(depth),
        }
    }

    pub fn push(&mut self, ancestors: &[usize]) -> Result<()> {
        if ancestors.len() != self.n_particles {
            return Err(Error::LengthMismatch {
                expected: self.n_particles,
                got: ancestors.len(),
            });
        }
        if self.depth == 0 {
            return Ok(());
        }
        let mut slot = if self.history.len() == self.depth {
            self.history.pop_front().expect("non-empty")
        } else {
            Vec::with_capacity(self.n_particles)
        };
        slot.clear();
        slot.extend_from_slice(ancestors);
        self.history.push_back(slot);
        Ok(())
    }

    /// Number of lags available beyond lag 0.
    pub fn available_lags(&self) -> usize {
        self.history.len()
    }

    /// Calls `f(lag, row)` for `lag = 0 ..= available_lags()`, where `row` is
    /// the Enoch row at lag `lag` relative to the newest generation.
    pub fn for_each_row(&self, mut f: impl FnMut(usize, &[usize])) {
        let mut row: Vec<usize> = (0..self.n_particles).collect();
        f(0, &row);
        for (k, ancestors) in self.history.iter().rev().enumerate() {
            for v in row.iter_mut() {
                *v = ancestors[*v];
            }
            f(k + 1, &row);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_single_identity_row() {
        let w = EnochWindow::new(3).unwrap();
        assert_eq!(w.rows().collect::<Vec<_>>(), vec![&[0, 1, 2][..]]);
        assert_eq!(w.oldest_generation(), 0);
        assert_eq!(w.distinct_count(0).unwrap(), 3);
        let w1 = EnochWindow::new(1).unwrap();
        assert_eq!(w1.row(0).unwrap(), &[0]);
        assert!(EnochWindow::new(0).is_err());
    }

    #[test]
    fn identity_ancestors_leave_rows_unchanged() {
        let mut w = EnochWindow::new(4).unwrap();
        w.advance(&[2, 2, 0, 1], 10).unwrap();
        let before: Vec<Vec<usize>> = w.rows().map(<[usize]>::to_vec).collect();
        w.advance(&[0, 1, 2, 3], 10).unwrap();
        let after: Vec<Vec<usize>> = w.rows().map(<[usize]>::to_vec).collect();
        assert_eq!(&after[..2], &before[..]);
        assert_eq!(after[2], vec![0, 1, 2, 3]);
    }

    #[test]
    fn full_coalescence_makes_rows_constant() {
        let mut w = EnochWindow::new(4).unwrap();
        w.advance(&[3, 1, 0, 2], 10).unwrap();
        let old = w.row(0).unwrap().to_vec();
        w.advance(&[1, 1, 1, 1], 10).unwrap();
        assert_eq!(w.row(0).unwrap(), &[old[1]; 4]);
        assert_eq!(w.row(1).unwrap(), &[1; 4]);
        assert_eq!(w.distinct_count(0).unwrap(), 1);
    }

    #[test]
    fn hand_traced_eve_row() {
        let mut w = EnochWindow::new(3).unwrap();
        // 1-based (1,1,2) then (3,3,1).
        w.advance(&[0, 0, 1], 10).unwrap();
        w.advance(&[2, 2, 0], 10).unwrap();
        assert_eq!(w.row(0).unwrap(), &[1, 1, 0]); // 1-based (2,2,1)
        assert_eq!(w.distinct_count(0).unwrap(), 2);
    }

    #[test]
    fn rows_are_bounded() {
        let mut w = EnochWindow::new(2).unwrap();
        for _ in 0..20 {
            w.advance(&[1, 0], 3).unwrap();
            assert!(w.len() <= 3);
        }
        assert_eq!(w.newest_generation(), 20);
        assert_eq!(w.oldest_generation(), 18);
        assert!(w.row(17).is_err());
        w.advance(&[0, 1], 1).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(w.oldest_generation(), 21);
        assert_eq!(w.newest_generation(), 21);
    }

    #[test]
    fn invalid_ancestors_are_rejected() {
        let mut w = EnochWindow::new(2).unwrap();
        assert!(matches!(w.advance(&[0, 2], 3), Err(Error::InvalidAncestor { .. })));
        assert!(matches!(w.advance(&[0], 3), Err(Error::LengthMismatch { .. })));
        assert!(w.advance(&[0, 1], 0).is_err());
    }

    #[test]
    fn lag_rows_clamp_at_generation_zero() {
        let mut w = EnochWindow::new(2).unwrap();
        w.advance(&[1, 1], 5).unwrap();
        assert_eq!(w.row_at_lag(7).unwrap(), w.row(0).unwrap());
        w.advance(&[0, 0], 2).unwrap();
        assert!(w.row_at_lag(2).is_err());
    }

    #[test]
    fn ancestry_buffer_matches_window() {
        let steps: [[usize; 4]; 3] = [[1, 1, 3, 0], [2, 0, 0, 3], [3, 3, 1, 2]];
        let mut w = EnochWindow::new(4).unwrap();
        let mut buf = AncestryBuffer::new(4, 2);
        let mut eve = EveRow::new(4);
        for a in &steps {
            w.advance(a, 10).unwrap();
            buf.push(a).unwrap();
            eve.advance(a).unwrap();
        }
        let mut seen = 0;
        buf.for_each_row(|lag, row| {
            assert_eq!(row, w.row_at_lag(lag).unwrap());
            seen += 1;
        });
        assert_eq!(seen, 3);
        assert_eq!(eve.row(), w.row(0).unwrap());
        assert_eq!(eve.distinct_count(), w.distinct_count(0).unwrap());
    }
}
