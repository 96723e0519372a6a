//! Tile traversals for each stationary scheme.
//!
//! A step is one tile-pair multiply-accumulate: input tile `(i, t)` times
//! weight tile `(t, j)` into output block `(i, j)`. Schedules are decoded
//! from the step index on demand, so even full-size transformer GEMMs never
//! materialize their step list.
//!
//! Load flags follow each scheme's buffer discipline: the stationary operand
//! is fetched once per residency, streamed operands are fetched every step.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gemm::{Scheme, ValidatedProblem};

/// Block coordinate inside one matrix's tile grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TileCoord {
    pub row_block: u64,
    pub col_block: u64,
}

impl TileCoord {
    pub const fn new(row_block: u64, col_block: u64) -> Self {
        Self {
            row_block,
            col_block,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TileStep {
    pub input: TileCoord,
    pub weight: TileCoord,
    pub output: TileCoord,
    /// Input tile fetched from external memory this step.
    pub input_load: bool,
    /// Weight tile fetched from external memory this step.
    pub weight_load: bool,
    /// Incomplete output block written out, to be reloaded later.
    pub psum_spill: bool,
    /// Completed output block written out.
    pub final_write: bool,
}

impl TileStep {
    /// Step for the pair `input (i, t) × weight (t, j)`.
    pub fn pair(i: u64, t: u64, j: u64) -> Self {
        Self {
            input: TileCoord::new(i, t),
            weight: TileCoord::new(t, j),
            output: TileCoord::new(i, j),
            input_load: false,
            weight_load: false,
            psum_spill: false,
            final_write: false,
        }
    }

    /// Shared-dimension alignment and output placement hold.
    pub fn is_aligned(&self) -> bool {
        self.input.col_block == self.weight.row_block
            && self.output.row_block == self.input.row_block
            && self.output.col_block == self.weight.col_block
    }
}

/// Sweep directions used by the generator. EMA totals do not depend on the
/// choice; the order of events within the schedule does.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Traversal {
    /// Directions as drawn in the dataflow figures: the weight-stationary
    /// input sweep runs east to west along the shared dimension, and every
    /// other sweep resets to the first tile.
    #[default]
    Figure,
    /// Every loop runs in ascending tile order.
    RowMajor,
}

#[derive(Debug, Clone)]
enum Steps {
    Generated(Traversal),
    Explicit(Vec<TileStep>),
}

/// Ordered tile steps for one resolved scheme.
#[derive(Debug, Clone)]
pub struct TileSchedule {
    problem: ValidatedProblem,
    scheme: Scheme,
    steps: Steps,
}

/// Builds the schedule for `scheme` with the default traversal.
pub fn generate(problem: &ValidatedProblem, scheme: Scheme) -> Result<TileSchedule> {
    TileSchedule::generate(problem, scheme, Traversal::default())
}

impl TileSchedule {
    pub fn generate(
        problem: &ValidatedProblem,
        scheme: Scheme,
        traversal: Traversal,
    ) -> Result<Self> {
        match scheme {
            Scheme::Tas => Err(Error::SchemeUnresolved("tas")),
            Scheme::Naive => Err(Error::NaiveHasNoSchedule),
            _ => Ok(Self {
                problem: *problem,
                scheme,
                steps: Steps::Generated(traversal),
            }),
        }
    }

    /// Wraps a hand-built (possibly invalid) step list. Used to check that
    /// the simulator and the functional oracle reject broken schedules.
    pub fn from_steps(problem: &ValidatedProblem, scheme: Scheme, steps: Vec<TileStep>) -> Self {
        Self {
            problem: *problem,
            scheme,
            steps: Steps::Explicit(steps),
        }
    }

    pub fn problem(&self) -> &ValidatedProblem {
        &self.problem
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn len(&self) -> u64 {
        match &self.steps {
            Steps::Generated(_) => self.problem.step_count(),
            Steps::Explicit(v) => v.len() as u64,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn step(&self, index: u64) -> Option<TileStep> {
        if index >= self.len() {
            return None;
        }
        match &self.steps {
            Steps::Generated(traversal) => Some(self.decode(index, *traversal)),
            Steps::Explicit(v) => v.get(index as usize).copied(),
        }
    }

    pub fn iter(&self) -> StepIter<'_> {
        StepIter {
            schedule: self,
            next: 0,
            end: self.len(),
        }
    }

    pub fn to_vec(&self) -> Vec<TileStep> {
        self.iter().collect()
    }

    /// Psum elements the scheme keeps on chip at once: one output tile for
    /// IS/WS/OS, an `m×k′` window for IS-OS, an `m′×k` window for WS-OS.
    pub fn psum_requirement(&self) -> u64 {
        let p = &self.problem;
        let t = p.tiles();
        match self.scheme {
            Scheme::InputStationaryOs => t.m * (p.k_window_tiles() * t.k).min(p.shape().k),
            Scheme::WeightStationaryOs => (p.m_window_tiles() * t.m).min(p.shape().m) * t.k,
            _ => t.m * t.k,
        }
    }

    /// Writes one CSV line per step:
    /// `step,i_row,i_col,w_row,w_col,o_row,o_col,il,wl,sp,fw`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "step,i_row,i_col,w_row,w_col,o_row,o_col,il,wl,sp,fw")?;
        for (n, s) in self.iter().enumerate() {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                n,
                s.input.row_block,
                s.input.col_block,
                s.weight.row_block,
                s.weight.col_block,
                s.output.row_block,
                s.output.col_block,
                u8::from(s.input_load),
                u8::from(s.weight_load),
                u8::from(s.psum_spill),
                u8::from(s.final_write),
            )?;
        }
        Ok(())
    }

    fn decode(&self, index: u64, traversal: Traversal) -> TileStep {
        let p = &self.problem;
        let (tm, tn, tk) = (p.tm(), p.tn(), p.tk());

        // (i, t position, j, input_load, weight_load)
        let (i, pt, j, input_load, weight_load) = match self.scheme {
            Scheme::InputStationary => {
                let (i, r) = (index / (tn * tk), index % (tn * tk));
                let (pt, j) = (r / tk, r % tk);
                (i, pt, j, j == 0, true)
            }
            Scheme::WeightStationary => {
                let (j, r) = (index / (tn * tm), index % (tn * tm));
                let (pt, i) = (r / tm, r % tm);
                (i, pt, j, true, i == 0)
            }
            Scheme::OutputStationaryRow => {
                let (i, r) = (index / (tk * tn), index % (tk * tn));
                (i, r % tn, r / tn, true, true)
            }
            Scheme::OutputStationaryCol => {
                let (j, r) = (index / (tm * tn), index % (tm * tn));
                (r / tn, r % tn, j, true, true)
            }
            Scheme::InputStationaryOs => {
                let (i, r) = (index / (tn * tk), index % (tn * tk));
                let (pt, j, first) = windowed(r, tn, tk, p.k_window_tiles());
                (i, pt, j, first, true)
            }
            Scheme::WeightStationaryOs => {
                let (j, r) = (index / (tn * tm), index % (tn * tm));
                let (pt, i, first) = windowed(r, tn, tm, p.m_window_tiles());
                (i, pt, j, true, first)
            }
            Scheme::Naive | Scheme::Tas => unreachable!("rejected at construction"),
        };

        let descending =
            traversal == Traversal::Figure && self.scheme == Scheme::WeightStationary;
        let t = if descending { tn - 1 - pt } else { pt };
        let last = pt == tn - 1;
        let spills = matches!(
            self.scheme,
            Scheme::InputStationary | Scheme::WeightStationary
        );

        TileStep {
            input_load,
            weight_load,
            psum_spill: spills && !last,
            final_write: last,
            ..TileStep::pair(i, t, j)
        }
    }
}

/// Decodes an offset inside one row (or column) of the hybrid traversal:
/// windows of `width` tiles over `tiles` positions, each window swept
/// `depth` times along the shared dimension. Returns the shared-dimension
/// position, the tile index and whether it is the first tile of its sweep.
fn windowed(offset: u64, depth: u64, tiles: u64, width: u64) -> (u64, u64, bool) {
    let full = tiles / width;
    let full_span = full * width * depth;
    let (window, rest, w) = if offset < full_span {
        (offset / (width * depth), offset % (width * depth), width)
    } else {
        (full, offset - full_span, tiles - full * width)
    };
    let pos = rest % w;
    (rest / w, window * width + pos, pos == 0)
}

pub struct StepIter<'a> {
    schedule: &'a TileSchedule,
    next: u64,
    end: u64,
}

impl Iterator for StepIter<'_> {
    type Item = TileStep;

    fn next(&mut self) -> Option<TileStep> {
        if self.next >= self.end {
            return None;
        }
        let step = self.schedule.step(self.next);
        self.next += 1;
        step
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = (self.end - self.next) as usize;
        (n, Some(n))
    }
}

impl ExactSizeIterator for StepIter<'_> {}

#[cfg(test)]
mod tests {
    use std::collections::HashMap;

    use super::*;
    use crate::gemm::{validate, GemmShape, TileConfig};

    fn problem(m: u64, n: u64, k: u64, tiles: TileConfig) -> ValidatedProblem {
        validate(GemmShape::new(m, n, k), tiles, false).unwrap()
    }

    fn longest_run<F: Fn(&TileStep) -> TileCoord>(steps: &[TileStep], key: F) -> usize {
        let mut best = 0;
        let mut run = 0;
        let mut prev = None;
        for s in steps {
            let c = key(s);
            run = if prev == Some(c) { run + 1 } else { 1 };
            prev = Some(c);
            best = best.max(run);
        }
        best
    }

    #[test]
    fn input_stationary_holds_input_for_k_over_k_steps() {
        let p = problem(2, 2, 2, TileConfig::square(1));
        let steps = generate(&p, Scheme::InputStationary).unwrap().to_vec();
        assert_eq!(steps[0].input, TileCoord::new(0, 0));
        assert_eq!(steps[1].input, TileCoord::new(0, 0));
        assert_ne!(steps[2].input, TileCoord::new(0, 0));
        assert_eq!(longest_run(&steps, |s| s.input), 2);
    }

    #[test]
    fn weight_stationary_holds_weight_for_m_over_m_steps() {
        let p = problem(2, 2, 2, TileConfig::square(1));
        for traversal in [Traversal::Figure, Traversal::RowMajor] {
            let steps = TileSchedule::generate(&p, Scheme::WeightStationary, traversal)
                .unwrap()
                .to_vec();
            assert_eq!(steps[0].weight, steps[1].weight);
            assert_ne!(steps[1].weight, steps[2].weight);
            assert_eq!(longest_run(&steps, |s| s.weight), 2);
        }
        let row_major = TileSchedule::generate(&p, Scheme::WeightStationary, Traversal::RowMajor)
            .unwrap()
            .to_vec();
        assert_eq!(row_major[0].weight, TileCoord::new(0, 0));
    }

    #[test]
    fn output_stationary_row_order() {
        let p = problem(2, 2, 2, TileConfig::square(1));
        let steps = generate(&p, Scheme::OutputStationaryRow).unwrap().to_vec();
        assert_eq!(steps.len(), 8);
        assert!(steps.iter().all(|s| !s.psum_spill));
        let finals: Vec<_> = steps
            .iter()
            .filter(|s| s.final_write)
            .map(|s| s.output)
            .collect();
        assert_eq!(
            finals,
            vec![
                TileCoord::new(0, 0),
                TileCoord::new(0, 1),
                TileCoord::new(1, 0),
                TileCoord::new(1, 1)
            ]
        );

        let col = generate(&p, Scheme::OutputStationaryCol).unwrap();
        let finals: Vec<_> = col.iter().filter(|s| s.final_write).map(|s| s.output).collect();
        assert_eq!(finals[1], TileCoord::new(1, 0));
    }

    #[test]
    fn narrow_window_reloads_each_input_tile_twice() {
        let p = problem(4, 4, 8, TileConfig::square(2).with_k_prime(4));
        let schedule = generate(&p, Scheme::InputStationaryOs).unwrap();
        let mut loads: HashMap<TileCoord, u32> = HashMap::new();
        for s in schedule.iter().filter(|s| s.input_load) {
            *loads.entry(s.input).or_default() += 1;
        }
        assert_eq!(loads.len(), 4);
        assert!(loads.values().all(|&n| n == 2));
    }

    #[test]
    fn partial_window_in_relaxed_mode() {
        // Tk = 5 column tiles, windows of 2 -> widths 2, 2, 1
        let p = problem(3, 4, 10, TileConfig::new(1, 2, 2).with_k_prime(4));
        let schedule = generate(&p, Scheme::InputStationaryOs).unwrap();
        let steps = schedule.to_vec();
        assert_eq!(steps.len() as u64, p.step_count());
        let first_row: Vec<_> = steps[..10].iter().map(|s| (s.input.col_block, s.output.col_block)).collect();
        assert_eq!(
            first_row,
            vec![(0, 0), (0, 1), (1, 0), (1, 1), (0, 2), (0, 3), (1, 2), (1, 3), (0, 4), (1, 4)]
        );
    }

    #[test]
    fn every_step_is_aligned_and_pairs_are_unique() {
        let p = problem(6, 5, 7, TileConfig::new(4, 2, 3).with_k_prime(6).with_m_prime(4));
        for scheme in Scheme::SCHEDULED {
            let steps = generate(&p, scheme).unwrap().to_vec();
            assert!(steps.iter().all(TileStep::is_aligned));
            let mut seen: Vec<_> = steps
                .iter()
                .map(|s| (s.input.row_block, s.input.col_block, s.weight.col_block))
                .collect();
            seen.sort_unstable();
            seen.dedup();
            assert_eq!(seen.len() as u64, p.step_count(), "{scheme}");
            assert!(steps.iter().all(|s| !(s.psum_spill && s.final_write)));
        }
    }

    #[test]
    fn unresolved_and_naive_are_rejected() {
        let p = problem(2, 2, 2, TileConfig::square(1));
        assert_eq!(generate(&p, Scheme::Tas).unwrap_err(), Error::SchemeUnresolved("tas"));
        assert_eq!(generate(&p, Scheme::Naive).unwrap_err(), Error::NaiveHasNoSchedule);
    }

    #[test]
    fn csv_dump_layout() {
        let p = problem(2, 2, 2, TileConfig::new(1, 2, 2));
        let mut out = Vec::new();
        generate(&p, Scheme::InputStationary)
            .unwrap()
            .write_csv(&mut out)
            .unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(
            text,
            "step,i_row,i_col,w_row,w_col,o_row,o_col,il,wl,sp,fw\n\
             0,0,0,0,0,0,0,1,1,0,1\n\
             1,1,0,0,0,1,0,1,1,0,1\n"
        );
    }
}
