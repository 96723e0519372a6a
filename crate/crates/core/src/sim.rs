//! Trace simulation of tile schedules.
//!
//! [`simulate`] replays a schedule against a one-level on-chip buffer and
//! counts the elements that actually cross the external-memory boundary.
//! [`verify_functional`] executes the same schedule on integer matrices and
//! compares the assembled output with [`reference_gemm`].
//!
//! Timing is step-granular. A step first fetches its operands (and a spilled
//! partial sum, if any), then accumulates, then writes. A psum spill blocks
//! the step: the slot is needed again and the data has to be read back, so a
//! spill coinciding with any fetch is a concurrent read/write step. A final
//! write retires a finished block into the output stream and is only counted
//! as a posted overlap.

use std::collections::{HashMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gemm::EmaBreakdown;
use crate::schedule::{TileCoord, TileSchedule, TileStep};

/// Schedules above this many steps are not traced by the command-line tool.
pub const MAX_SIM_STEPS: u64 = 100_000_000;

/// Largest `M·N + N·K` accepted by [`verify_functional`].
pub const MAX_VERIFY_ELEMS: u64 = 1 << 24;

/// On-chip storage available to a simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BufferModel {
    pub input_tile_slots: u32,
    pub weight_tile_slots: u32,
    pub psum_capacity_elems: u64,
}

impl BufferModel {
    /// One slot per operand and exactly the psum space the scheme needs.
    pub fn for_schedule(schedule: &TileSchedule) -> Self {
        Self {
            input_tile_slots: 1,
            weight_tile_slots: 1,
            psum_capacity_elems: schedule.psum_requirement(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SimReport {
    /// Traffic by operand. Output counts spill writes and final writes once
    /// each; reloads are reported separately in `spill_reload_elems`.
    pub ema: EmaBreakdown,
    /// Output-tile spill events.
    pub spill_writes: u64,
    /// Output-tile reload events.
    pub spill_reloads: u64,
    /// Elements read back from spilled partial sums.
    pub spill_reload_elems: u64,
    /// Steps where a psum spill coincides with an external read.
    pub concurrent_rw_steps: u64,
    /// Steps where a final write coincides with an external read.
    pub posted_write_overlaps: u64,
    pub peak_psum_elems: u64,
    pub steps_executed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Block {
    Untouched,
    OnChip,
    Spilled,
    Written,
}

struct Residency {
    slots: usize,
    tiles: VecDeque<TileCoord>,
}

impl Residency {
    fn new(slots: u32) -> Self {
        Self {
            slots: slots as usize,
            tiles: VecDeque::with_capacity(slots as usize),
        }
    }

    fn load(&mut self, tile: TileCoord) {
        if self.tiles.contains(&tile) {
            return;
        }
        if self.tiles.len() == self.slots {
            self.tiles.pop_front();
        }
        self.tiles.push_back(tile);
    }

    fn holds(&self, tile: &TileCoord) -> bool {
        self.tiles.contains(tile)
    }
}

/// Replays `schedule` and measures its external traffic.
///
/// Any inconsistency in the schedule (unaligned step, operand used without
/// being resident, pair repeated or missing, block finalized early or twice)
/// is reported as [`Error::ScheduleInvariantViolated`].
pub fn simulate(schedule: &TileSchedule, buffers: &BufferModel) -> Result<SimReport> {
    if buffers.input_tile_slots == 0 {
        return Err(Error::ZeroDimension("input_tile_slots"));
    }
    if buffers.weight_tile_slots == 0 {
        return Err(Error::ZeroDimension("weight_tile_slots"));
    }
    let required = schedule.psum_requirement();
    if buffers.psum_capacity_elems < required {
        return Err(Error::InsufficientPsumCapacity {
            required,
            available: buffers.psum_capacity_elems,
        });
    }

    let p = schedule.problem();
    let (tm, tn, tk) = (p.tm(), p.tn(), p.tk());
    let mut seen = vec![0u64; (p.step_count() as usize).div_ceil(64)];
    let mut blocks = vec![Block::Untouched; (tm * tk) as usize];
    let mut contributions = vec![0u64; (tm * tk) as usize];
    let mut inputs = Residency::new(buffers.input_tile_slots);
    let mut weights = Residency::new(buffers.weight_tile_slots);
    let mut report = SimReport::default();
    let mut psum_on_chip = 0u64;

    for (index, s) in schedule.iter().enumerate() {
        let index = index as u64;
        let violated = |reason: String| Error::ScheduleInvariantViolated {
            step: index,
            reason,
        };
        let (i, t, j) = (s.input.row_block, s.input.col_block, s.weight.col_block);

        if !s.is_aligned() {
            return Err(violated(format!("unaligned step {s:?}")));
        }
        if i >= tm || t >= tn || j >= tk {
            return Err(violated(format!("tile ({i}, {t}, {j}) outside the grid")));
        }
        if s.psum_spill && s.final_write {
            return Err(violated("spill and final write in one step".into()));
        }
        let pair = ((i * tn + t) * tk + j) as usize;
        if seen[pair / 64] & (1 << (pair % 64)) != 0 {
            return Err(violated(format!("pair ({i}, {t}, {j}) repeated")));
        }
        seen[pair / 64] |= 1 << (pair % 64);

        if s.input_load {
            inputs.load(s.input);
            report.ema.input_elems += p.rows_in(i) * p.shared_in(t);
        } else if !inputs.holds(&s.input) {
            return Err(violated(format!("input tile {:?} used without a load", s.input)));
        }
        if s.weight_load {
            weights.load(s.weight);
            report.ema.weight_elems += p.shared_in(t) * p.cols_in(j);
        } else if !weights.holds(&s.weight) {
            return Err(violated(format!("weight tile {:?} used without a load", s.weight)));
        }

        let block = (i * tk + j) as usize;
        let out_elems = p.rows_in(i) * p.cols_in(j);
        let mut reloaded = false;
        match blocks[block] {
            Block::Untouched => {
                blocks[block] = Block::OnChip;
                psum_on_chip += out_elems;
            }
            Block::Spilled => {
                blocks[block] = Block::OnChip;
                psum_on_chip += out_elems;
                report.spill_reloads += 1;
                report.spill_reload_elems += out_elems;
                reloaded = true;
            }
            Block::OnChip => {}
            Block::Written => {
                return Err(violated(format!("output block ({i}, {j}) already written")));
            }
        }
        contributions[block] += 1;
        report.peak_psum_elems = report.peak_psum_elems.max(psum_on_chip);
        if psum_on_chip > buffers.psum_capacity_elems {
            return Err(violated(format!(
                "{psum_on_chip} psum elements on chip, capacity {}",
                buffers.psum_capacity_elems
            )));
        }

        let reads = s.input_load || s.weight_load || reloaded;
        if s.psum_spill {
            blocks[block] = Block::Spilled;
            psum_on_chip -= out_elems;
            report.spill_writes += 1;
            report.ema.output_elems += out_elems;
            if reads {
                report.concurrent_rw_steps += 1;
            }
        }
        if s.final_write {
            if contributions[block] != tn {
                return Err(violated(format!(
                    "output block ({i}, {j}) written after {} of {tn} contributions",
                    contributions[block]
                )));
            }
            blocks[block] = Block::Written;
            psum_on_chip -= out_elems;
            report.ema.output_elems += out_elems;
            if reads {
                report.posted_write_overlaps += 1;
            }
        }
        report.steps_executed += 1;
    }

    let end = |reason: String| Error::ScheduleInvariantViolated {
        step: report.steps_executed,
        reason,
    };
    if report.steps_executed != p.step_count() {
        return Err(end(format!(
            "{} steps executed, {} expected",
            report.steps_executed,
            p.step_count()
        )));
    }
    if let Some(b) = blocks.iter().position(|b| *b != Block::Written) {
        let b = b as u64;
        return Err(end(format!(
            "output block ({}, {}) never written",
            b / tk,
            b % tk
        )));
    }
    Ok(report)
}

/// Dense row-major integer matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<i64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0; rows * cols],
        }
    }

    pub fn identity(size: usize) -> Self {
        let mut m = Self::zeros(size, size);
        for d in 0..size {
            m.set(d, d, 1);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<i64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        Self {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        }
    }

    /// Entries drawn uniformly from `lo..=hi`.
    pub fn random<R: Rng>(rows: usize, cols: usize, lo: i64, hi: i64, rng: &mut R) -> Self {
        Self {
            rows,
            cols,
            data: (0..rows * cols).map(|_| rng.gen_range(lo..=hi)).collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> i64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: i64) {
        self.data[r * self.cols + c] = v;
    }
}

/// Triple-loop product `C[i][j] = Σ_t A[i][t]·B[t][j]`.
pub fn reference_gemm(input: &Matrix, weight: &Matrix) -> Matrix {
    assert_eq!(input.cols, weight.rows, "shared dimension mismatch");
    let mut out = Matrix::zeros(input.rows, weight.cols);
    for i in 0..input.rows {
        for j in 0..weight.cols {
            let mut acc = 0i64;
            for t in 0..input.cols {
                acc += input.get(i, t) * weight.get(t, j);
            }
            out.set(i, j, acc);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail(String),
}

impl Verdict {
    pub fn is_pass(&self) -> bool {
        matches!(self, Verdict::Pass)
    }
}

/// Executes `schedule` on pseudorandom integer matrices and compares the
/// result with [`reference_gemm`].
///
/// Entries are drawn from `1..=16`, so every tile pair contributes a strictly
/// positive amount: a dropped or repeated step always changes the result.
pub fn verify_functional(schedule: &TileSchedule, seed: u64) -> Result<Verdict> {
    let p = schedule.problem();
    let shape = p.shape();
    let elems = shape.input_elems() + shape.weight_elems();
    if elems > MAX_VERIFY_ELEMS {
        return Err(Error::ProblemTooLarge {
            elems,
            limit: MAX_VERIFY_ELEMS,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (m, n, k) = (shape.m as usize, shape.n as usize, shape.k as usize);
    let input = Matrix::random(m, n, 1, 16, &mut rng);
    let weight = Matrix::random(n, k, 1, 16, &mut rng);
    let tiles = p.tiles();
    let (tm, tn, tk) = (tiles.m as usize, tiles.n as usize, tiles.k as usize);

    let mut on_chip: HashMap<TileCoord, Vec<i64>> = HashMap::new();
    let mut spilled: HashMap<TileCoord, Vec<i64>> = HashMap::new();
    let mut written = vec![false; (p.tm() * p.tk()) as usize];
    let mut output = Matrix::zeros(m, k);

    for (index, s) in schedule.iter().enumerate() {
        let TileStep { input: a, weight: b, output: o, .. } = s;
        if !s.is_aligned() || a.row_block >= p.tm() || a.col_block >= p.tn() || b.col_block >= p.tk() {
            return Ok(Verdict::Fail(format!("step {index}: malformed step {s:?}")));
        }
        let block = (o.row_block * p.tk() + o.col_block) as usize;
        if written[block] {
            return Ok(Verdict::Fail(format!(
                "step {index}: output block {o:?} used after its final write"
            )));
        }
        let rows = p.rows_in(o.row_block) as usize;
        let cols = p.cols_in(o.col_block) as usize;
        let depth = p.shared_in(a.col_block) as usize;
        let (r0, t0, c0) = (
            o.row_block as usize * tm,
            a.col_block as usize * tn,
            o.col_block as usize * tk,
        );

        let mut acc = on_chip
            .remove(&o)
            .or_else(|| spilled.remove(&o))
            .unwrap_or_else(|| vec![0; rows * cols]);
        for r in 0..rows {
            for c in 0..cols {
                let mut sum = 0;
                for d in 0..depth {
                    sum += input.get(r0 + r, t0 + d) * weight.get(t0 + d, c0 + c);
                }
                acc[r * cols + c] += sum;
            }
        }

        if s.final_write {
            for r in 0..rows {
                for c in 0..cols {
                    output.set(r0 + r, c0 + c, acc[r * cols + c]);
                }
            }
            written[block] = true;
        } else if s.psum_spill {
            spilled.insert(o, acc);
        } else {
            on_chip.insert(o, acc);
        }
    }

    if let Some(b) = written.iter().position(|w| !w) {
        let tk_blocks = p.tk() as usize;
        return Ok(Verdict::Fail(format!(
            "output block ({}, {}) never written",
            b / tk_blocks,
            b % tk_blocks
        )));
    }
    let expected = reference_gemm(&input, &weight);
    if output != expected {
        let wrong = (0..m * k)
            .filter(|&x| output.get(x / k, x % k) != expected.get(x / k, x % k))
            .count();
        return Ok(Verdict::Fail(format!("{wrong} output elements differ from the reference")));
    }
    Ok(Verdict::Pass)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gemm::{validate, GemmShape, Scheme, TileConfig};
    use crate::schedule::generate;

    fn run(m: u64, n: u64, k: u64, tiles: TileConfig, scheme: Scheme) -> SimReport {
        let p = validate(GemmShape::new(m, n, k), tiles, false).unwrap();
        let s = generate(&p, scheme).unwrap();
        simulate(&s, &BufferModel::for_schedule(&s)).unwrap()
    }

    #[test]
    fn input_stationary_traffic() {
        let r = run(4, 4, 4, TileConfig::square(2), Scheme::InputStationary);
        assert_eq!(r.ema, EmaBreakdown::new(16, 32, 32));
        assert_eq!(r.steps_executed, 8);
    }

    #[test]
    fn input_stationary_spill_rounds() {
        let r = run(2, 4, 2, TileConfig::square(1), Scheme::InputStationary);
        assert_eq!(r.steps_executed, 16);
        assert_eq!(r.spill_writes, 12);
        assert_eq!(r.spill_reloads, 12);
        assert_eq!(r.spill_reload_elems, 12);
        assert_eq!(r.concurrent_rw_steps, 12);
        assert_eq!(r.peak_psum_elems, 1);
    }

    #[test]
    fn hybrids_never_spill() {
        for scheme in [
            Scheme::OutputStationaryRow,
            Scheme::OutputStationaryCol,
            Scheme::InputStationaryOs,
            Scheme::WeightStationaryOs,
        ] {
            let r = run(8, 8, 8, TileConfig::square(2).with_k_prime(4).with_m_prime(4), scheme);
            assert_eq!(r.spill_writes, 0, "{scheme}");
            assert_eq!(r.concurrent_rw_steps, 0, "{scheme}");
            assert_eq!(r.ema.output_elems, 64);
        }
    }

    #[test]
    fn peak_psum_matches_window() {
        let t = TileConfig::square(2).with_k_prime(4).with_m_prime(6);
        assert_eq!(run(8, 4, 8, t, Scheme::InputStationaryOs).peak_psum_elems, 8);
        assert_eq!(run(8, 4, 8, t, Scheme::WeightStationaryOs).peak_psum_elems, 12);
        assert_eq!(run(8, 4, 8, t, Scheme::OutputStationaryRow).peak_psum_elems, 4);
    }

    #[test]
    fn undersized_psum_buffer_is_refused() {
        let p = validate(GemmShape::new(4, 4, 8), TileConfig::square(2), true).unwrap();
        let s = generate(&p, Scheme::InputStationaryOs).unwrap();
        let buffers = BufferModel {
            psum_capacity_elems: 4,
            ..BufferModel::for_schedule(&s)
        };
        assert_eq!(
            simulate(&s, &buffers),
            Err(Error::InsufficientPsumCapacity {
                required: 16,
                available: 4
            })
        );
    }

    #[test]
    fn tampered_schedules_trip_invariants() {
        let p = validate(GemmShape::new(4, 4, 4), TileConfig::square(2), true).unwrap();
        let s = generate(&p, Scheme::OutputStationaryRow).unwrap();
        let buffers = BufferModel::for_schedule(&s);

        let mut dropped = s.to_vec();
        dropped.remove(3);
        let e = simulate(&TileSchedule::from_steps(&p, s.scheme(), dropped), &buffers);
        assert!(e.unwrap_err().is_internal());

        let mut doubled = s.to_vec();
        doubled.insert(1, doubled[0]);
        let e = simulate(&TileSchedule::from_steps(&p, s.scheme(), doubled), &buffers);
        assert!(matches!(e, Err(Error::ScheduleInvariantViolated { step: 1, .. })));

        let mut no_load = s.to_vec();
        no_load[2].input_load = false;
        let e = simulate(&TileSchedule::from_steps(&p, s.scheme(), no_load), &buffers);
        assert!(matches!(e, Err(Error::ScheduleInvariantViolated { step: 2, .. })));
    }

    #[test]
    fn reference_gemm_basics() {
        let a = Matrix::from_rows(&[vec![3]]);
        let b = Matrix::from_rows(&[vec![4]]);
        assert_eq!(reference_gemm(&a, &b), Matrix::from_rows(&[vec![12]]));

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = Matrix::random(3, 5, -9, 9, &mut rng);
        assert_eq!(reference_gemm(&a, &Matrix::identity(5)), a);
    }

    #[test]
    fn scalar_problem_passes_for_every_scheme() {
        let p = validate(GemmShape::new(1, 1, 1), TileConfig::square(1), true).unwrap();
        for scheme in Scheme::SCHEDULED {
            let s = generate(&p, scheme).unwrap();
            assert_eq!(verify_functional(&s, 3), Ok(Verdict::Pass));
        }
    }

    #[test]
    fn windowed_hybrid_computes_the_product() {
        let p = validate(
            GemmShape::new(6, 4, 10),
            TileConfig::square(2).with_k_prime(4),
            false,
        )
        .unwrap();
        let s = generate(&p, Scheme::InputStationaryOs).unwrap();
        assert_eq!(verify_functional(&s, 7), Ok(Verdict::Pass));
    }

    #[test]
    fn deleted_step_fails_verification() {
        let p = validate(GemmShape::new(4, 4, 4), TileConfig::square(2), true).unwrap();
        let s = generate(&p, Scheme::InputStationary).unwrap();
        for drop in 0..s.len() as usize {
            let mut steps = s.to_vec();
            steps.remove(drop);
            let broken = TileSchedule::from_steps(&p, s.scheme(), steps);
            assert!(!verify_functional(&broken, 11).unwrap().is_pass(), "drop {drop}");
        }
    }

    #[test]
    fn oversized_problem_is_not_materialized() {
        let p = validate(GemmShape::new(4096, 4096, 4096), TileConfig::square(64), true).unwrap();
        let s = generate(&p, Scheme::InputStationaryOs).unwrap();
        assert!(matches!(
            verify_functional(&s, 0),
            Err(Error::ProblemTooLarge { .. })
        ));
    }
}
