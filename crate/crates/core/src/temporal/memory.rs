//! Columns × cells sequence memory with permanence-based distal segments.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{RngState, RngStream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TmParams {
    pub columns: usize,
    pub cells_per_column: usize,
    pub activation_threshold: usize,
    pub learning_threshold: usize,
    pub initial_permanence: f64,
    pub connected_permanence: f64,
    pub permanence_increment: f64,
    pub permanence_decrement: f64,
    /// Decrement applied to segments that predicted a column that stayed off.
    pub predicted_segment_decrement: f64,
    pub max_segments_per_cell: usize,
    pub max_synapses_per_segment: usize,
    /// Target number of active synapses a learning segment grows towards.
    pub max_new_synapses: usize,
}

impl Default for TmParams {
    fn default() -> Self {
        Self {
            columns: 256,
            cells_per_column: 8,
            activation_threshold: 7,
            learning_threshold: 5,
            initial_permanence: 0.55,
            connected_permanence: 0.5,
            permanence_increment: 0.10,
            permanence_decrement: 0.05,
            predicted_segment_decrement: 0.01,
            max_segments_per_cell: 16,
            max_synapses_per_segment: 32,
            max_new_synapses: 16,
        }
    }
}

impl TmParams {
    pub fn validate(&self) -> Result<()> {
        if self.columns == 0 || self.cells_per_column == 0 {
            return Err(Error::param(
                "columns",
                "columns and cells_per_column must be positive",
            ));
        }
        if self
            .columns
            .checked_mul(self.cells_per_column)
            .is_none_or(|n| n > u32::MAX as usize)
        {
            return Err(Error::param("columns", "too many cells"));
        }
        if self.activation_threshold == 0 || self.learning_threshold == 0 {
            return Err(Error::param(
                "activation_threshold",
                "thresholds must be positive",
            ));
        }
        if self.learning_threshold > self.activation_threshold {
            return Err(Error::param(
                "learning_threshold",
                "must not exceed activation_threshold",
            ));
        }
        for (name, v) in [
            ("initial_permanence", self.initial_permanence),
            ("connected_permanence", self.connected_permanence),
            ("permanence_increment", self.permanence_increment),
            ("permanence_decrement", self.permanence_decrement),
            (
                "predicted_segment_decrement",
                self.predicted_segment_decrement,
            ),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::param(name, format!("{v} outside [0, 1]")));
            }
        }
        if self.max_segments_per_cell == 0
            || self.max_synapses_per_segment == 0
            || self.max_new_synapses == 0
        {
            return Err(Error::param(
                "max_segments_per_cell",
                "segment and synapse limits must be positive",
            ));
        }
        if self.max_synapses_per_segment < self.activation_threshold {
            return Err(Error::param(
                "max_synapses_per_segment",
                "below activation_threshold",
            ));
        }
        Ok(())
    }

    pub fn n_cells(&self) -> usize {
        self.columns * self.cells_per_column
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Segment {
    presyn: Vec<u32>,
    perm: Vec<f64>,
    last_used: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TmStepResult {
    pub active_cells: Vec<u32>,
    pub predictive_cells: Vec<u32>,
    pub anomaly: f64,
}

/// Sequence memory for one input stream.
///
/// Learned state (segments, step counter, tie-break RNG position) is what
/// [`TemporalMemory::checkpoint`] captures. Activity from the previous step
/// is transient context and is not part of a checkpoint; a restored memory
/// starts a fresh sequence.
#[derive(Debug, Clone)]
pub struct TemporalMemory {
    params: TmParams,
    segments: Vec<Vec<Segment>>,
    iteration: u64,
    rng: RngStream,
    active: Vec<bool>,
    active_list: Vec<u32>,
    winners: Vec<u32>,
    // Per (cell, segment index) activity against `active`, refreshed each step.
    seg_connected: Vec<Vec<u16>>,
    seg_potential: Vec<Vec<u16>>,
    // Synapses onto the previous step's winner cells, any permanence.
    seg_matching: Vec<Vec<u16>>,
    predictive: Vec<bool>,
}

impl TemporalMemory {
    pub fn new(params: TmParams, rng: RngStream) -> Result<Self> {
        params.validate()?;
        let n = params.n_cells();
        Ok(Self {
            segments: vec![Vec::new(); n],
            iteration: 0,
            rng,
            active: vec![false; n],
            active_list: Vec::new(),
            winners: Vec::new(),
            seg_connected: vec![Vec::new(); n],
            seg_potential: vec![Vec::new(); n],
            seg_matching: vec![Vec::new(); n],
            predictive: vec![false; n],
            params,
        })
    }

    pub fn params(&self) -> &TmParams {
        &self.params
    }

    pub fn n_cells(&self) -> usize {
        self.params.n_cells()
    }

    pub fn segment_count(&self) -> usize {
        self.segments.iter().map(Vec::len).sum()
    }

    pub fn synapse_count(&self) -> usize {
        self.segments.iter().flatten().map(|s| s.presyn.len()).sum()
    }

    /// Visits every synapse as `(postsynaptic cell, presynaptic cell, permanence)`.
    pub fn for_each_synapse(&self, mut f: impl FnMut(usize, u32, f64)) {
        for (cell, segs) in self.segments.iter().enumerate() {
            for s in segs {
                for (&p, &v) in s.presyn.iter().zip(&s.perm) {
                    f(cell, p, v);
                }
            }
        }
    }

    pub fn max_segments_on_any_cell(&self) -> usize {
        self.segments.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn predictive_cells(&self) -> Vec<u32> {
        flags_to_list(&self.predictive)
    }

    /// Columns containing at least one predictive cell, ascending.
    pub fn predictive_columns(&self) -> Vec<usize> {
        let k = self.params.cells_per_column;
        (0..self.params.columns)
            .filter(|&c| self.predictive[c * k..(c + 1) * k].iter().any(|&p| p))
            .collect()
    }

    /// Forgets the previous step's activity so the next input starts a new sequence.
    pub fn reset(&mut self) {
        self.active.fill(false);
        self.active_list.clear();
        self.winners.clear();
        self.predictive.fill(false);
        for c in self
            .seg_connected
            .iter_mut()
            .chain(self.seg_potential.iter_mut())
            .chain(self.seg_matching.iter_mut())
        {
            c.fill(0);
        }
    }

    fn column_of(&self, cell: usize) -> usize {
        cell / self.params.cells_per_column
    }

    /// One time step. `active_columns` may be unsorted and contain duplicates.
    ///
    /// An empty input returns anomaly 0 and leaves every piece of state as it was.
    pub fn step(&mut self, active_columns: &[usize], learn: bool) -> Result<TmStepResult> {
        if let Some(&c) = active_columns.iter().find(|&&c| c >= self.params.columns) {
            return Err(Error::param(
                "active_columns",
                format!("column {c} >= {}", self.params.columns),
            ));
        }
        if active_columns.is_empty() {
            log::debug!("temporal memory step with no active columns; state unchanged");
            return Ok(TmStepResult {
                active_cells: self.active_list.clone(),
                predictive_cells: self.predictive_cells(),
                anomaly: 0.0,
            });
        }
        let mut cols = active_columns.to_vec();
        cols.sort_unstable();
        cols.dedup();

        let k = self.params.cells_per_column;
        let predicted_hits = cols
            .iter()
            .filter(|&&c| self.predictive[c * k..(c + 1) * k].iter().any(|&p| p))
            .count();
        let anomaly = 1.0 - predicted_hits as f64 / cols.len() as f64;

        if learn {
            self.iteration += 1;
        }
        let prev_active = std::mem::take(&mut self.active);
        let prev_winners = std::mem::take(&mut self.winners);
        let mut new_active = Vec::new();
        let mut new_winners = Vec::new();
        let mut is_active_col = vec![false; self.params.columns];
        for &c in &cols {
            is_active_col[c] = true;
        }

        for &col in &cols {
            let cells = col * k..(col + 1) * k;
            let mut predicted = false;
            for cell in cells.clone() {
                let active_segs: Vec<usize> = (0..self.segments[cell].len())
                    .filter(|&s| {
                        self.seg_connected[cell][s] as usize >= self.params.activation_threshold
                    })
                    .collect();
                if active_segs.is_empty() {
                    continue;
                }
                predicted = true;
                new_active.push(cell as u32);
                new_winners.push(cell as u32);
                if learn {
                    // Reverse order keeps indices valid if adaptation drops a segment.
                    for &s in active_segs.iter().rev() {
                        let potential = self.seg_potential[cell][s] as usize;
                        self.reinforce(cell, s, &prev_active, &prev_winners, potential, false);
                    }
                }
            }
            if predicted {
                continue;
            }
            new_active.extend(cells.clone().map(|c| c as u32));
            let best_match = self.best_matching_segment(col);
            match best_match {
                Some((cell, s)) => {
                    new_winners.push(cell as u32);
                    if learn {
                        let potential = self.seg_potential[cell][s] as usize;
                        self.reinforce(cell, s, &prev_active, &prev_winners, potential, true);
                    }
                }
                None => {
                    let cell = self.least_used_cell(col, learn);
                    new_winners.push(cell as u32);
                    if learn && !prev_winners.is_empty() {
                        self.create_segment(cell, &prev_winners);
                    }
                }
            }
        }

        if learn && self.params.predicted_segment_decrement > 0.0 {
            for cell in 0..self.n_cells() {
                if is_active_col[self.column_of(cell)] {
                    continue;
                }
                for s in (0..self.segments[cell].len()).rev() {
                    if self.seg_matching[cell][s] as usize >= self.params.learning_threshold {
                        self.punish(cell, s, &prev_active);
                    }
                }
            }
        }

        let mut active = prev_active;
        active.fill(false);
        for &c in &new_active {
            active[c as usize] = true;
        }
        self.active = active;
        self.active_list = new_active;
        self.winners = new_winners;
        self.refresh_activity();

        Ok(TmStepResult {
            active_cells: self.active_list.clone(),
            predictive_cells: self.predictive_cells(),
            anomaly,
        })
    }

    fn best_matching_segment(&self, col: usize) -> Option<(usize, usize)> {
        let k = self.params.cells_per_column;
        let mut best: Option<(usize, usize, u16)> = None;
        for cell in col * k..(col + 1) * k {
            for (s, &p) in self.seg_matching[cell].iter().enumerate() {
                if (p as usize) >= self.params.learning_threshold && best.is_none_or(|b| p > b.2) {
                    best = Some((cell, s, p));
                }
            }
        }
        best.map(|(c, s, _)| (c, s))
    }

    fn least_used_cell(&mut self, col: usize, learn: bool) -> usize {
        let k = self.params.cells_per_column;
        let cells = col * k..(col + 1) * k;
        let fewest = cells
            .clone()
            .map(|c| self.segments[c].len())
            .min()
            .unwrap_or(0);
        let ties: Vec<usize> = cells
            .filter(|&c| self.segments[c].len() == fewest)
            .collect();
        if learn && ties.len() > 1 {
            ties[self.rng.below(ties.len())]
        } else {
            ties[0]
        }
    }

    /// Hebbian update of one segment followed by growth towards previous winners.
    /// Segments that correctly predicted their cell are only potentiated; a
    /// segment shared by two contexts would otherwise lose one context each
    /// time the other is seen.
    fn reinforce(
        &mut self,
        cell: usize,
        s: usize,
        prev_active: &[bool],
        prev_winners: &[u32],
        potential: usize,
        decrement: bool,
    ) {
        let inc = self.params.permanence_increment;
        let dec = self.params.permanence_decrement;
        let seg = &mut self.segments[cell][s];
        seg.last_used = self.iteration;
        for (p, v) in seg.presyn.iter().zip(seg.perm.iter_mut()) {
            *v = if prev_active[*p as usize] {
                (*v + inc).min(1.0)
            } else if !decrement {
                *v
            } else {
                (*v - dec).max(0.0)
            };
        }
        let want = self.params.max_new_synapses.saturating_sub(potential);
        if want > 0 {
            self.grow(cell, s, prev_winners, want);
        }
        self.drop_dead_synapses(cell, s);
    }

    fn punish(&mut self, cell: usize, s: usize, prev_active: &[bool]) {
        let dec = self.params.predicted_segment_decrement;
        let seg = &mut self.segments[cell][s];
        for (p, v) in seg.presyn.iter().zip(seg.perm.iter_mut()) {
            if prev_active[*p as usize] {
                *v = (*v - dec).max(0.0);
            }
        }
        self.drop_dead_synapses(cell, s);
    }

    fn drop_dead_synapses(&mut self, cell: usize, s: usize) {
        let seg = &mut self.segments[cell][s];
        let mut i = 0;
        while i < seg.perm.len() {
            if seg.perm[i] <= 0.0 {
                seg.perm.remove(i);
                seg.presyn.remove(i);
            } else {
                i += 1;
            }
        }
        if seg.presyn.is_empty() {
            self.segments[cell].remove(s);
            self.seg_connected[cell].remove(s);
            self.seg_potential[cell].remove(s);
            self.seg_matching[cell].remove(s);
        }
    }

    fn grow(&mut self, cell: usize, s: usize, prev_winners: &[u32], want: usize) {
        let existing = &self.segments[cell][s].presyn;
        let mut candidates: Vec<u32> = prev_winners
            .iter()
            .copied()
            .filter(|p| !existing.contains(p))
            .collect();
        candidates.sort_unstable();
        candidates.dedup();
        self.rng.shuffle(&mut candidates);
        candidates.truncate(want);
        let max = self.params.max_synapses_per_segment;
        let seg = &mut self.segments[cell][s];
        // Make room by evicting the weakest synapses, earliest first on ties.
        while seg.presyn.len() + candidates.len() > max && !seg.presyn.is_empty() {
            let weakest = seg
                .perm
                .iter()
                .enumerate()
                .fold(0, |w, (i, &v)| if v < seg.perm[w] { i } else { w });
            seg.perm.remove(weakest);
            seg.presyn.remove(weakest);
        }
        candidates.truncate(max - seg.presyn.len());
        for p in candidates {
            seg.presyn.push(p);
            seg.perm.push(self.params.initial_permanence);
        }
    }

    fn create_segment(&mut self, cell: usize, prev_winners: &[u32]) {
        if self.segments[cell].len() >= self.params.max_segments_per_cell {
            let lru = self.segments[cell]
                .iter()
                .enumerate()
                .min_by_key(|(_, s)| s.last_used)
                .map(|(i, _)| i)
                .unwrap_or(0);
            self.segments[cell].remove(lru);
            self.seg_connected[cell].remove(lru);
            self.seg_potential[cell].remove(lru);
            self.seg_matching[cell].remove(lru);
        }
        self.segments[cell].push(Segment {
            presyn: Vec::new(),
            perm: Vec::new(),
            last_used: self.iteration,
        });
        self.seg_connected[cell].push(0);
        self.seg_potential[cell].push(0);
        self.seg_matching[cell].push(0);
        let s = self.segments[cell].len() - 1;
        self.grow(cell, s, prev_winners, self.params.max_new_synapses);
        if self.segments[cell][s].presyn.is_empty() {
            self.segments[cell].pop();
            self.seg_connected[cell].pop();
            self.seg_potential[cell].pop();
            self.seg_matching[cell].pop();
        }
    }

    fn refresh_activity(&mut self) {
        let theta = self.params.connected_permanence;
        let mut is_winner = vec![false; self.n_cells()];
        for &w in &self.winners {
            is_winner[w as usize] = true;
        }
        self.predictive.fill(false);
        for cell in 0..self.segments.len() {
            let conn = &mut self.seg_connected[cell];
            let pot = &mut self.seg_potential[cell];
            let mat = &mut self.seg_matching[cell];
            conn.clear();
            pot.clear();
            mat.clear();
            for seg in &self.segments[cell] {
                let (mut c, mut p, mut m) = (0u16, 0u16, 0u16);
                for (&pre, &v) in seg.presyn.iter().zip(&seg.perm) {
                    if is_winner[pre as usize] {
                        m += 1;
                    }
                    if self.active[pre as usize] {
                        p += 1;
                        if v >= theta {
                            c += 1;
                        }
                    }
                }
                if c as usize >= self.params.activation_threshold {
                    self.predictive[cell] = true;
                }
                conn.push(c);
                pot.push(p);
                mat.push(m);
            }
        }
    }

    pub fn checkpoint(&self) -> TmCheckpoint {
        let mut segments = Vec::new();
        for (cell, segs) in self.segments.iter().enumerate() {
            for s in segs {
                segments.push(SegmentRecord {
                    cell: cell as u32,
                    last_used: s.last_used,
                    presynaptic: s.presyn.clone(),
                    permanences: s.perm.clone(),
                });
            }
        }
        TmCheckpoint {
            params: self.params.clone(),
            iteration: self.iteration,
            rng: self.rng.state(),
            segments,
        }
    }

    pub fn from_checkpoint(cp: TmCheckpoint) -> Result<Self> {
        let mut tm = Self::new(cp.params, RngStream::from_state(cp.rng))?;
        tm.iteration = cp.iteration;
        let n = tm.n_cells();
        for rec in cp.segments {
            let cell = rec.cell as usize;
            if cell >= n {
                return Err(Error::param("segments", format!("cell {cell} >= {n}")));
            }
            if rec.presynaptic.len() != rec.permanences.len() || rec.presynaptic.is_empty() {
                return Err(Error::param(
                    "segments",
                    "presynaptic/permanence length mismatch or empty segment",
                ));
            }
            if rec.presynaptic.len() > tm.params.max_synapses_per_segment {
                return Err(Error::param("segments", "too many synapses on a segment"));
            }
            if let Some(&p) = rec.presynaptic.iter().find(|&&p| p as usize >= n) {
                return Err(Error::param(
                    "segments",
                    format!("presynaptic cell {p} >= {n}"),
                ));
            }
            if rec.permanences.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::param("segments", "permanence outside [0, 1]"));
            }
            if tm.segments[cell].len() >= tm.params.max_segments_per_cell {
                return Err(Error::param(
                    "segments",
                    format!("cell {cell} exceeds max_segments_per_cell"),
                ));
            }
            tm.segments[cell].push(Segment {
                presyn: rec.presynaptic,
                perm: rec.permanences,
                last_used: rec.last_used,
            });
        }
        tm.refresh_activity();
        Ok(tm)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.checkpoint())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_checkpoint(serde_json::from_str(s)?)
    }
}

fn flags_to_list(flags: &[bool]) -> Vec<u32> {
    flags
        .iter()
        .enumerate()
        .filter(|(_, &f)| f)
        .map(|(i, _)| i as u32)
        .collect()
}

/// Learned state of a [`TemporalMemory`] with segments flattened.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TmCheckpoint {
    pub params: TmParams,
    pub iteration: u64,
    pub rng: RngState,
    pub segments: Vec<SegmentRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentRecord {
    pub cell: u32,
    pub last_used: u64,
    pub presynaptic: Vec<u32>,
    pub permanences: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tm() -> TemporalMemory {
        TemporalMemory::new(TmParams::default(), RngStream::new(1, 0)).unwrap()
    }

    #[test]
    fn first_input_bursts() {
        let mut tm = tm();
        let r = tm.step(&[3, 4, 5], true).unwrap();
        assert_eq!(r.anomaly, 1.0);
        assert_eq!(r.active_cells.len(), 3 * 8);
    }

    #[test]
    fn empty_input_is_a_no_op() {
        let mut tm = tm();
        tm.step(&[1, 2, 3], true).unwrap();
        let before = tm.to_json().unwrap();
        let r = tm.step(&[], true).unwrap();
        assert_eq!(r.anomaly, 0.0);
        assert_eq!(tm.to_json().unwrap(), before);
    }

    #[test]
    fn rejects_out_of_range_column() {
        assert!(tm().step(&[256], true).is_err());
    }

    #[test]
    fn invalid_params() {
        let p = TmParams {
            learning_threshold: 9,
            ..TmParams::default()
        };
        assert!(TemporalMemory::new(p, RngStream::new(0, 0)).is_err());
    }
}
