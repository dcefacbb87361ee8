//! Categorical data with level metadata, intervention bookkeeping, and the
//! dummy encoding used by all likelihood computations.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

/// n×p matrix of 1-based level indices plus per-node intervention row sets.
///
/// Rows where node j was experimentally fixed form I_j; the complement O_j is
/// the set of rows in which X_j is observational. A row belongs to at most one
/// I_j (block design). Indices are 0-based in memory, 1-based on disk.
#[derive(Clone, Debug, PartialEq)]
pub struct CategoricalDataset {
    n: usize,
    p: usize,
    values: Vec<u16>, // row-major, values[h*p + j] ∈ 1..=levels[j]
    levels: Vec<u16>,
    row_intervention: Vec<Option<usize>>, // node fixed in row h, if any
    obs_count: Vec<usize>,                // |O_j| per node
}

/// One data row under reference-cell dummy coding: a leading constant 1
/// followed by per-node segments of length r_i − 1; level ℓ ≥ 2 sets bit ℓ−1
/// of its segment (1-based within the segment), level 1 sets none.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DummyRow {
    pub bits: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DatasetError {
    Empty,
    NotRectangular { row: usize },
    NonInteger { row: usize, text: String },
    LevelCountTooSmall { node: usize },
    LevelOutOfRange { row: usize, node: usize, value: i64 },
    LevelsHeaderMismatch { declared: usize, found: usize },
    RowIndexOutOfRange { row: i64 },
    NodeIndexOutOfRange { node: i64 },
    OverlappingIntervention { row: usize },
}

impl fmt::Display for DatasetError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DatasetError::Empty => write!(f, "dataset has no rows"),
            DatasetError::NotRectangular { row } => {
                write!(f, "row {} has a different number of columns", row + 1)
            }
            DatasetError::NonInteger { row, text } => {
                write!(f, "row {}: cell '{}' is not an integer", row + 1, text)
            }
            DatasetError::LevelCountTooSmall { node } => {
                write!(f, "node {}: level count must be at least 2", node + 1)
            }
            DatasetError::LevelOutOfRange { row, node, value } => write!(
                f,
                "row {}, node {}: level {} out of range",
                row + 1,
                node + 1,
                value
            ),
            DatasetError::LevelsHeaderMismatch { declared, found } => write!(
                f,
                "levels header declares {} columns but data has {}",
                declared, found
            ),
            DatasetError::RowIndexOutOfRange { row } => {
                write!(f, "intervention row index {} out of range", row)
            }
            DatasetError::NodeIndexOutOfRange { node } => {
                write!(f, "intervention node index {} out of range", node)
            }
            DatasetError::OverlappingIntervention { row } => write!(
                f,
                "row {} assigned to more than one intervened node",
                row + 1
            ),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for DatasetError {}

impl CategoricalDataset {
    /// Builds a dataset from row-major 1-based level values.
    ///
    /// `levels` may declare more levels than observed (held-out levels keep
    /// segment sizes stable across datasets); pass `None` to infer column
    /// maxima. `interventions` lists (row, node) pairs, 0-based.
    pub fn new(
        values: Vec<u16>,
        p: usize,
        levels: Option<Vec<u16>>,
        interventions: &[(usize, usize)],
    ) -> Result<Self, DatasetError> {
        if p == 0 || values.is_empty() || values.len() % p != 0 {
            return Err(DatasetError::Empty);
        }
        let n = values.len() / p;
        let levels = match levels {
            Some(lv) => {
                if lv.len() != p {
                    return Err(DatasetError::LevelsHeaderMismatch {
                        declared: lv.len(),
                        found: p,
                    });
                }
                lv
            }
            None => {
                let mut lv = vec![0u16; p];
                for h in 0..n {
                    for j in 0..p {
                        lv[j] = lv[j].max(values[h * p + j]);
                    }
                }
                lv
            }
        };
        for (j, &r) in levels.iter().enumerate() {
            if r < 2 {
                return Err(DatasetError::LevelCountTooSmall { node: j });
            }
        }
        for h in 0..n {
            for j in 0..p {
                let v = values[h * p + j];
                if v < 1 || v > levels[j] {
                    return Err(DatasetError::LevelOutOfRange {
                        row: h,
                        node: j,
                        value: v as i64,
                    });
                }
            }
        }
        let mut row_intervention = vec![None; n];
        for &(h, j) in interventions {
            if h >= n {
                return Err(DatasetError::RowIndexOutOfRange { row: h as i64 });
            }
            if j >= p {
                return Err(DatasetError::NodeIndexOutOfRange { node: j as i64 });
            }
            match row_intervention[h] {
                Some(prev) if prev != j => {
                    return Err(DatasetError::OverlappingIntervention { row: h })
                }
                _ => row_intervention[h] = Some(j),
            }
        }
        let mut obs_count = vec![n; p];
        for iv in row_intervention.iter().flatten() {
            obs_count[*iv] -= 1;
        }
        Ok(CategoricalDataset {
            n,
            p,
            values,
            levels,
            row_intervention,
            obs_count,
        })
    }

    /// Parses CSV text (integer cells, optional first line `#levels: r1,…,rp`)
    /// and an optional intervention CSV with `row_index,node_index` lines,
    /// both 1-based on disk.
    pub fn from_csv_str(
        data: &str,
        intervention_spec: Option<&str>,
    ) -> Result<Self, DatasetError> {
        let mut declared: Option<Vec<u16>> = None;
        let mut values: Vec<u16> = Vec::new();
        let mut p = 0usize;
        let mut row = 0usize;
        for (idx, line) in data.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if idx == 0 {
                if let Some(rest) = line.strip_prefix("#levels:") {
                    let mut lv = Vec::new();
                    for tok in rest.split(',') {
                        let tok = tok.trim();
                        lv.push(tok.parse::<u16>().map_err(|_| DatasetError::NonInteger {
                            row: 0,
                            text: String::from(tok),
                        })?);
                    }
                    declared = Some(lv);
                    continue;
                }
            }
            let mut cols = 0usize;
            for tok in line.split(',') {
                let tok = tok.trim();
                let v: i64 = tok.parse().map_err(|_| DatasetError::NonInteger {
                    row,
                    text: String::from(tok),
                })?;
                if v < 1 || v > u16::MAX as i64 {
                    return Err(DatasetError::LevelOutOfRange {
                        row,
                        node: cols,
                        value: v,
                    });
                }
                values.push(v as u16);
                cols += 1;
            }
            if row == 0 {
                p = cols;
            } else if cols != p {
                return Err(DatasetError::NotRectangular { row });
            }
            row += 1;
        }
        if row == 0 {
            return Err(DatasetError::Empty);
        }
        let interventions = match intervention_spec {
            None => Vec::new(),
            Some(spec) => parse_intervention_csv(spec, row, p)?,
        };
        CategoricalDataset::new(values, p, declared, &interventions)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn levels(&self) -> &[u16] {
        &self.levels
    }

    /// Level count r_j.
    pub fn r(&self, j: usize) -> usize {
        self.levels[j] as usize
    }

    /// Segment length d_j = r_j − 1 of node j in the dummy encoding.
    pub fn d(&self, j: usize) -> usize {
        self.levels[j] as usize - 1
    }

    /// Total encoded length 1 + Σ d_i.
    pub fn encoded_len(&self) -> usize {
        1 + (0..self.p).map(|i| self.d(i)).sum::<usize>()
    }

    /// Offset of node i's segment within a DummyRow's bits.
    pub fn segment_offset(&self, i: usize) -> usize {
        1 + (0..i).map(|k| self.d(k)).sum::<usize>()
    }

    /// 1-based level of node j in row h.
    #[inline(always)]
    pub fn level(&self, h: usize, j: usize) -> u16 {
        self.values[h * self.p + j]
    }

    /// True when row h is observational for node j (h ∈ O_j).
    #[inline(always)]
    pub fn is_observational(&self, h: usize, j: usize) -> bool {
        self.row_intervention[h] != Some(j)
    }

    /// Node fixed by intervention in row h, if any.
    pub fn intervened_node(&self, h: usize) -> Option<usize> {
        self.row_intervention[h]
    }

    /// |O_j|; the likelihood for node j sums over these rows.
    pub fn obs_count(&self, j: usize) -> usize {
        self.obs_count[j]
    }

    /// Rows of I_j in increasing order.
    pub fn intervention_rows(&self, j: usize) -> Vec<usize> {
        (0..self.n)
            .filter(|&h| self.row_intervention[h] == Some(j))
            .collect()
    }

    /// y_{hjℓ} = I(X_hj = ℓ), with ℓ 1-based.
    #[inline(always)]
    pub fn indicator(&self, h: usize, j: usize, level: u16) -> f64 {
        debug_assert!(level >= 1 && level <= self.levels[j]);
        if self.values[h * self.p + j] == level {
            1.0
        } else {
            0.0
        }
    }

    /// Dummy-encodes every row.
    pub fn encode(&self) -> Vec<DummyRow> {
        (0..self.n).map(|h| self.encode_row(h)).collect()
    }

    pub fn encode_row(&self, h: usize) -> DummyRow {
        let mut bits = vec![0u8; self.encoded_len()];
        bits[0] = 1;
        let mut off = 1;
        for i in 0..self.p {
            let lv = self.level(h, i);
            if lv >= 2 {
                bits[off + lv as usize - 2] = 1;
            }
            off += self.d(i);
        }
        DummyRow { bits }
    }

    /// Recovers the 1-based level of node i from an encoded row.
    pub fn decode_level(&self, row: &DummyRow, i: usize) -> u16 {
        let off = self.segment_offset(i);
        for k in 0..self.d(i) {
            if row.bits[off + k] == 1 {
                return k as u16 + 2;
            }
        }
        1
    }
}

fn parse_intervention_csv(
    spec: &str,
    n: usize,
    p: usize,
) -> Result<Vec<(usize, usize)>, DatasetError> {
    let mut out = Vec::new();
    for line in spec.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut it = line.split(',');
        let row_tok = it.next().unwrap_or("").trim();
        let node_tok = it.next().unwrap_or("").trim();
        let row: i64 = row_tok.parse().map_err(|_| DatasetError::NonInteger {
            row: 0,
            text: String::from(row_tok),
        })?;
        let node: i64 = node_tok.parse().map_err(|_| DatasetError::NonInteger {
            row: 0,
            text: String::from(node_tok),
        })?;
        if row < 1 || row as usize > n {
            return Err(DatasetError::RowIndexOutOfRange { row });
        }
        if node < 1 || node as usize > p {
            return Err(DatasetError::NodeIndexOutOfRange { node });
        }
        out.push((row as usize - 1, node as usize - 1));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_no_spec() {
        let ds = CategoricalDataset::from_csv_str("1,2\n2,1", None).unwrap();
        assert_eq!(ds.n(), 2);
        assert_eq!(ds.p(), 2);
        assert_eq!(ds.levels(), &[2, 2]);
        for j in 0..2 {
            assert!(ds.intervention_rows(j).is_empty());
            assert_eq!(ds.obs_count(j), 2);
        }
    }

    #[test]
    fn csv_with_intervention_spec() {
        let ds = CategoricalDataset::from_csv_str("1,2\n2,1", Some("1,1")).unwrap();
        assert_eq!(ds.intervention_rows(0), vec![0]);
        assert_eq!(ds.obs_count(0), 1);
        assert!(ds.is_observational(1, 0));
        assert!(!ds.is_observational(0, 0));
        assert!(ds.is_observational(0, 1));
    }

    #[test]
    fn zero_level_rejected() {
        let err = CategoricalDataset::from_csv_str("1,0\n2,1", None).unwrap_err();
        assert!(matches!(err, DatasetError::LevelOutOfRange { .. }));
    }

    #[test]
    fn declared_levels_override_maxima() {
        let ds = CategoricalDataset::from_csv_str("#levels: 2,3\n1,2\n2,1", None).unwrap();
        assert_eq!(ds.levels(), &[2, 3]);
        assert_eq!(ds.encoded_len(), 1 + 1 + 2);
    }

    #[test]
    fn overlapping_intervention_rejected() {
        let err = CategoricalDataset::from_csv_str("1,2\n2,1", Some("1,1\n1,2")).unwrap_err();
        assert_eq!(err, DatasetError::OverlappingIntervention { row: 0 });
    }

    #[test]
    fn encoding_definition() {
        // binary node: level 1 → (0), level 2 → (1); 3-level node: level 3 → (0,1)
        let ds = CategoricalDataset::from_csv_str("#levels: 2,3\n1,3\n2,1", None).unwrap();
        let rows = ds.encode();
        assert_eq!(rows[0].bits, vec![1, 0, 0, 1]);
        assert_eq!(rows[1].bits, vec![1, 1, 0, 0]);
    }

    #[test]
    fn encode_decode_round_trip() {
        let ds =
            CategoricalDataset::from_csv_str("#levels: 3,2,4\n1,2,4\n3,1,1\n2,2,3", None).unwrap();
        let rows = ds.encode();
        for h in 0..ds.n() {
            assert_eq!(rows[h].bits[0], 1);
            for i in 0..ds.p() {
                assert_eq!(ds.decode_level(&rows[h], i), ds.level(h, i));
            }
        }
    }

    #[test]
    fn group_size_matches_eleven_ternary_nodes() {
        // p=11 nodes, all r_j=3: d = 1 + 11·2 = 23; a group has d_i·r_j = 6 entries.
        let mut row = String::new();
        for j in 0..11 {
            if j > 0 {
                row.push(',');
            }
            row.push('3');
        }
        let ds = CategoricalDataset::from_csv_str(&row, None).unwrap();
        assert_eq!(ds.encoded_len(), 23);
        assert_eq!(ds.d(0) * ds.r(1), 6);
    }

    #[test]
    fn indicator_partitions_levels() {
        let ds = CategoricalDataset::from_csv_str("#levels: 2,3\n1,2\n2,3", None).unwrap();
        assert_eq!(ds.indicator(0, 1, 2), 1.0);
        assert_eq!(ds.indicator(0, 1, 1), 0.0);
        for h in 0..ds.n() {
            for j in 0..ds.p() {
                let total: f64 = (1..=ds.levels()[j]).map(|l| ds.indicator(h, j, l)).sum();
                assert_eq!(total, 1.0);
            }
        }
    }

    #[test]
    fn obs_plus_intervention_partition_rows() {
        let ds =
            CategoricalDataset::from_csv_str("1,2\n2,1\n1,1\n2,2", Some("1,1\n2,1\n3,2")).unwrap();
        for j in 0..ds.p() {
            assert_eq!(ds.intervention_rows(j).len() + ds.obs_count(j), ds.n());
        }
    }
}
