//! Window selection and MAC-to-SPE assignment.
//!
//! A band of `N` weight rows is cut into windows from left to right. Each
//! window is as wide as possible (at most `M`) while every row holds no more
//! than `A` nonzero weights, so a width of `A` always works. Inside a window,
//! MAC `j` of a row may only attach to SPE columns `j ..= j + (M - A)`.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ArrayConfig;
use crate::error::{Error, Result};
use crate::matrix::{Matrix, WeightMatrix};

/// One mapped job: an `rows x width` slice of the weight matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileRef {
    pub row_band: usize,
    pub row_start: usize,
    pub rows: usize,
    pub col_start: usize,
    pub width: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MacPair {
    pub mac: usize,
    pub spe_col: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowAssignment {
    pub pairs: Vec<MacPair>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowAssignment {
    pub tile: TileRef,
    pub config: ArrayConfig,
    pub rows: Vec<RowAssignment>,
}

/// A broken mapping invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub invariant: &'static str,
    pub row: usize,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "`{}` violated in row {}: {}", self.invariant, self.row, self.detail)
    }
}

/// Widest window starting at column 0 of `mask` (an `N x R` grid of nonzero
/// flags) that keeps every row at `<= A` nonzeros.
pub fn select_window(mask: &Matrix<bool>, cfg: &ArrayConfig) -> usize {
    select_window_by(mask.rows(), mask.cols(), cfg, |r, c| mask.get(r, c))
}

fn select_window_by(
    rows: usize,
    remaining: usize,
    cfg: &ArrayConfig,
    nonzero: impl Fn(usize, usize) -> bool,
) -> usize {
    let limit = cfg.virtual_cols.min(remaining);
    if remaining < cfg.macs_per_row {
        return remaining;
    }
    // Row prefix counts only grow with the width, so the feasible widths
    // form a prefix and A is always inside it.
    let mut counts = vec![0usize; rows];
    for w in 0..limit {
        for (r, count) in counts.iter_mut().enumerate() {
            if nonzero(r, w) {
                *count += 1;
                if *count > cfg.macs_per_row {
                    return w.max(cfg.macs_per_row);
                }
            }
        }
    }
    limit
}

/// Greedy interval matching of a row's nonzero columns onto its MACs.
///
/// The i-th column `p` goes to MAC `max(prev + 1, p - (M - A))`.
pub fn assign_row(nonzero_cols: &[usize], cfg: &ArrayConfig) -> Result<RowAssignment> {
    assign_row_in(0, nonzero_cols, cfg)
}

fn assign_row_in(row: usize, nonzero_cols: &[usize], cfg: &ArrayConfig) -> Result<RowAssignment> {
    let shift = cfg.max_shift();
    let mut pairs = Vec::with_capacity(nonzero_cols.len());
    let mut next_mac = 0usize;
    for &col in nonzero_cols {
        let mac = next_mac.max(col.saturating_sub(shift));
        if mac >= cfg.macs_per_row || mac > col {
            return Err(Error::InfeasibleAssignment { row, col });
        }
        pairs.push(MacPair { mac, spe_col: col });
        next_mac = mac + 1;
    }
    Ok(RowAssignment { pairs })
}

impl RowAssignment {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn spe_cols(&self) -> Vec<usize> {
        self.pairs.iter().map(|p| p.spe_col).collect()
    }

    /// Checks the hardware invariants of this row against the nonzero
    /// columns it is supposed to cover.
    pub fn check(&self, row: usize, nonzero_cols: &[usize], cfg: &ArrayConfig) -> std::result::Result<(), Violation> {
        let fail = |invariant, detail: String| Err(Violation { invariant, row, detail });
        if self.pairs.len() > cfg.macs_per_row {
            return fail("mac-capacity", format!("{} pairs for {} MACs", self.pairs.len(), cfg.macs_per_row));
        }
        for w in self.pairs.windows(2) {
            if w[1].mac <= w[0].mac {
                return fail("mac-order", format!("MAC {} follows MAC {}", w[1].mac, w[0].mac));
            }
            if w[1].spe_col <= w[0].spe_col {
                return fail("spe-order", format!("SPE {} follows SPE {}", w[1].spe_col, w[0].spe_col));
            }
        }
        for p in &self.pairs {
            if p.mac >= cfg.macs_per_row {
                return fail("mac-capacity", format!("MAC index {} out of range", p.mac));
            }
            if p.spe_col < p.mac || p.spe_col > p.mac + cfg.max_shift() {
                return fail(
                    "shift-constraint",
                    format!("MAC {} cannot reach SPE {} (shift {})", p.mac, p.spe_col, cfg.max_shift()),
                );
            }
        }
        if self.spe_cols() != nonzero_cols {
            return fail(
                "nonzero-columns",
                format!("assigned {:?}, nonzero {:?}", self.spe_cols(), nonzero_cols),
            );
        }
        Ok(())
    }
}

impl WindowAssignment {
    /// Nonzero columns, relative to the window, of each row of the tile.
    pub fn nonzero_cols(tile: &TileRef, weights: &WeightMatrix) -> Vec<Vec<usize>> {
        (0..tile.rows)
            .map(|r| {
                (0..tile.width)
                    .filter(|&c| weights.get(tile.row_start + r, tile.col_start + c) != 0)
                    .collect()
            })
            .collect()
    }

    /// Validates every row against `weights`.
    pub fn check(&self, weights: &WeightMatrix) -> std::result::Result<(), Violation> {
        let t = &self.tile;
        if t.row_start + t.rows > weights.rows() || t.col_start + t.width > weights.cols() {
            return Err(Violation {
                invariant: "tile-bounds",
                row: 0,
                detail: format!("{t:?} exceeds {}x{}", weights.rows(), weights.cols()),
            });
        }
        if self.rows.len() != t.rows {
            return Err(Violation {
                invariant: "row-count",
                row: 0,
                detail: format!("{} row assignments for {} rows", self.rows.len(), t.rows),
            });
        }
        for (r, (ra, cols)) in self.rows.iter().zip(Self::nonzero_cols(t, weights)).enumerate() {
            if cols.len() > self.config.macs_per_row {
                return Err(Violation {
                    invariant: "row-bound",
                    row: r,
                    detail: format!("{} nonzeros for {} MACs", cols.len(), self.config.macs_per_row),
                });
            }
            ra.check(r, &cols, &self.config)?;
        }
        Ok(())
    }

    pub fn mac_count(&self) -> usize {
        self.rows.iter().map(RowAssignment::len).sum()
    }
}

fn assign_window(tile: TileRef, weights: &WeightMatrix, cfg: &ArrayConfig) -> Result<WindowAssignment> {
    let rows = WindowAssignment::nonzero_cols(&tile, weights)
        .iter()
        .enumerate()
        .map(|(r, cols)| assign_row_in(tile.row_start + r, cols, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(WindowAssignment { tile, config: *cfg, rows })
}

/// Windows of one band of rows, left to right.
pub fn partition_band(weights: &WeightMatrix, band: usize, cfg: &ArrayConfig) -> Result<Vec<WindowAssignment>> {
    let row_start = band * cfg.rows;
    let rows = cfg.rows.min(weights.rows() - row_start);
    let mut out = Vec::new();
    let mut col = 0;
    while col < weights.cols() {
        let width = select_window_by(rows, weights.cols() - col, cfg, |r, c| {
            weights.get(row_start + r, col + c) != 0
        });
        let tile = TileRef {
            row_band: band,
            row_start,
            rows,
            col_start: col,
            width,
        };
        out.push(assign_window(tile, weights, cfg)?);
        col += width;
    }
    Ok(out)
}

/// Cuts the whole matrix into windows: bands of `N` rows top to bottom,
/// each band scanned left to right.
pub fn partition(weights: &WeightMatrix, cfg: &ArrayConfig) -> Result<Vec<WindowAssignment>> {
    let bands = weights.rows().div_ceil(cfg.rows);
    let per_band = (0..bands)
        .into_par_iter()
        .map(|b| partition_band(weights, b, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(per_band.into_iter().flatten().collect())
}

/// Only the window widths of each band, without building assignments.
pub fn window_widths(weights: &WeightMatrix, cfg: &ArrayConfig) -> Vec<(usize, Vec<usize>)> {
    let bands = weights.rows().div_ceil(cfg.rows);
    (0..bands)
        .into_par_iter()
        .map(|band| {
            let row_start = band * cfg.rows;
            let rows = cfg.rows.min(weights.rows() - row_start);
            let mut widths = Vec::new();
            let mut col = 0;
            while col < weights.cols() {
                let w = select_window_by(rows, weights.cols() - col, cfg, |r, c| {
                    weights.get(row_start + r, col + c) != 0
                });
                widths.push(w);
                col += w;
            }
            (rows, widths)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg(n: usize, m: usize, a: usize) -> ArrayConfig {
        ArrayConfig::new(n, m, a).unwrap()
    }

    fn mask_from(rows: &[&[usize]], width: usize) -> Matrix<bool> {
        Matrix::from_fn(rows.len(), width, |r, c| rows[r].contains(&c))
    }

    #[test]
    fn empty_mask_grows_to_full_width() {
        let mask = Matrix::<bool>::zeros(3, 6);
        assert_eq!(select_window(&mask, &cfg(3, 6, 3)), 6);
    }

    #[test]
    fn dense_mask_shrinks_to_a() {
        let mask = Matrix::from_fn(3, 6, |_, _| true);
        assert_eq!(select_window(&mask, &cfg(3, 6, 3)), 3);
    }

    #[test]
    fn three_nonzeros_per_row_fit() {
        let mask = mask_from(&[&[0, 3, 5], &[0, 3, 5], &[0, 3, 5]], 6);
        assert_eq!(select_window(&mask, &cfg(3, 6, 3)), 6);
    }

    #[test]
    fn narrow_remainder_is_taken_whole() {
        let mask = Matrix::from_fn(3, 2, |_, _| true);
        assert_eq!(select_window(&mask, &cfg(3, 6, 3)), 2);
        let mask = Matrix::from_fn(3, 4, |_, c| c < 2);
        assert_eq!(select_window(&mask, &cfg(3, 6, 3)), 4);
    }

    #[test]
    fn one_crowded_row_limits_the_window() {
        // Row 1 has its fourth nonzero at column 4.
        let mask = mask_from(&[&[], &[0, 1, 2, 4], &[5]], 6);
        assert_eq!(select_window(&mask, &cfg(3, 6, 3)), 4);
    }

    #[test]
    fn greedy_row_assignment_examples() {
        let c = cfg(3, 6, 3);
        let ra = assign_row(&[0, 3, 5], &c).unwrap();
        assert_eq!(
            ra.pairs,
            vec![
                MacPair { mac: 0, spe_col: 0 },
                MacPair { mac: 1, spe_col: 3 },
                MacPair { mac: 2, spe_col: 5 }
            ]
        );
        assert!(assign_row(&[], &c).unwrap().is_empty());
        let ra = assign_row(&[4, 5], &c).unwrap();
        assert_eq!(
            ra.pairs,
            vec![MacPair { mac: 1, spe_col: 4 }, MacPair { mac: 2, spe_col: 5 }]
        );
    }

    #[test]
    fn overfull_row_is_infeasible() {
        assert!(matches!(
            assign_row(&[0, 1, 2, 3], &cfg(1, 6, 3)),
            Err(Error::InfeasibleAssignment { .. })
        ));
    }

    #[test]
    fn check_names_the_broken_invariant() {
        let c = cfg(3, 6, 3);
        let bad = RowAssignment {
            pairs: vec![MacPair { mac: 0, spe_col: 4 }],
        };
        assert_eq!(bad.check(0, &[4], &c).unwrap_err().invariant, "shift-constraint");
        let bad = RowAssignment {
            pairs: vec![MacPair { mac: 1, spe_col: 1 }, MacPair { mac: 0, spe_col: 2 }],
        };
        assert_eq!(bad.check(0, &[1, 2], &c).unwrap_err().invariant, "mac-order");
        let ok = assign_row(&[1, 2], &c).unwrap();
        assert_eq!(ok.check(0, &[1, 3], &c).unwrap_err().invariant, "nonzero-columns");
    }

    #[test]
    fn partition_examples() {
        let c = cfg(3, 6, 3);
        let zeros = WeightMatrix::zeros(3, 6);
        let p = partition(&zeros, &c).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].tile.width, 6);
        assert_eq!(p[0].mac_count(), 0);

        let ones = WeightMatrix::from_fn(3, 12, |_, _| 1);
        let p = partition(&ones, &c).unwrap();
        assert_eq!(p.iter().map(|w| w.tile.width).collect::<Vec<_>>(), vec![3, 3, 3, 3]);
        assert!(p.iter().all(|w| w.mac_count() == 9));

        let p = partition(&WeightMatrix::zeros(6, 6), &c).unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!((p[0].tile.row_band, p[1].tile.row_band), (0, 1));
        assert!(p.iter().all(|w| w.tile.width == 6));
    }

    #[test]
    fn partial_last_band() {
        let c = cfg(3, 6, 3);
        let p = partition(&WeightMatrix::from_fn(4, 7, |_, _| 1), &c).unwrap();
        let shapes: Vec<_> = p.iter().map(|w| (w.tile.row_band, w.tile.rows, w.tile.width)).collect();
        assert_eq!(shapes, vec![(0, 3, 3), (0, 3, 3), (0, 3, 1), (1, 1, 3), (1, 1, 3), (1, 1, 1)]);
    }

    fn arb_case() -> impl Strategy<Value = (ArrayConfig, WeightMatrix)> {
        (1usize..5, 1usize..9)
            .prop_flat_map(|(n, m)| (Just(n), Just(m), 1..=m))
            .prop_flat_map(|(n, m, a)| {
                let c = ArrayConfig::new(n, m, a).unwrap();
                (Just(c), 1usize..10, 1usize..20, 0.0f64..1.0)
            })
            .prop_flat_map(|(c, k, cols, density)| {
                proptest::collection::vec(proptest::bool::weighted(density), k * cols).prop_map(move |bits| {
                    let m = WeightMatrix::from_vec(k, cols, bits.into_iter().map(i32::from).collect()).unwrap();
                    (c, m)
                })
            })
    }

    proptest! {
        #[test]
        fn windows_cover_every_cell_once((c, w) in arb_case()) {
            let tiles = partition(&w, &c).unwrap();
            let mut hits = Matrix::<u8>::zeros(w.rows(), w.cols());
            for t in &tiles {
                prop_assert!(t.check(&w).is_ok());
                for r in 0..t.tile.rows {
                    for col in 0..t.tile.width {
                        let (rr, cc) = (t.tile.row_start + r, t.tile.col_start + col);
                        hits.set(rr, cc, hits.get(rr, cc) + 1);
                    }
                }
            }
            prop_assert!(hits.as_slice().iter().all(|&h| h == 1));
        }

        #[test]
        fn selected_window_is_maximal((c, w) in arb_case()) {
            let rows = w.rows().min(c.rows);
            let mask = Matrix::from_fn(rows, w.cols(), |r, col| w.get(r, col) != 0);
            let sel = select_window(&mask, &c);
            let limit = c.virtual_cols.min(w.cols());
            let fits = |width: usize| (0..rows).all(|r| (0..width).filter(|&col| mask.get(r, col)).count() <= c.macs_per_row);
            prop_assert!(fits(sel));
            if w.cols() >= c.macs_per_row {
                prop_assert!(sel >= c.macs_per_row);
            }
            if sel < limit {
                prop_assert!(!fits(sel + 1));
            }
        }

        #[test]
        fn clearing_nonzeros_never_narrows_the_window((c, w) in arb_case(), drop_mask in proptest::collection::vec(any::<bool>(), 200)) {
            let rows = w.rows().min(c.rows);
            let mask = Matrix::from_fn(rows, w.cols(), |r, col| w.get(r, col) != 0);
            let thinned = Matrix::from_fn(rows, w.cols(), |r, col| {
                mask.get(r, col) && !drop_mask[(r * w.cols() + col) % drop_mask.len()]
            });
            prop_assert!(select_window(&thinned, &c) >= select_window(&mask, &c));
        }
    }
}
