//! Layer topologies, im2col lowering, synthetic and file-backed weights,
//! and sparsity statistics.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::ArrayConfig;
use crate::error::{Error, Result};
use crate::matrix::WeightMatrix;
use crate::timing::{self, LoadSplit};

/// One convolution layer in the SCALE-Sim topology layout. Padding is not
/// modelled; padded layers list their padded input size.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub name: String,
    pub ifmap_h: usize,
    pub ifmap_w: usize,
    pub filter_h: usize,
    pub filter_w: usize,
    pub channels: usize,
    pub num_filters: usize,
    pub stride: usize,
}

/// GEMM dimensions of a lowered layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GemmDims {
    pub k: usize,
    pub c: usize,
    pub t: usize,
}

impl GemmDims {
    pub fn dense_macs(&self) -> u64 {
        (self.k * self.c * self.t) as u64
    }
}

/// A lowered matrix multiply: `T` input vectors of length `K` against a
/// `K x C` weight matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GemmWorkload {
    pub name: String,
    pub k: usize,
    pub c: usize,
    pub t: usize,
    pub weights: WeightMatrix,
}

impl GemmWorkload {
    pub fn new(name: impl Into<String>, stream_len: usize, weights: WeightMatrix) -> Self {
        Self {
            name: name.into(),
            k: weights.rows(),
            c: weights.cols(),
            t: stream_len,
            weights,
        }
    }

    pub fn dims(&self) -> GemmDims {
        GemmDims { k: self.k, c: self.c, t: self.t }
    }

    pub fn dense_macs(&self) -> u64 {
        self.dims().dense_macs()
    }
}

impl LayerSpec {
    fn validate(&self) -> std::result::Result<(), String> {
        let dims = [
            ("ifmap_h", self.ifmap_h),
            ("ifmap_w", self.ifmap_w),
            ("filter_h", self.filter_h),
            ("filter_w", self.filter_w),
            ("channels", self.channels),
            ("num_filters", self.num_filters),
            ("stride", self.stride),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(format!("layer `{}`: {name} must be positive", self.name));
        }
        if self.filter_h > self.ifmap_h || self.filter_w > self.ifmap_w {
            return Err(format!(
                "layer `{}`: {}x{} filter larger than {}x{} ifmap",
                self.name, self.filter_h, self.filter_w, self.ifmap_h, self.ifmap_w
            ));
        }
        Ok(())
    }

    /// Conventional MAC count of the convolution.
    pub fn conv_macs(&self) -> u64 {
        let out_h = (self.ifmap_h - self.filter_h) / self.stride + 1;
        let out_w = (self.ifmap_w - self.filter_w) / self.stride + 1;
        (self.filter_h * self.filter_w * self.channels * self.num_filters * out_h * out_w) as u64
    }
}

/// Parses a topology CSV. The header row is skipped; trailing empty
/// fields (SCALE-Sim files end rows with a comma) are ignored.
pub fn parse_topology(text: &str) -> Result<Vec<LayerSpec>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut layers = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            msg: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let fields: Vec<&str> = rec.iter().filter(|f| !f.is_empty()).collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != 8 {
            return Err(Error::Parse {
                line,
                msg: format!("expected 8 fields, found {}", fields.len()),
            });
        }
        let num = |i: usize| -> Result<usize> {
            fields[i].parse().map_err(|_| Error::Parse {
                line,
                msg: format!("`{}` is not a non-negative integer", fields[i]),
            })
        };
        let layer = LayerSpec {
            name: fields[0].to_string(),
            ifmap_h: num(1)?,
            ifmap_w: num(2)?,
            filter_h: num(3)?,
            filter_w: num(4)?,
            channels: num(5)?,
            num_filters: num(6)?,
            stride: num(7)?,
        };
        layer.validate().map_err(|msg| Error::Parse { line, msg })?;
        layers.push(layer);
    }
    Ok(layers)
}

pub fn read_topology(path: &Path) -> Result<Vec<LayerSpec>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_topology(&text)
}

/// im2col lowering without padding.
pub fn lower_to_gemm(layer: &LayerSpec) -> Result<GemmDims> {
    layer.validate().map_err(Error::Domain)?;
    let out_h = (layer.ifmap_h - layer.filter_h) / layer.stride + 1;
    let out_w = (layer.ifmap_w - layer.filter_w) / layer.stride + 1;
    Ok(GemmDims {
        k: layer.filter_h * layer.filter_w * layer.channels,
        c: layer.num_filters,
        t: out_h * out_w,
    })
}

/// How zeros are laid out in synthetic weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pattern {
    /// Each weight independently zero with probability `P0`.
    Iid,
    /// Dense column blocks of `block_w` alternating with zero blocks sized
    /// to reach `P0`; every row shares the layout.
    Clustered { block_w: usize },
    /// Zeros spread as evenly as possible along each row.
    Interleaved,
}

impl FromStr for Pattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "iid" => Ok(Pattern::Iid),
            "interleaved" => Ok(Pattern::Interleaved),
            _ => {
                let width = s
                    .strip_prefix("clustered:")
                    .or_else(|| s.strip_prefix("clustered"))
                    .ok_or_else(|| Error::Domain(format!("unknown pattern `{s}`")))?;
                let block_w = if width.is_empty() { 3 } else { width.parse().unwrap_or(0) };
                if block_w == 0 {
                    return Err(Error::Domain(format!("bad block width in `{s}`")));
                }
                Ok(Pattern::Clustered { block_w })
            }
        }
    }
}

impl std::fmt::Display for Pattern {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Pattern::Iid => f.write_str("iid"),
            Pattern::Clustered { block_w } => write!(f, "clustered:{block_w}"),
            Pattern::Interleaved => f.write_str("interleaved"),
        }
    }
}

fn nonzero_value(rng: &mut ChaCha8Rng) -> i32 {
    // 8-bit signed weight, never zero.
    let v = rng.random_range(-127i32..=126);
    if v >= 0 { v + 1 } else { v }
}

/// Synthetic `k x c` weights with zero fraction `p0`.
///
/// The i.i.d. pattern draws one uniform per weight in row-major order and
/// zeroes it when the draw is below `p0`, so for a fixed seed raising `p0`
/// only ever turns more weights into zeros.
pub fn generate_weights(k: usize, c: usize, p0: f64, pattern: Pattern, seed: u64) -> Result<WeightMatrix> {
    if !(0.0..=1.0).contains(&p0) {
        return Err(Error::Domain(format!("sparsity {p0} outside [0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = match pattern {
        Pattern::Iid => WeightMatrix::from_fn(k, c, |_, _| {
            let u: f64 = rng.random();
            let v = nonzero_value(&mut rng);
            if u < p0 { 0 } else { v }
        }),
        Pattern::Clustered { block_w } => {
            if block_w == 0 {
                return Err(Error::Domain("block width must be positive".into()));
            }
            let zero_w = if p0 >= 1.0 {
                usize::MAX
            } else {
                (block_w as f64 * p0 / (1.0 - p0)).round() as usize
            };
            WeightMatrix::from_fn(k, c, |_, col| {
                let v = nonzero_value(&mut rng);
                let dense = match zero_w {
                    0 => true,
                    usize::MAX => false,
                    z => col % (block_w + z) < block_w,
                };
                if dense { v } else { 0 }
            })
        }
        Pattern::Interleaved => WeightMatrix::from_fn(k, c, |_, col| {
            let v = nonzero_value(&mut rng);
            let zero = ((col + 1) as f64 * p0).floor() > (col as f64 * p0).floor();
            if zero { 0 } else { v }
        }),
    };
    Ok(m)
}

/// Lowers every layer and attaches synthetic weights, one derived seed
/// per layer.
pub fn synthesize_model(layers: &[LayerSpec], p0: f64, pattern: Pattern, seed: u64) -> Result<Vec<GemmWorkload>> {
    layers
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let d = lower_to_gemm(l)?;
            let w = generate_weights(d.k, d.c, p0, pattern, crate::seed::derive_seed(seed, i as u64))?;
            Ok(GemmWorkload::new(&l.name, d.t, w))
        })
        .collect()
}

const SMX_VERSION: u32 = 1;

/// Serializes weights as `smx <version> <rows> <cols>` followed by the
/// values, one matrix row per line.
pub fn write_smx(m: &WeightMatrix) -> String {
    let mut out = format!("smx {SMX_VERSION} {} {}\n", m.rows(), m.cols());
    for r in 0..m.rows() {
        let row: Vec<String> = m.row(r).iter().map(i32::to_string).collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
    out
}

pub fn parse_smx(text: &str) -> Result<WeightMatrix> {
    let (header, body) = text.split_once('\n').unwrap_or((text, ""));
    let head: Vec<&str> = header.split_whitespace().collect();
    let bad_header = |msg: String| Error::Parse { line: 1, msg };
    if head.len() != 4 || head[0] != "smx" {
        return Err(bad_header(format!("expected `smx <version> <rows> <cols>`, got `{header}`")));
    }
    let version: u32 = head[1].parse().map_err(|_| bad_header(format!("bad version `{}`", head[1])))?;
    if version != SMX_VERSION {
        return Err(bad_header(format!("unsupported version {version}")));
    }
    let rows: usize = head[2].parse().map_err(|_| bad_header(format!("bad row count `{}`", head[2])))?;
    let cols: usize = head[3].parse().map_err(|_| bad_header(format!("bad column count `{}`", head[3])))?;
    if rows == 0 || cols == 0 {
        return Err(bad_header("dimensions must be positive".into()));
    }
    let mut values = Vec::with_capacity(rows * cols);
    for (i, line) in body.lines().enumerate() {
        for tok in line.split_whitespace() {
            let v = tok.parse::<i32>().map_err(|_| Error::Parse {
                line: i + 2,
                msg: format!("`{tok}` is not an integer"),
            })?;
            values.push(v);
        }
    }
    if values.len() != rows * cols {
        return Err(Error::Parse {
            line: body.lines().count() + 1,
            msg: format!("expected {} values, found {}", rows * cols, values.len()),
        });
    }
    WeightMatrix::from_vec(rows, cols, values)
}

pub fn load_weights_file(path: &Path) -> Result<WeightMatrix> {
    let mut text = String::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_smx(&text)
}

pub fn save_weights_file(path: &Path, m: &WeightMatrix) -> Result<()> {
    std::fs::write(path, write_smx(m)).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// Zero statistics and window mix of one layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSparsity {
    pub name: String,
    pub zeros: u64,
    pub total: u64,
    pub zero_fraction: f64,
    /// Number of `M`-wide, column-aligned row segments with a given
    /// nonzero count.
    pub segment_nonzero_hist: BTreeMap<usize, u64>,
    /// Windows the mapper picks, with tile counts and cycles per width.
    pub windows: LoadSplit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparsityStats {
    pub layers: Vec<LayerSparsity>,
}

impl SparsityStats {
    pub fn zero_fraction(&self) -> f64 {
        let (z, t) = self.layers.iter().fold((0, 0), |(z, t), l| (z + l.zeros, t + l.total));
        if t == 0 { 0.0 } else { z as f64 / t as f64 }
    }

    pub fn windows(&self) -> LoadSplit {
        let mut all = LoadSplit::default();
        for l in &self.layers {
            all.merge(&l.windows);
        }
        all
    }
}

pub fn sparsity_stats(gemms: &[GemmWorkload], cfg: &ArrayConfig) -> SparsityStats {
    let layers = gemms
        .iter()
        .map(|g| {
            let w = &g.weights;
            let zeros = w.count_zeros() as u64;
            let total = (w.rows() * w.cols()) as u64;
            let mut hist = BTreeMap::new();
            for r in 0..w.rows() {
                for chunk in w.row(r).chunks(cfg.virtual_cols) {
                    *hist.entry(chunk.iter().filter(|&&v| v != 0).count()).or_insert(0) += 1;
                }
            }
            LayerSparsity {
                name: g.name.clone(),
                zeros,
                total,
                zero_fraction: if total == 0 { 0.0 } else { zeros as f64 / total as f64 },
                segment_nonzero_hist: hist,
                windows: timing::gemm_vusa(g, cfg),
            }
        })
        .collect();
    SparsityStats { layers }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timing::Weighting;

    const HEADER: &str = "Layer name,IFMAP Height,IFMAP Width,Filter Height,Filter Width,Channels,Num Filter,Strides,\n";

    #[test]
    fn parses_first_resnet_layer() {
        let layers = parse_topology(&format!("{HEADER}conv1,224,224,7,7,3,64,2,\n")).unwrap();
        assert_eq!(
            layers,
            vec![LayerSpec {
                name: "conv1".into(),
                ifmap_h: 224,
                ifmap_w: 224,
                filter_h: 7,
                filter_w: 7,
                channels: 3,
                num_filters: 64,
                stride: 2,
            }]
        );
    }

    #[test]
    fn header_only_is_empty() {
        assert!(parse_topology(HEADER).unwrap().is_empty());
    }

    #[test]
    fn zero_stride_reports_line() {
        let text = format!("{HEADER}a,8,8,3,3,4,4,1\nb,8,8,3,3,4,4,0\n");
        match parse_topology(&text) {
            Err(Error::Parse { line, msg }) => {
                assert_eq!(line, 3);
                assert!(msg.contains("stride"), "{msg}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_rows() {
        assert!(matches!(parse_topology(&format!("{HEADER}a,8,8,3\n")), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse_topology(&format!("{HEADER}a,8,x,3,3,1,1,1\n")), Err(Error::Parse { .. })));
        assert!(matches!(parse_topology(&format!("{HEADER}a,2,8,3,3,1,1,1\n")), Err(Error::Parse { .. })));
    }

    fn layer(ifmap: usize, f: usize, c: usize, n: usize, s: usize) -> LayerSpec {
        LayerSpec {
            name: "l".into(),
            ifmap_h: ifmap,
            ifmap_w: ifmap,
            filter_h: f,
            filter_w: f,
            channels: c,
            num_filters: n,
            stride: s,
        }
    }

    #[test]
    fn lowering_examples() {
        assert_eq!(lower_to_gemm(&layer(14, 1, 64, 128, 1)).unwrap(), GemmDims { k: 64, c: 128, t: 196 });
        assert_eq!(lower_to_gemm(&layer(56, 3, 64, 64, 1)).unwrap(), GemmDims { k: 576, c: 64, t: 2916 });
        assert_eq!(lower_to_gemm(&layer(224, 7, 3, 64, 2)).unwrap(), GemmDims { k: 147, c: 64, t: 11881 });
        assert!(lower_to_gemm(&layer(2, 3, 1, 1, 1)).is_err());
    }

    #[test]
    fn generator_extremes() {
        let dense = generate_weights(7, 9, 0.0, Pattern::Iid, 1).unwrap();
        assert_eq!(dense.count_zeros(), 0);
        let empty = generate_weights(7, 9, 1.0, Pattern::Iid, 1).unwrap();
        assert_eq!(empty.count_zeros(), 63);
        for p in [Pattern::Clustered { block_w: 3 }, Pattern::Interleaved] {
            assert_eq!(generate_weights(4, 10, 0.0, p, 1).unwrap().count_zeros(), 0);
            assert_eq!(generate_weights(4, 10, 1.0, p, 1).unwrap().count_zeros(), 40);
        }
        assert!(generate_weights(2, 2, 1.5, Pattern::Iid, 1).is_err());
    }

    #[test]
    fn clustered_blocks_alternate() {
        let w = generate_weights(3, 12, 0.5, Pattern::Clustered { block_w: 3 }, 5).unwrap();
        for r in 0..3 {
            let dense: Vec<_> = (0..12).filter(|&c| w.get(r, c) != 0).collect();
            assert_eq!(dense, vec![0, 1, 2, 6, 7, 8]);
        }
    }

    #[test]
    fn interleaved_half_alternates() {
        let w = generate_weights(2, 6, 0.5, Pattern::Interleaved, 5).unwrap();
        let dense: Vec<_> = (0..6).filter(|&c| w.get(0, c) != 0).collect();
        assert_eq!(dense, vec![0, 2, 4]);
    }

    #[test]
    fn iid_zeros_only_grow_with_sparsity() {
        let lo = generate_weights(20, 20, 0.3, Pattern::Iid, 11).unwrap();
        let hi = generate_weights(20, 20, 0.6, Pattern::Iid, 11).unwrap();
        for (a, b) in lo.as_slice().iter().zip(hi.as_slice()) {
            if *a == 0 {
                assert_eq!(*b, 0);
            }
            if *b != 0 {
                assert_eq!(a, b);
            }
        }
        assert!(hi.count_zeros() > lo.count_zeros());
    }

    #[test]
    fn iid_sparsity_converges() {
        let w = generate_weights(200, 200, 0.85, Pattern::Iid, 3).unwrap();
        let frac = w.count_zeros() as f64 / 40_000.0;
        let se = (0.85f64 * 0.15 / 40_000.0).sqrt();
        assert!((frac - 0.85).abs() < 3.0 * se, "{frac}");
    }

    #[test]
    fn pattern_parsing() {
        assert_eq!("iid".parse::<Pattern>().unwrap(), Pattern::Iid);
        assert_eq!("clustered:6".parse::<Pattern>().unwrap(), Pattern::Clustered { block_w: 6 });
        assert_eq!("interleaved".parse::<Pattern>().unwrap(), Pattern::Interleaved);
        assert!("clustered:0".parse::<Pattern>().is_err());
        assert!("blocky".parse::<Pattern>().is_err());
        assert_eq!(Pattern::Clustered { block_w: 4 }.to_string(), "clustered:4");
    }

    #[test]
    fn smx_small_matrix() {
        let m = parse_smx("smx 1 2 3\n1 0 -3\n4 5 0\n").unwrap();
        assert_eq!(m, WeightMatrix::from_rows(&[vec![1, 0, -3], vec![4, 5, 0]]).unwrap());
        assert_eq!(parse_smx(&write_smx(&m)).unwrap(), m);
    }

    #[test]
    fn smx_errors() {
        assert!(matches!(parse_smx("smx 1 2 3\n1 2 3\n4 5\n"), Err(Error::Parse { .. })));
        assert!(matches!(parse_smx("mtx 1 2 3\n1 2 3 4 5 6\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_smx("smx 2 1 1\n1\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_smx("smx 1 1 2\n1 x\n"), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn stats_for_extremes() {
        let cfg = ArrayConfig::new(3, 6, 3).unwrap();
        let zero = GemmWorkload::new("z", 4, WeightMatrix::zeros(6, 12));
        let dense = GemmWorkload::new("d", 4, WeightMatrix::from_fn(6, 12, |_, _| 2));
        let s = sparsity_stats(&[zero, dense], &cfg);
        assert_eq!(s.layers[0].zero_fraction, 1.0);
        assert_eq!(s.layers[0].windows.fraction(6, Weighting::Jobs), 1.0);
        assert_eq!(s.layers[1].zero_fraction, 0.0);
        assert_eq!(s.layers[1].windows.fraction(3, Weighting::Jobs), 1.0);
        assert_eq!(s.layers[1].segment_nonzero_hist, BTreeMap::from([(6, 12)]));
        assert_eq!(s.zero_fraction(), 0.5);
    }
}
