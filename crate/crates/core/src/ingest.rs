//! Loading and validating expression, coordinate, and image-feature inputs.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use image::RgbImage;
use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::table::{self, NumericTable};

/// Default side length of the square histology patch around each spot.
pub const DEFAULT_PATCH_WIDTH: u32 = 96;

/// Number of statistics produced per spot by [`extract_patch_features`].
pub const PATCH_FEATURE_DIM: usize = 12;

/// Spots × genes matrix of nonnegative expression values.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpressionMatrix {
    values: Array2<f64>,
    spot_ids: Vec<String>,
    gene_ids: Vec<String>,
}

impl ExpressionMatrix {
    pub fn new(values: Array2<f64>, spot_ids: Vec<String>, gene_ids: Vec<String>) -> Result<Self> {
        let (n, m) = values.dim();
        if n == 0 || m == 0 {
            return Err(Error::Dimension(format!(
                "expression matrix must be nonempty, got {n}x{m}"
            )));
        }
        if spot_ids.len() != n || gene_ids.len() != m {
            return Err(Error::Dimension(format!(
                "{n}x{m} expression values with {} spot ids and {} gene ids",
                spot_ids.len(),
                gene_ids.len()
            )));
        }
        for ((r, c), &v) in values.indexed_iter() {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    row: r + 1,
                    col: c + 1,
                    context: "expression matrix".into(),
                });
            }
            if v < 0.0 {
                return Err(Error::NegativeExpression {
                    row: r + 1,
                    col: c + 1,
                });
            }
        }
        ensure_unique_spots(&spot_ids, "expression matrix")?;
        let mut seen = HashSet::with_capacity(m);
        for g in &gene_ids {
            if !seen.insert(g.as_str()) {
                return Err(Error::DuplicateGene(g.clone()));
            }
        }
        Ok(Self {
            values,
            spot_ids,
            gene_ids,
        })
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn spot_ids(&self) -> &[String] {
        &self.spot_ids
    }

    pub fn gene_ids(&self) -> &[String] {
        &self.gene_ids
    }

    pub fn n_spots(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_genes(&self) -> usize {
        self.values.ncols()
    }

    pub fn into_parts(self) -> (Array2<f64>, Vec<String>, Vec<String>) {
        (self.values, self.spot_ids, self.gene_ids)
    }

    /// CSV rendering in the interchange format.
    pub fn to_csv(&self) -> String {
        table::format_numeric_table(
            &self.gene_ids,
            &self.spot_ids,
            self.values.outer_iter(),
        )
    }
}

/// Planar spot locations, in pixels or micrometers.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordinateSet {
    coords: Vec<[f64; 2]>,
    spot_ids: Vec<String>,
}

impl CoordinateSet {
    pub fn new(coords: Vec<[f64; 2]>, spot_ids: Vec<String>) -> Result<Self> {
        if coords.len() != spot_ids.len() {
            return Err(Error::Dimension(format!(
                "{} coordinates for {} spot ids",
                coords.len(),
                spot_ids.len()
            )));
        }
        ensure_unique_spots(&spot_ids, "coordinates")?;
        let mut seen: HashMap<(u64, u64), usize> = HashMap::with_capacity(coords.len());
        for (i, &[x, y]) in coords.iter().enumerate() {
            if !x.is_finite() || !y.is_finite() {
                return Err(Error::NonFinite {
                    row: i + 1,
                    col: if x.is_finite() { 2 } else { 1 },
                    context: "coordinates".into(),
                });
            }
            // +0.0 normalizes -0.0 so both hash alike.
            let key = ((x + 0.0).to_bits(), (y + 0.0).to_bits());
            if let Some(&j) = seen.get(&key) {
                return Err(Error::DuplicateCoordinates {
                    first: spot_ids[j].clone(),
                    second: spot_ids[i].clone(),
                });
            }
            seen.insert(key, i);
        }
        Ok(Self { coords, spot_ids })
    }

    pub fn coords(&self) -> &[[f64; 2]] {
        &self.coords
    }

    pub fn spot_ids(&self) -> &[String] {
        &self.spot_ids
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// Coordinates as an N×2 matrix.
    pub fn to_matrix(&self) -> Array2<f64> {
        Array2::from_shape_fn((self.coords.len(), 2), |(i, j)| self.coords[i][j])
    }

    pub fn to_csv(&self) -> String {
        table::format_numeric_table(
            &["x".to_string(), "y".to_string()],
            &self.spot_ids,
            self.coords.iter(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureSource {
    Precomputed,
    PatchStats,
}

/// Spots × D image features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    values: Array2<f64>,
    spot_ids: Vec<String>,
    source: FeatureSource,
}

impl FeatureMatrix {
    pub fn new(values: Array2<f64>, spot_ids: Vec<String>, source: FeatureSource) -> Result<Self> {
        if values.ncols() == 0 {
            return Err(Error::Dimension("feature matrix needs D >= 1".into()));
        }
        if values.nrows() != spot_ids.len() {
            return Err(Error::Dimension(format!(
                "{} feature rows for {} spot ids",
                values.nrows(),
                spot_ids.len()
            )));
        }
        if let Some(((r, c), _)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: r + 1,
                col: c + 1,
                context: "feature matrix".into(),
            });
        }
        ensure_unique_spots(&spot_ids, "feature matrix")?;
        Ok(Self {
            values,
            spot_ids,
            source,
        })
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn spot_ids(&self) -> &[String] {
        &self.spot_ids
    }

    pub fn source(&self) -> FeatureSource {
        self.source
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn to_csv(&self) -> String {
        let columns: Vec<String> = (1..=self.dim()).map(|i| format!("f_{i}")).collect();
        table::format_numeric_table(
            &columns,
            &self.spot_ids,
            self.values.outer_iter(),
        )
    }
}

/// All modalities of one tissue section, row-aligned by spot.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub expression: ExpressionMatrix,
    pub coordinates: CoordinateSet,
    pub features: Option<FeatureMatrix>,
}

fn ensure_unique_spots(ids: &[String], context: &str) -> Result<()> {
    let mut seen = HashSet::with_capacity(ids.len());
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(Error::DuplicateSpot {
                spot_id: id.clone(),
                context: context.into(),
            });
        }
    }
    Ok(())
}

/// Index of each `reference` id within `ids`. Errors on any spot present in
/// one list but not the other; `context` names `ids`, `reference_context`
/// names `reference`.
pub fn alignment(
    reference: &[String],
    ids: &[String],
    context: &str,
    reference_context: &str,
) -> Result<Vec<usize>> {
    let position: HashMap<&str, usize> = ids
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    let order = reference
        .iter()
        .map(|s| {
            position
                .get(s.as_str())
                .copied()
                .ok_or_else(|| Error::MissingSpot {
                    spot_id: s.clone(),
                    context: context.into(),
                })
        })
        .collect::<Result<Vec<_>>>()?;
    if ids.len() != reference.len() {
        let known: HashSet<&str> = reference.iter().map(String::as_str).collect();
        let extra = ids.iter().find(|s| !known.contains(s.as_str())).unwrap();
        return Err(Error::MissingSpot {
            spot_id: extra.clone(),
            context: reference_context.into(),
        });
    }
    Ok(order)
}

fn expression_from_table(t: NumericTable) -> Result<ExpressionMatrix> {
    let n = t.rows.len();
    let m = t.columns.len();
    for (r, row) in t.rows.iter().enumerate() {
        if let Some(c) = row.iter().position(|&v| v < 0.0) {
            return Err(Error::NegativeExpression {
                row: r + 1,
                col: c + 1,
            });
        }
    }
    let values = Array2::from_shape_vec((n, m), t.rows.into_iter().flatten().collect())
        .map_err(|e| Error::Dimension(e.to_string()))?;
    ExpressionMatrix::new(values, t.spot_ids, t.columns)
}

pub fn load_expression(path: &Path) -> Result<ExpressionMatrix> {
    expression_from_table(table::read_numeric_table(path, None)?)
}

pub fn load_coordinates(path: &Path) -> Result<CoordinateSet> {
    let t = table::read_numeric_table(path, Some(&["x", "y"]))?;
    let coords = t.rows.iter().map(|r| [r[0], r[1]]).collect();
    CoordinateSet::new(coords, t.spot_ids)
}

pub fn load_features(path: &Path) -> Result<FeatureMatrix> {
    let t = table::read_numeric_table(path, None)?;
    let (n, d) = (t.rows.len(), t.columns.len());
    let values = Array2::from_shape_vec((n, d), t.rows.into_iter().flatten().collect())
        .map_err(|e| Error::Dimension(e.to_string()))?;
    FeatureMatrix::new(values, t.spot_ids, FeatureSource::Precomputed)
}

/// Loads all provided modalities and reorders coordinates and features to
/// the expression file's spot order.
pub fn load_dataset(
    expr_path: &Path,
    coord_path: &Path,
    feat_path: Option<&Path>,
) -> Result<Dataset> {
    let expression = load_expression(expr_path)?;
    let coordinates = load_coordinates(coord_path)?;
    let features = feat_path.map(load_features).transpose()?;
    align(expression, coordinates, features)
}

/// Reorders coordinates (and features) into the expression matrix's spot order.
pub fn align(
    expression: ExpressionMatrix,
    coordinates: CoordinateSet,
    features: Option<FeatureMatrix>,
) -> Result<Dataset> {
    let order = alignment(expression.spot_ids(), coordinates.spot_ids(), "coordinates", "expression file")?;
    let coordinates = CoordinateSet {
        coords: order.iter().map(|&i| coordinates.coords[i]).collect(),
        spot_ids: expression.spot_ids().to_vec(),
    };
    let features = match features {
        Some(f) => {
            let order = alignment(expression.spot_ids(), f.spot_ids(), "image features", "expression file")?;
            Some(FeatureMatrix {
                values: f.values.select(ndarray::Axis(0), &order),
                spot_ids: expression.spot_ids().to_vec(),
                source: f.source,
            })
        }
        None => None,
    };
    Ok(Dataset {
        expression,
        coordinates,
        features,
    })
}

/// Loads an 8-bit RGB PNG or PPM.
pub fn load_rgb_image(path: &Path) -> Result<RgbImage> {
    let img = image::open(path).map_err(|e| Error::Image(format!("{}: {e}", path.display())))?;
    match img {
        image::DynamicImage::ImageRgb8(rgb) => Ok(rgb),
        other => Err(Error::Image(format!(
            "{}: expected an 8-bit RGB raster, found {:?}",
            path.display(),
            other.color()
        ))),
    }
}

/// Per-channel mean, standard deviation, minimum, and maximum of the square
/// patch centered on each spot, all scaled to [0, 1]. Coordinates are pixel
/// positions (x = column, y = row); patches reaching past the border are
/// clipped to the image.
pub fn extract_patch_features(
    image: &RgbImage,
    coords: &CoordinateSet,
    patch_width: u32,
) -> Result<FeatureMatrix> {
    if patch_width == 0 {
        return Err(Error::InvalidArgument("patch_width must be >= 1".into()));
    }
    let (width, height) = image.dimensions();
    let centers = coords
        .coords()
        .iter()
        .zip(coords.spot_ids())
        .map(|(&[x, y], id)| {
            let (cx, cy) = (x.round(), y.round());
            if cx < 0.0 || cy < 0.0 || cx >= f64::from(width) || cy >= f64::from(height) {
                return Err(Error::OutsideImage {
                    spot_id: id.clone(),
                    x,
                    y,
                    width,
                    height,
                });
            }
            Ok((cx as i64, cy as i64))
        })
        .collect::<Result<Vec<_>>>()?;

    let half = i64::from(patch_width / 2);
    let rows: Vec<[f64; PATCH_FEATURE_DIM]> = centers
        .par_iter()
        .map(|&(cx, cy)| {
            let x0 = (cx - half).max(0) as u32;
            let y0 = (cy - half).max(0) as u32;
            let x1 = (cx - half + i64::from(patch_width)).min(i64::from(width)) as u32;
            let y1 = (cy - half + i64::from(patch_width)).min(i64::from(height)) as u32;
            patch_statistics(image, x0..x1, y0..y1)
        })
        .collect();

    let mut values = Array2::zeros((rows.len(), PATCH_FEATURE_DIM));
    for (mut dst, src) in values.outer_iter_mut().zip(&rows) {
        dst.assign(&ndarray::ArrayView1::from(&src[..]));
    }
    FeatureMatrix::new(values, coords.spot_ids().to_vec(), FeatureSource::PatchStats)
}

fn patch_statistics(
    image: &RgbImage,
    xs: std::ops::Range<u32>,
    ys: std::ops::Range<u32>,
) -> [f64; PATCH_FEATURE_DIM] {
    let mut sum = [0.0f64; 3];
    let mut min = [u8::MAX; 3];
    let mut max = [u8::MIN; 3];
    let count = f64::from((xs.end - xs.start) * (ys.end - ys.start));
    for y in ys.clone() {
        for x in xs.clone() {
            let p = image.get_pixel(x, y).0;
            for c in 0..3 {
                sum[c] += f64::from(p[c]);
                min[c] = min[c].min(p[c]);
                max[c] = max[c].max(p[c]);
            }
        }
    }
    let mean = sum.map(|s| s / count);
    let mut sq = [0.0f64; 3];
    for y in ys {
        for x in xs.clone() {
            let p = image.get_pixel(x, y).0;
            for c in 0..3 {
                let d = f64::from(p[c]) - mean[c];
                sq[c] += d * d;
            }
        }
    }
    let mut out = [0.0; PATCH_FEATURE_DIM];
    for c in 0..3 {
        out[c] = mean[c] / 255.0;
        out[3 + c] = (sq[c] / count).sqrt() / 255.0;
        out[6 + c] = f64::from(min[c]) / 255.0;
        out[9 + c] = f64::from(max[c]) / 255.0;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::fs;

    fn ids(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn loads_three_spot_dataset() {
        let dir = tempfile::tempdir().unwrap();
        let e = dir.path().join("e.csv");
        let c = dir.path().join("c.csv");
        fs::write(&e, "spot_id,g1,g2\na,1,2\nb,3,4\nc,5,6\n").unwrap();
        fs::write(&c, "spot_id,x,y\na,0,0\nb,1,0\nc,2,0\n").unwrap();
        let ds = load_dataset(&e, &c, None).unwrap();
        assert_eq!(ds.expression.values().dim(), (3, 2));
        assert_eq!(ds.coordinates.len(), 3);
        assert!(ds.features.is_none());
    }

    #[test]
    fn shuffled_coordinates_follow_expression_order() {
        let dir = tempfile::tempdir().unwrap();
        let e = dir.path().join("e.csv");
        let c = dir.path().join("c.tsv");
        let f = dir.path().join("f.csv");
        fs::write(&e, "spot_id,g1\na,1\nb,3\nc,5\n").unwrap();
        fs::write(&c, "spot_id\tx\ty\nc\t2\t0\na\t0\t0\nb\t1\t0\n").unwrap();
        fs::write(&f, "spot_id,f_1\nb,10\nc,20\na,0\n").unwrap();
        let ds = load_dataset(&e, &c, Some(&f)).unwrap();
        assert_eq!(ds.coordinates.spot_ids(), ids(&["a", "b", "c"]));
        assert_eq!(ds.coordinates.coords(), &[[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]);
        let feats = ds.features.unwrap();
        assert_eq!(feats.values().column(0).to_vec(), vec![0.0, 10.0, 20.0]);
    }

    #[test]
    fn rejects_bad_inputs() {
        let dir = tempfile::tempdir().unwrap();
        let e = dir.path().join("e.csv");
        let c = dir.path().join("c.csv");
        fs::write(&c, "spot_id,x,y\na,0,0\nb,1,0\n").unwrap();

        fs::write(&e, "spot_id,g1,g2\na,1,2\nb,-1.0,4\n").unwrap();
        let err = load_dataset(&e, &c, None).unwrap_err();
        assert_eq!(err.to_string(), "negative expression at (2, 1)");

        fs::write(&e, "spot_id,g1\na,1\na,2\n").unwrap();
        assert!(matches!(
            load_dataset(&e, &c, None),
            Err(Error::DuplicateSpot { .. })
        ));

        fs::write(&e, "spot_id,g1\na,1\nz,2\n").unwrap();
        assert!(matches!(
            load_dataset(&e, &c, None),
            Err(Error::MissingSpot { .. })
        ));

        fs::write(&e, "spot_id,g1\na,1\n").unwrap();
        let err = load_dataset(&e, &c, None).unwrap_err();
        assert!(err.to_string().contains("'b'"), "{err}");

        fs::write(&e, "gene,g1\na,1\nb,2\n").unwrap();
        assert!(matches!(
            load_dataset(&e, &c, None),
            Err(Error::MalformedHeader { .. })
        ));

        fs::write(&e, "spot_id,g1\na,nan\nb,2\n").unwrap();
        assert!(matches!(
            load_dataset(&e, &c, None),
            Err(Error::NonFinite { .. })
        ));
    }

    #[test]
    fn duplicate_coordinates_rejected() {
        let err = CoordinateSet::new(vec![[1.0, 2.0], [1.0, 2.0]], ids(&["a", "b"])).unwrap_err();
        assert!(matches!(err, Error::DuplicateCoordinates { .. }));
    }

    #[test]
    fn uniform_gray_image() {
        let img = RgbImage::from_pixel(32, 32, image::Rgb([128, 128, 128]));
        let coords = CoordinateSet::new(vec![[5.0, 5.0], [31.0, 0.0]], ids(&["a", "b"])).unwrap();
        let f = extract_patch_features(&img, &coords, 8).unwrap();
        let g = 128.0 / 255.0;
        for row in f.values().outer_iter() {
            assert_eq!(row.to_vec(), [g, g, g, 0.0, 0.0, 0.0, g, g, g, g, g, g]);
        }
        assert_eq!(f.source(), FeatureSource::PatchStats);
    }

    #[test]
    fn single_pixel_patch() {
        let mut img = RgbImage::from_pixel(4, 4, image::Rgb([0, 0, 0]));
        img.put_pixel(2, 1, image::Rgb([10, 200, 255]));
        let coords = CoordinateSet::new(vec![[2.0, 1.0]], ids(&["a"])).unwrap();
        let f = extract_patch_features(&img, &coords, 1).unwrap();
        let p = [10.0 / 255.0, 200.0 / 255.0, 1.0];
        let row = f.values().row(0).to_vec();
        assert_eq!(&row[0..3], &p);
        assert_eq!(&row[3..6], &[0.0; 3]);
        assert_eq!(&row[6..9], &p);
        assert_eq!(&row[9..12], &p);
    }

    /// Direct loop over each patch's pixels with its own bounds arithmetic.
    fn brute_force_patch(img: &RgbImage, x: f64, y: f64, w: i64) -> Vec<f64> {
        let (cx, cy) = (x.round() as i64, y.round() as i64);
        let mut pixels = Vec::new();
        for yy in (cy - w / 2)..(cy - w / 2 + w) {
            for xx in (cx - w / 2)..(cx - w / 2 + w) {
                if xx >= 0 && yy >= 0 && xx < img.width() as i64 && yy < img.height() as i64 {
                    pixels.push(img.get_pixel(xx as u32, yy as u32).0);
                }
            }
        }
        let n = pixels.len() as f64;
        let mut out = vec![0.0; 12];
        for c in 0..3 {
            let vals: Vec<f64> = pixels.iter().map(|p| p[c] as f64).collect();
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            out[c] = mean / 255.0;
            out[3 + c] = var.sqrt() / 255.0;
            out[6 + c] = vals.iter().cloned().fold(f64::INFINITY, f64::min) / 255.0;
            out[9 + c] = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max) / 255.0;
        }
        out
    }

    #[test]
    fn random_image_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let img = RgbImage::from_fn(64, 64, |_, _| image::Rgb(rng.random::<[u8; 3]>()));
        let pts = vec![[10.0, 10.0], [40.2, 20.7], [0.0, 63.0], [60.0, 3.0]];
        let coords = CoordinateSet::new(pts.clone(), ids(&["a", "b", "c", "d"])).unwrap();
        let f = extract_patch_features(&img, &coords, 16).unwrap();
        for (i, [x, y]) in pts.iter().enumerate() {
            let expect = brute_force_patch(&img, *x, *y, 16);
            for (a, b) in f.values().row(i).iter().zip(&expect) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn patch_features_are_permutation_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let img = RgbImage::from_fn(20, 20, |_, _| image::Rgb(rng.random::<[u8; 3]>()));
        let pts = vec![[1.0, 2.0], [10.0, 10.0], [19.0, 5.0]];
        let fwd = CoordinateSet::new(pts.clone(), ids(&["a", "b", "c"])).unwrap();
        let rev_pts: Vec<_> = pts.iter().rev().cloned().collect();
        let rev = CoordinateSet::new(rev_pts, ids(&["c", "b", "a"])).unwrap();
        let a = extract_patch_features(&img, &fwd, 5).unwrap();
        let b = extract_patch_features(&img, &rev, 5).unwrap();
        for i in 0..3 {
            assert_eq!(a.values().row(i), b.values().row(2 - i));
        }
    }

    #[test]
    fn coordinate_outside_image() {
        let img = RgbImage::new(8, 8);
        let coords = CoordinateSet::new(vec![[8.0, 1.0]], ids(&["a"])).unwrap();
        assert!(matches!(
            extract_patch_features(&img, &coords, 3),
            Err(Error::OutsideImage { .. })
        ));
    }

    #[test]
    fn non_rgb_raster_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("gray.png");
        image::GrayImage::new(4, 4).save(&p).unwrap();
        assert!(matches!(load_rgb_image(&p), Err(Error::Image(_))));
        let p = dir.path().join("rgb.ppm");
        RgbImage::new(4, 4).save(&p).unwrap();
        assert_eq!(load_rgb_image(&p).unwrap().dimensions(), (4, 4));
    }

    #[test]
    fn expression_constructor_validates() {
        assert!(ExpressionMatrix::new(array![[1.0]], ids(&["a"]), ids(&["g"])).is_ok());
        assert!(matches!(
            ExpressionMatrix::new(array![[1.0, 2.0]], ids(&["a"]), ids(&["g", "g"])),
            Err(Error::DuplicateGene(_))
        ));
        assert!(ExpressionMatrix::new(Array2::zeros((0, 1)), vec![], ids(&["g"])).is_err());
    }
}
