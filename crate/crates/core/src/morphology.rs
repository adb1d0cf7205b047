//! Grayscale morphology by reconstruction and morphological profiles.
//!
//! Openings and closings by reconstruction remove bright (resp. dark)
//! structures smaller than a disk structuring element while exactly
//! preserving the shape of the structures that survive. Stacking them at
//! increasing radii per MS band yields the morphological profile matrix used
//! as the high-resolution input of the fusion solver.
//!
//! Unlike the cyclic operators in [`crate::imgops`], borders here are handled
//! by edge replication: profiles describe physical scene structure and a
//! cyclic border would manufacture spurious objects. Geodesic reconstruction
//! uses 4-connectivity (the radius-1 disk).

use std::collections::VecDeque;

use ndarray::Array2;
use rayon::prelude::*;

use crate::cube::SpectralCube;
use crate::error::{Error, Result};

// ---------------------------------------------------------------------------
// Structuring elements
// ---------------------------------------------------------------------------

/// Flat disk structuring element `{(dx,dy) : dx^2 + dy^2 <= radius^2}` on an
/// odd square support.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StructuringElement {
    mask: Array2<bool>,
    radius: usize,
    /// Half-width of the disk row at each |dy| in `0..=radius`.
    row_half_widths: Vec<usize>,
}

impl StructuringElement {
    pub fn disk(radius: usize) -> Self {
        let size = 2 * radius + 1;
        let r2 = (radius * radius) as i64;
        let mut mask = Array2::from_elem((size, size), false);
        for dy in -(radius as i64)..=radius as i64 {
            for dx in -(radius as i64)..=radius as i64 {
                if dx * dx + dy * dy <= r2 {
                    mask[[(dy + radius as i64) as usize, (dx + radius as i64) as usize]] = true;
                }
            }
        }
        let row_half_widths = (0..=radius)
            .map(|dy| (((radius * radius - dy * dy) as f64).sqrt().floor()) as usize)
            .collect();
        Self { mask, radius, row_half_widths }
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn support(&self) -> usize {
        2 * self.radius + 1
    }

    pub fn mask(&self) -> &Array2<bool> {
        &self.mask
    }
}

fn check_se_fits(se: &StructuringElement, img: &Array2<f64>) -> Result<()> {
    let (h, w) = img.dim();
    if se.support() > w || se.support() > h {
        return Err(Error::Dimension(format!(
            "structuring element support {} exceeds image {}x{}",
            se.support(),
            w,
            h
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Erosion / dilation
// ---------------------------------------------------------------------------

/// Sliding minimum over the clamped window `[x-w, x+w]` of each row
/// (monotonic deque, O(n) per row). Clamping equals edge replication.
fn slide_min_row(row: &[f64], w: usize, out: &mut [f64]) {
    let n = row.len();
    let mut dq: VecDeque<usize> = VecDeque::new();
    let push = |dq: &mut VecDeque<usize>, j: usize| {
        while let Some(&b) = dq.back() {
            if row[b] >= row[j] {
                dq.pop_back();
            } else {
                break;
            }
        }
        dq.push_back(j);
    };
    for j in 0..=w.min(n - 1) {
        push(&mut dq, j);
    }
    out[0] = row[*dq.front().unwrap()];
    for x in 1..n {
        if x + w < n {
            push(&mut dq, x + w);
        }
        while *dq.front().unwrap() + w < x {
            dq.pop_front();
        }
        out[x] = row[*dq.front().unwrap()];
    }
}

/// Grayscale erosion by a disk with edge replication: the disk is split into
/// horizontal segments, each handled by an O(n) sliding minimum, and the
/// per-row results are combined over the vertical offsets.
pub fn erode(band: &Array2<f64>, se: &StructuringElement) -> Result<Array2<f64>> {
    check_se_fits(se, band)?;
    let (h, w) = band.dim();
    let r = se.radius() as i64;
    let mut out = Array2::from_elem((h, w), f64::INFINITY);

    // Distinct half-widths, widest first so most dys reuse one pass.
    let mut widths: Vec<usize> = se.row_half_widths.clone();
    widths.sort_unstable();
    widths.dedup();

    let mut hmin = Array2::zeros((h, w));
    let mut rowbuf = vec![0.0; w];
    for &hw in &widths {
        for y in 0..h {
            let row: Vec<f64> = band.row(y).to_vec();
            slide_min_row(&row, hw, &mut rowbuf);
            hmin.row_mut(y).assign(&ndarray::ArrayView1::from(&rowbuf[..]));
        }
        for dy in -r..=r {
            if se.row_half_widths[dy.unsigned_abs() as usize] != hw {
                continue;
            }
            for y in 0..h as i64 {
                let sy = (y + dy).clamp(0, h as i64 - 1) as usize;
                for x in 0..w {
                    let v = hmin[[sy, x]];
                    if v < out[[y as usize, x]] {
                        out[[y as usize, x]] = v;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Grayscale dilation by a disk with edge replication (dual of [`erode`]).
pub fn dilate(band: &Array2<f64>, se: &StructuringElement) -> Result<Array2<f64>> {
    let neg = band.mapv(|v| -v);
    let er = erode(&neg, se)?;
    Ok(er.mapv(|v| -v))
}

// ---------------------------------------------------------------------------
// Geodesic reconstruction
// ---------------------------------------------------------------------------

fn check_same_dims(a: &Array2<f64>, b: &Array2<f64>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::Dimension(format!("image dims {:?} vs {:?}", a.dim(), b.dim())));
    }
    Ok(())
}

/// Morphological reconstruction by dilation of `marker` under `mask`
/// (4-connectivity): the fixpoint of iterating a geodesic dilation clipped
/// by the mask. Computed with raster/anti-raster sweeps plus a FIFO queue;
/// the result is the exact fixpoint.
pub fn reconstruct_by_dilation(marker: &Array2<f64>, mask: &Array2<f64>) -> Result<Array2<f64>> {
    check_same_dims(marker, mask)?;
    for (m, k) in marker.iter().zip(mask.iter()) {
        if m > k {
            return Err(Error::Parameter("marker exceeds mask".into()));
        }
    }
    let (h, w) = marker.dim();
    let mut m = marker.clone();

    // Forward raster sweep.
    for y in 0..h {
        for x in 0..w {
            let mut v = m[[y, x]];
            if x > 0 {
                v = v.max(m[[y, x - 1]]);
            }
            if y > 0 {
                v = v.max(m[[y - 1, x]]);
            }
            m[[y, x]] = v.min(mask[[y, x]]);
        }
    }
    // Backward sweep, queueing pixels whose causal neighbors still lag.
    let mut queue: VecDeque<(usize, usize)> = VecDeque::new();
    for y in (0..h).rev() {
        for x in (0..w).rev() {
            let mut v = m[[y, x]];
            if x + 1 < w {
                v = v.max(m[[y, x + 1]]);
            }
            if y + 1 < h {
                v = v.max(m[[y + 1, x]]);
            }
            let val = v.min(mask[[y, x]]);
            m[[y, x]] = val;
            let lags = |yy: usize, xx: usize, m: &Array2<f64>| {
                m[[yy, xx]] < val && m[[yy, xx]] < mask[[yy, xx]]
            };
            if (x + 1 < w && lags(y, x + 1, &m)) || (y + 1 < h && lags(y + 1, x, &m)) {
                queue.push_back((y, x));
            }
        }
    }
    // FIFO propagation to the fixpoint.
    while let Some((y, x)) = queue.pop_front() {
        let val = m[[y, x]];
        let visit = |yy: usize, xx: usize, m: &mut Array2<f64>, queue: &mut VecDeque<(usize, usize)>| {
            if m[[yy, xx]] < val && m[[yy, xx]] != mask[[yy, xx]] {
                m[[yy, xx]] = val.min(mask[[yy, xx]]);
                queue.push_back((yy, xx));
            }
        };
        if x > 0 {
            visit(y, x - 1, &mut m, &mut queue);
        }
        if x + 1 < w {
            visit(y, x + 1, &mut m, &mut queue);
        }
        if y > 0 {
            visit(y - 1, x, &mut m, &mut queue);
        }
        if y + 1 < h {
            visit(y + 1, x, &mut m, &mut queue);
        }
    }
    Ok(m)
}

/// Dual reconstruction (by erosion): `marker >= mask`, the marker erodes
/// down onto the mask. Equivalent to reconstruction by dilation of the
/// complemented images.
pub fn reconstruct_by_erosion(marker: &Array2<f64>, mask: &Array2<f64>) -> Result<Array2<f64>> {
    check_same_dims(marker, mask)?;
    for (m, k) in marker.iter().zip(mask.iter()) {
        if m < k {
            return Err(Error::Parameter("marker below mask".into()));
        }
    }
    let (h, w) = marker.dim();
    let mut m = marker.clone();

    for y in 0..h {
        for x in 0..w {
            let mut v = m[[y, x]];
            if x > 0 {
                v = v.min(m[[y, x - 1]]);
            }
            if y > 0 {
                v = v.min(m[[y - 1, x]]);
            }
            m[[y, x]] = v.max(mask[[y, x]]);
        }
    }
    let mut queue: VecDeque<(usize, usize)> = VecDeque::new();
    for y in (0..h).rev() {
        for x in (0..w).rev() {
            let mut v = m[[y, x]];
            if x + 1 < w {
                v = v.min(m[[y, x + 1]]);
            }
            if y + 1 < h {
                v = v.min(m[[y + 1, x]]);
            }
            let val = v.max(mask[[y, x]]);
            m[[y, x]] = val;
            let lags = |yy: usize, xx: usize, m: &Array2<f64>| {
                m[[yy, xx]] > val && m[[yy, xx]] > mask[[yy, xx]]
            };
            if (x + 1 < w && lags(y, x + 1, &m)) || (y + 1 < h && lags(y + 1, x, &m)) {
                queue.push_back((y, x));
            }
        }
    }
    while let Some((y, x)) = queue.pop_front() {
        let val = m[[y, x]];
        let visit = |yy: usize, xx: usize, m: &mut Array2<f64>, queue: &mut VecDeque<(usize, usize)>| {
            if m[[yy, xx]] > val && m[[yy, xx]] != mask[[yy, xx]] {
                m[[yy, xx]] = val.max(mask[[yy, xx]]);
                queue.push_back((yy, xx));
            }
        };
        if x > 0 {
            visit(y, x - 1, &mut m, &mut queue);
        }
        if x + 1 < w {
            visit(y, x + 1, &mut m, &mut queue);
        }
        if y > 0 {
            visit(y - 1, x, &mut m, &mut queue);
        }
        if y + 1 < h {
            visit(y + 1, x, &mut m, &mut queue);
        }
    }
    Ok(m)
}

/// Opening by reconstruction: erode, then rebuild surviving structures.
pub fn opening_by_reconstruction(band: &Array2<f64>, se: &StructuringElement) -> Result<Array2<f64>> {
    let marker = erode(band, se)?;
    reconstruct_by_dilation(&marker, band)
}

/// Closing by reconstruction: dilate, then erode back down onto the image.
/// Dual of [`opening_by_reconstruction`] under gray-level complement.
pub fn closing_by_reconstruction(band: &Array2<f64>, se: &StructuringElement) -> Result<Array2<f64>> {
    let marker = dilate(band, se)?;
    reconstruct_by_erosion(&marker, band)
}

// ---------------------------------------------------------------------------
// Morphological profile
// ---------------------------------------------------------------------------

/// The stacked profile matrix. For each source band `i` the block layout is
/// `[psi_p .. psi_1, band_i, phi_1 .. phi_p]` (openings at decreasing radius,
/// the band itself, closings at increasing radius), blocks concatenated in
/// band order.
#[derive(Debug, Clone)]
pub struct MorphProfile {
    data: Array2<f64>,
    depth: usize,
    radii: Vec<usize>,
    source_bands: usize,
}

impl MorphProfile {
    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn into_data(self) -> Array2<f64> {
        self.data
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn radii(&self) -> &[usize] {
        &self.radii
    }

    pub fn source_bands(&self) -> usize {
        self.source_bands
    }

    pub fn columns_per_band(&self) -> usize {
        2 * self.depth + 1
    }
}

/// Assembles the morphological profile of an MS cube at the given radii.
/// `radii` must be strictly increasing and positive; an empty list degrades
/// the profile to the image itself.
pub fn build_morphological_profile(ms: &SpectralCube, radii: &[usize]) -> Result<MorphProfile> {
    for w in radii.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::Parameter(format!(
                "profile radii must be strictly increasing, got {} after {}",
                w[1], w[0]
            )));
        }
    }
    if radii.first().is_some_and(|&r| r == 0) {
        return Err(Error::Parameter("profile radii must be positive".into()));
    }
    let p = radii.len();
    let bands = ms.bands();
    let block = 2 * p + 1;
    let n = ms.n_pixels();

    let per_band: Vec<Result<Vec<Array2<f64>>>> = (0..bands)
        .into_par_iter()
        .map(|b| {
            let img = ms.band_image(b);
            let mut cols: Vec<Array2<f64>> = Vec::with_capacity(block);
            // psi_p .. psi_1
            for &r in radii.iter().rev() {
                cols.push(opening_by_reconstruction(&img, &StructuringElement::disk(r))?);
            }
            cols.push(img.clone());
            // phi_1 .. phi_p
            for &r in radii.iter() {
                cols.push(closing_by_reconstruction(&img, &StructuringElement::disk(r))?);
            }
            Ok(cols)
        })
        .collect();

    let mut data = Array2::zeros((n, block * bands));
    for (b, cols) in per_band.into_iter().enumerate() {
        let cols = cols?;
        for (j, img) in cols.iter().enumerate() {
            let c = b * block + j;
            for y in 0..ms.height() {
                for x in 0..ms.width() {
                    data[[y * ms.width() + x, c]] = img[[y, x]];
                }
            }
        }
    }
    Ok(MorphProfile { data, depth: p, radii: radii.to_vec(), source_bands: bands })
}

/// Scales the reference radii `[10, 20, 50, 100, 200]` to a desk-size grid
/// (`max(1, round(r * width / 256))`), dropping duplicates and any radius
/// whose structuring element no longer fits the image.
pub fn default_scaled_radii(width: usize, height: usize) -> Vec<usize> {
    let mut radii: Vec<usize> = [10usize, 20, 50, 100, 200]
        .iter()
        .map(|&r| ((r * width) as f64 / 256.0).round().max(1.0) as usize)
        .collect();
    radii.dedup();
    radii.retain(|&r| 2 * r + 1 <= width.min(height));
    radii
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use proptest::prelude::*;
    use rand::Rng;

    fn impulse(h: usize, w: usize, y: usize, x: usize) -> Array2<f64> {
        let mut img = Array2::zeros((h, w));
        img[[y, x]] = 1.0;
        img
    }

    fn rand_int_image(h: usize, w: usize, seed: u64) -> Array2<f64> {
        let mut rng = crate::rng::rng_from_seed(seed);
        Array2::from_shape_fn((h, w), |_| rng.random_range(0..16) as f64)
    }

    /// Reference: one geodesic dilation step (radius-1 disk, clipped by mask).
    fn geodesic_dilate_step(m: &Array2<f64>, mask: &Array2<f64>) -> Array2<f64> {
        let se = StructuringElement::disk(1);
        let d = dilate(m, &se).unwrap();
        let mut out = d;
        for (o, k) in out.iter_mut().zip(mask.iter()) {
            *o = o.min(*k);
        }
        out
    }

    /// Reference: iterate geodesic dilation to the fixpoint.
    fn reconstruct_iterative(marker: &Array2<f64>, mask: &Array2<f64>) -> Array2<f64> {
        let mut m = marker.clone();
        loop {
            let next = geodesic_dilate_step(&m, mask);
            if next == m {
                return m;
            }
            m = next;
        }
    }

    #[test]
    fn disk_shapes() {
        let d1 = StructuringElement::disk(1);
        let expect = [[false, true, false], [true, true, true], [false, true, false]];
        for y in 0..3 {
            for x in 0..3 {
                assert_eq!(d1.mask()[[y, x]], expect[y][x]);
            }
        }
        let d3 = StructuringElement::disk(3);
        assert!(d3.mask()[[3, 3]]);
        assert!(!d3.mask()[[0, 0]]); // corner: 3^2+3^2 > 9
        assert_eq!(d3.row_half_widths, vec![3, 2, 2, 0]);
    }

    #[test]
    fn erode_dilate_constant_unchanged() {
        let img = Array2::from_elem((8, 8), 7.0);
        let se = StructuringElement::disk(2);
        assert_eq!(erode(&img, &se).unwrap(), img);
        assert_eq!(dilate(&img, &se).unwrap(), img);
    }

    #[test]
    fn dilate_impulse_radius1_is_plus() {
        let img = impulse(7, 7, 3, 3);
        let out = dilate(&img, &StructuringElement::disk(1)).unwrap();
        for y in 0..7 {
            for x in 0..7 {
                let on = (y as i64 - 3).abs() + (x as i64 - 3).abs() <= 1;
                assert_eq!(out[[y, x]], if on { 1.0 } else { 0.0 }, "at ({},{})", y, x);
            }
        }
    }

    #[test]
    fn erode_matches_bruteforce_disk_min_with_replication() {
        let img = rand_int_image(9, 11, 4);
        for radius in [1usize, 2, 3, 4] {
            let se = StructuringElement::disk(radius);
            let out = erode(&img, &se).unwrap();
            let r = radius as i64;
            for y in 0..9i64 {
                for x in 0..11i64 {
                    let mut mn = f64::INFINITY;
                    for dy in -r..=r {
                        for dx in -r..=r {
                            if dx * dx + dy * dy <= r * r {
                                let yy = (y + dy).clamp(0, 8) as usize;
                                let xx = (x + dx).clamp(0, 10) as usize;
                                mn = mn.min(img[[yy, xx]]);
                            }
                        }
                    }
                    assert_eq!(out[[y as usize, x as usize]], mn);
                }
            }
        }
    }

    #[test]
    fn opening_closing_inequality() {
        let img = rand_int_image(12, 12, 8);
        let se = StructuringElement::disk(2);
        let open = dilate(&erode(&img, &se).unwrap(), &se).unwrap();
        let close = erode(&dilate(&img, &se).unwrap(), &se).unwrap();
        for ((o, i), c) in open.iter().zip(img.iter()).zip(close.iter()) {
            assert!(o <= i && i <= c);
        }
    }

    #[test]
    fn se_larger_than_image_rejected() {
        let img = Array2::zeros((4, 4));
        assert!(matches!(
            erode(&img, &StructuringElement::disk(2)),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn reconstruct_fixpoints() {
        let mask = rand_int_image(8, 8, 12);
        // marker == mask is already a fixpoint
        assert_eq!(reconstruct_by_dilation(&mask, &mask).unwrap(), mask);
        // zero marker stays zero
        let zero = Array2::zeros((8, 8));
        assert_eq!(reconstruct_by_dilation(&zero, &mask).unwrap(), zero);
        // marker above mask is a precondition error
        let above = mask.mapv(|v| v + 1.0);
        assert!(matches!(
            reconstruct_by_dilation(&above, &mask),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn reconstruction_recovers_marked_component_only() {
        // Two separate bright components on a 16x16 binary image; a marker in
        // one component must recover exactly that component (connected-
        // component oracle).
        let mut mask = Array2::zeros((16, 16));
        for y in 2..6 {
            for x in 2..7 {
                mask[[y, x]] = 1.0;
            }
        }
        for y in 9..14 {
            for x in 10..15 {
                mask[[y, x]] = 1.0;
            }
        }
        let marker = impulse(16, 16, 3, 4);
        let rec = reconstruct_by_dilation(&marker, &mask).unwrap();

        // Oracle: BFS flood fill of the mask component containing the seed.
        let mut expect = Array2::zeros((16, 16));
        let mut q = VecDeque::from([(3usize, 4usize)]);
        expect[[3, 4]] = 1.0;
        while let Some((y, x)) = q.pop_front() {
            let mut try_push = |yy: i64, xx: i64, expect: &mut Array2<f64>, q: &mut VecDeque<(usize, usize)>| {
                if (0..16).contains(&yy) && (0..16).contains(&xx) {
                    let (yy, xx) = (yy as usize, xx as usize);
                    if mask[[yy, xx]] == 1.0 && expect[[yy, xx]] == 0.0 {
                        expect[[yy, xx]] = 1.0;
                        q.push_back((yy, xx));
                    }
                }
            };
            try_push(y as i64 - 1, x as i64, &mut expect, &mut q);
            try_push(y as i64 + 1, x as i64, &mut expect, &mut q);
            try_push(y as i64, x as i64 - 1, &mut expect, &mut q);
            try_push(y as i64, x as i64 + 1, &mut expect, &mut q);
        }
        assert_eq!(rec, expect);
    }

    #[test]
    fn hybrid_matches_iterative_fixpoint_bit_exact() {
        for seed in 0..6u64 {
            let img = rand_int_image(10, 13, 100 + seed);
            let se = StructuringElement::disk(2);
            let marker = erode(&img, &se).unwrap();
            let fast = reconstruct_by_dilation(&marker, &img).unwrap();
            let slow = reconstruct_iterative(&marker, &img);
            assert_eq!(fast, slow, "seed {}", seed);
            // One more geodesic dilation changes nothing.
            assert_eq!(geodesic_dilate_step(&fast, &img), fast);
        }
    }

    #[test]
    fn opening_preserves_large_square_removes_small_dot() {
        // 32x32, dark background 1, bright 9x9 square at 40, a 2x2 bright dot.
        let mut img = Array2::from_elem((32, 32), 1.0);
        for y in 5..14 {
            for x in 5..14 {
                img[[y, x]] = 40.0;
            }
        }
        img[[25, 25]] = 30.0;
        img[[25, 26]] = 30.0;
        img[[26, 25]] = 30.0;
        img[[26, 26]] = 30.0;
        let se = StructuringElement::disk(3);
        let open = opening_by_reconstruction(&img, &se).unwrap();
        // Square strictly larger than the SE: exactly preserved.
        for y in 5..14 {
            for x in 5..14 {
                assert_eq!(open[[y, x]], 40.0);
            }
        }
        // Dot smaller than the SE: flattened to the background.
        assert_eq!(open[[25, 25]], 1.0);
        assert_eq!(open[[26, 26]], 1.0);
        // Constant image unchanged.
        let flat = Array2::from_elem((32, 32), 5.0);
        assert_eq!(opening_by_reconstruction(&flat, &se).unwrap(), flat);
    }

    #[test]
    fn closing_fills_small_dark_dot() {
        let mut img = Array2::from_elem((16, 16), 10.0);
        img[[8, 8]] = 2.0;
        let se = StructuringElement::disk(2);
        let closed = closing_by_reconstruction(&img, &se).unwrap();
        assert_eq!(closed[[8, 8]], 10.0);
        for (c, i) in closed.iter().zip(img.iter()) {
            assert!(c >= i);
        }
        // Idempotence, exact on integer-valued images.
        let twice = closing_by_reconstruction(&closed, &se).unwrap();
        assert_eq!(twice, closed);
    }

    #[test]
    fn closing_equals_complement_of_opening() {
        let img = rand_int_image(12, 12, 33);
        let se = StructuringElement::disk(2);
        let closed = closing_by_reconstruction(&img, &se).unwrap();
        let m = 16.0; // integer gray levels are < 16
        let comp = img.mapv(|v| m - v);
        let open_comp = opening_by_reconstruction(&comp, &se).unwrap();
        let dual = open_comp.mapv(|v| m - v);
        assert_eq!(closed, dual);
    }

    #[test]
    fn opening_idempotent_and_shift_equivariant() {
        let img = rand_int_image(14, 14, 44);
        let se = StructuringElement::disk(2);
        let once = opening_by_reconstruction(&img, &se).unwrap();
        let twice = opening_by_reconstruction(&once, &se).unwrap();
        assert_eq!(once, twice);
        let shifted = img.mapv(|v| v + 5.0);
        let open_shifted = opening_by_reconstruction(&shifted, &se).unwrap();
        assert_eq!(open_shifted, once.mapv(|v| v + 5.0));
    }

    #[test]
    fn profile_column_counts_and_degenerate_case() {
        let mut rng = crate::rng::rng_from_seed(5);
        let data = Array2::from_shape_fn((24 * 24, 5), |_| rng.random::<f64>());
        let ms = SpectralCube::new(data, 24, 24).unwrap();

        let mp = build_morphological_profile(&ms, &[1, 2, 3, 4, 5]).unwrap();
        assert_eq!(mp.data().ncols(), 55); // (2*5+1) * 5 bands
        assert_eq!(mp.depth(), 5);

        let trivial = build_morphological_profile(&ms, &[]).unwrap();
        assert_eq!(trivial.data(), ms.data());

        assert!(matches!(
            build_morphological_profile(&ms, &[3, 2]),
            Err(Error::Parameter(_))
        ));
        assert!(matches!(
            build_morphological_profile(&ms, &[0, 1]),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn profile_granulometric_ordering() {
        // Smooth-ish random image; the ordering must hold at every pixel.
        let mut rng = crate::rng::rng_from_seed(9);
        let base = Array2::from_shape_fn((20 * 20, 1), |_| rng.random_range(0..64) as f64);
        let cube = SpectralCube::new(base, 20, 20).unwrap();
        let radii = [1usize, 2, 3];
        let mp = build_morphological_profile(&cube, &radii).unwrap();
        let p = radii.len();
        for px in 0..400 {
            // psi_3 <= psi_2 <= psi_1 <= y <= phi_1 <= phi_2 <= phi_3
            for j in 0..2 * p {
                assert!(
                    mp.data()[[px, j]] <= mp.data()[[px, j + 1]] + 0.0,
                    "ordering violated at pixel {} column {}",
                    px,
                    j
                );
            }
        }
    }

    #[test]
    fn default_radii_scaling() {
        assert_eq!(default_scaled_radii(256, 256), vec![10, 20, 50, 100]);
        assert_eq!(default_scaled_radii(64, 64), vec![3, 5, 13, 25]);
        assert_eq!(default_scaled_radii(26, 26), vec![1, 2, 5, 10]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn psi_phi_sandwich_random_images(seed in 0u64..1000) {
            let img = rand_int_image(10, 10, seed);
            let se = StructuringElement::disk(2);
            let psi = opening_by_reconstruction(&img, &se).unwrap();
            let phi = closing_by_reconstruction(&img, &se).unwrap();
            for ((p, i), f) in psi.iter().zip(img.iter()).zip(phi.iter()) {
                prop_assert!(p <= i && i <= f);
            }
            // Radius ordering.
            let se3 = StructuringElement::disk(3);
            let psi3 = opening_by_reconstruction(&img, &se3).unwrap();
            let phi3 = closing_by_reconstruction(&img, &se3).unwrap();
            for (a, b) in psi3.iter().zip(psi.iter()) {
                prop_assert!(a <= b);
            }
            for (a, b) in phi3.iter().zip(phi.iter()) {
                prop_assert!(a >= b);
            }
        }
    }
}
