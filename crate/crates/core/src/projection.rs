use crate::error::{Error, Result};
use crate::geometry::AcquisitionGeometry;

/// Time-stamped stack of optical-depth images, laid out `[view][row][col]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionSet {
    geometry: AcquisitionGeometry,
    data: Vec<f64>,
}

impl ProjectionSet {
    pub fn zeros(geometry: AcquisitionGeometry) -> Self {
        let n = geometry.n_views() * geometry.pixels_per_view();
        Self { geometry, data: vec![0.0; n] }
    }

    pub fn from_data(geometry: AcquisitionGeometry, data: Vec<f64>) -> Result<Self> {
        let n = geometry.n_views() * geometry.pixels_per_view();
        if data.len() != n {
            return Err(Error::invalid(format!("projection data has {} values, geometry needs {n}", data.len())));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite projection value at {pos}")));
        }
        Ok(Self { geometry, data })
    }

    pub fn geometry(&self) -> &AcquisitionGeometry {
        &self.geometry
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn image(&self, view: usize) -> &[f64] {
        let n = self.geometry.pixels_per_view();
        &self.data[view * n..(view + 1) * n]
    }

    pub fn image_mut(&mut self, view: usize) -> &mut [f64] {
        let n = self.geometry.pixels_per_view();
        &mut self.data[view * n..(view + 1) * n]
    }

    #[inline]
    pub fn get(&self, view: usize, row: usize, col: usize) -> f64 {
        let g = &self.geometry;
        self.data[(view * g.det_rows + row) * g.det_cols + col]
    }

    /// Pixelwise `self - other`.
    pub fn difference(&self, other: &ProjectionSet) -> Result<ProjectionSet> {
        self.geometry.check_same(&other.geometry, "projection difference")?;
        Ok(Self {
            geometry: self.geometry.clone(),
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Bilinear sample of a detector image at fractional `(row, col)`. Points in
/// the outer half-pixel rim take the edge value; beyond it, `None`.
#[inline]
pub(crate) fn bilinear(image: &[f64], rows: usize, cols: usize, row: f64, col: f64) -> Option<f64> {
    let (r0, r1, wr) = edge_weights(row, rows)?;
    let (c0, c1, wc) = edge_weights(col, cols)?;
    let a = image[r0 * cols + c0];
    let b = image[r0 * cols + c1];
    let c = image[r1 * cols + c0];
    let d = image[r1 * cols + c1];
    let top = a + wc * (b - a);
    let bottom = c + wc * (d - c);
    Some(top + wr * (bottom - top))
}

#[inline]
fn edge_weights(f: f64, n: usize) -> Option<(usize, usize, f64)> {
    if !(f >= -0.5 && f <= n as f64 - 0.5) {
        return None;
    }
    if n == 1 {
        return Some((0, 0, 0.0));
    }
    let fc = f.clamp(0.0, (n - 1) as f64);
    let i0 = (fc.floor() as usize).min(n - 2);
    Some((i0, i0 + 1, fc - i0 as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Beam;

    #[test]
    fn bilinear_interpolates_and_clips() {
        let img = [0.0, 1.0, 2.0, 3.0];
        assert_eq!(bilinear(&img, 2, 2, 0.5, 0.5), Some(1.5));
        assert_eq!(bilinear(&img, 2, 2, -0.4, 0.0), Some(0.0));
        assert_eq!(bilinear(&img, 2, 2, 1.6, 0.0), None);
    }

    #[test]
    fn from_data_checks_length() {
        let g = AcquisitionGeometry::circular(Beam::Parallel, 0.0, 2, 2, 1.0, 3, 3, 0.0).unwrap();
        assert!(ProjectionSet::from_data(g.clone(), vec![0.0; 12]).is_ok());
        assert!(ProjectionSet::from_data(g, vec![0.0; 11]).is_err());
    }
}
